//! Turns cleaned samples into model inputs.

use crate::data::Sample;
use crate::error::Result;
use crate::features::{self, SensitiveLexicon};
use crate::model::Example;
use crate::tokenizer::Vocabulary;

#[derive(Debug, Clone)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub lexicon: SensitiveLexicon,
    pub n_max: usize,
    pub len_cap: usize,
}

impl Featurizer {
    /// Trains the subword vocabulary on `texts`.
    pub fn fit(
        texts: &[impl AsRef<str>],
        vocab_size: usize,
        lexicon: SensitiveLexicon,
        n_max: usize,
        len_cap: usize,
    ) -> Result<Self> {
        Ok(Self {
            vocab: Vocabulary::train(texts, vocab_size)?,
            lexicon,
            n_max,
            len_cap,
        })
    }

    pub fn feature_dim(&self) -> usize {
        features::feature_width(self.lexicon.num_groups())
    }

    pub fn example(&self, s: &Sample) -> Example {
        Example {
            id: s.id.clone(),
            seq: self.vocab.encode(&s.text, self.n_max),
            features: features::extract(&s.text, &self.lexicon, self.len_cap),
            multi_label: s.multi_label.clone(),
            main_label: s.main_label,
        }
    }

    pub fn examples(&self, samples: &[Sample]) -> Vec<Example> {
        samples.iter().map(|s| self.example(s)).collect()
    }
}
