#![allow(dead_code)]

use mtst_core::data::{generate_synthetic, SynthConfig, SyntheticCorpus};
use mtst_core::features::{SensitiveLexicon, DEFAULT_LEN_CAP};
use mtst_core::model::{Example, ModelConfig};
use mtst_core::prepare::Featurizer;

pub struct Prepared {
    pub corpus: SyntheticCorpus,
    pub config: ModelConfig,
    pub train: Vec<Example>,
    pub unlabeled: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// Synthetic corpus encoded for the tiny model with a longer window.
pub fn prepare(synth: &SynthConfig, seed: u64, n_max: usize) -> Prepared {
    let corpus = generate_synthetic(synth, seed).unwrap();
    let texts: Vec<&str> = corpus
        .split
        .labeled
        .iter()
        .chain(&corpus.split.unlabeled)
        .map(|s| s.text.as_str())
        .collect();
    let f = Featurizer::fit(&texts, 1500, SensitiveLexicon::placeholder(), n_max, DEFAULT_LEN_CAP).unwrap();
    let mut config = ModelConfig::tiny(f.vocab.len());
    config.encoder.n_max = n_max;
    config.feature_dim = f.feature_dim();
    Prepared {
        config,
        train: f.examples(&corpus.split.labeled),
        unlabeled: f.examples(&corpus.split.unlabeled),
        validation: f.examples(&corpus.split.validation),
        test: f.examples(&corpus.split.test),
        corpus,
    }
}
