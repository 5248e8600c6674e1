//! Planted bilingual corpus.
//!
//! Two disjoint pseudo-languages: lowercase latin words ("en") and pairs of
//! CJK ideographs ("zh"). Every multi-label category owns a list of marker
//! words per language, drawn with Zipf-like weights so that some markers are
//! rare. A category is present iff one of its markers is in the text, and
//! the main label is a function of how many categories co-occur:
//! none -> least severe, one -> next, and so on, capped at the most severe.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, LabelSchema, Provenance, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub schema: LabelSchema,
    /// Labeled + unlabeled pool size.
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Share of the training pool that keeps its labels, in (0, 1].
    pub labeled_fraction: f64,
    /// Independent presence probability per category.
    pub category_prior: Vec<f64>,
    pub markers_per_category: usize,
    /// Exponent of the marker frequency law (0 = uniform).
    pub marker_zipf: f64,
    /// Chance that a present category plants a second marker.
    pub extra_marker_p: f64,
    pub filler_vocab: usize,
    pub min_filler: usize,
    pub max_filler: usize,
    /// Share of samples written in the second language.
    pub second_lang_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            schema: LabelSchema::default(),
            n_train: 1200,
            n_validation: 300,
            n_test: 600,
            labeled_fraction: 1.0,
            category_prior: vec![0.3, 0.3, 0.3],
            markers_per_category: 6,
            marker_zipf: 1.0,
            extra_marker_p: 0.5,
            filler_vocab: 300,
            min_filler: 4,
            max_filler: 12,
            second_lang_fraction: 0.5,
        }
    }
}

/// Gold labels of an unlabeled sample, kept out of the training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenLabels {
    pub multi_label: Vec<u8>,
    pub main_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub split: DatasetSplit,
    /// Evaluation-only gold labels for `split.unlabeled`, keyed by id.
    pub hidden: BTreeMap<String, HiddenLabels>,
    /// Marker words per language per category, most frequent first.
    pub markers: Vec<[Vec<String>; 2]>,
}

struct Lexicon {
    fillers: [Vec<String>; 2],
    markers: Vec<[Vec<String>; 2]>,
}

fn latin_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(4..=7);
    (0..len)
        .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
        .collect()
}

fn cjk_word(rng: &mut ChaCha8Rng) -> String {
    (0..2)
        .map(|_| char::from_u32(rng.random_range(0x4E00..0x9FA5u32)).expect("cjk"))
        .collect()
}

fn build_lexicon(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Lexicon {
    let mut used = BTreeSet::new();
    let mut draw = |lang: usize, rng: &mut ChaCha8Rng| loop {
        let w = if lang == 0 { latin_word(rng) } else { cjk_word(rng) };
        if used.insert(w.clone()) {
            return w;
        }
    };
    let fillers = [0, 1].map(|lang| (0..cfg.filler_vocab).map(|_| draw(lang, rng)).collect());
    let markers = (0..cfg.schema.num_multi())
        .map(|_| [0, 1].map(|lang| (0..cfg.markers_per_category).map(|_| draw(lang, rng)).collect()))
        .collect();
    Lexicon { fillers, markers }
}

/// Main-label index for `present` co-occurring categories: zero maps to the
/// last (least severe) label, each extra category moves one step up.
fn main_from_count(present: usize, k: usize) -> usize {
    k - 1 - present.min(k - 1)
}

pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SyntheticCorpus> {
    if !(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "labeled_fraction {} outside (0, 1]",
            cfg.labeled_fraction
        )));
    }
    cfg.schema.check()?;
    let c = cfg.schema.num_multi();
    if cfg.category_prior.len() != c {
        return Err(Error::Config(format!(
            "category_prior has {} entries, schema has {c} categories",
            cfg.category_prior.len()
        )));
    }
    if cfg.markers_per_category == 0
        || cfg.filler_vocab == 0
        || cfg.min_filler > cfg.max_filler
        || cfg.n_train == 0
    {
        return Err(Error::Config("degenerate synthetic corpus sizes".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = build_lexicon(cfg, &mut rng);
    let weights: Vec<f64> = (1..=cfg.markers_per_category)
        .map(|r| (r as f64).powf(-cfg.marker_zipf))
        .collect();
    let marker_dist = WeightedIndex::new(&weights).expect("positive weights");

    let total = cfg.n_train + cfg.n_validation + cfg.n_test;
    let mut samples = Vec::with_capacity(total);
    for n in 0..total {
        let lang = usize::from(rng.random_bool(cfg.second_lang_fraction));
        let n_filler = rng.random_range(cfg.min_filler..=cfg.max_filler);
        let mut words: Vec<&str> = (0..n_filler)
            .map(|_| lex.fillers[lang][rng.random_range(0..cfg.filler_vocab)].as_str())
            .collect();
        let mut multi = vec![0u8; c];
        for (k, bit) in multi.iter_mut().enumerate() {
            if !rng.random_bool(cfg.category_prior[k]) {
                continue;
            }
            *bit = 1;
            let copies = 1 + usize::from(rng.random_bool(cfg.extra_marker_p));
            for _ in 0..copies {
                let m = &lex.markers[k][lang][marker_dist.sample(&mut rng)];
                let pos = rng.random_range(0..=words.len());
                words.insert(pos, m);
            }
        }
        let present = multi.iter().filter(|&&b| b == 1).count();
        samples.push(Sample {
            id: format!("syn-{n:06}"),
            text: words.join(" "),
            lang: if lang == 0 { "en" } else { "zh" }.into(),
            multi_label: Some(multi),
            main_label: Some(main_from_count(present, cfg.schema.num_main())),
            provenance: Provenance::Gold,
        });
    }

    let mut rest = samples.split_off(cfg.n_validation);
    let validation = samples;
    let mut pool = rest.split_off(cfg.n_test);
    let test = rest;
    let n_labeled = ((cfg.labeled_fraction * cfg.n_train as f64).round() as usize).clamp(1, cfg.n_train);
    let unlabeled_gold = pool.split_off(n_labeled);
    let labeled = pool;

    let mut hidden = BTreeMap::new();
    let unlabeled = unlabeled_gold
        .into_iter()
        .map(|s| {
            hidden.insert(
                s.id.clone(),
                HiddenLabels {
                    multi_label: s.multi_label.clone().expect("planted"),
                    main_label: s.main_label.expect("planted"),
                },
            );
            Sample::unlabeled(s.id, s.text, s.lang)
        })
        .collect();

    let split = DatasetSplit {
        labeled,
        unlabeled,
        validation,
        test,
    };
    split.check()?;
    Ok(SyntheticCorpus {
        split,
        hidden,
        markers: lex.markers,
    })
}
