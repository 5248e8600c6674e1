//! Config to corpus to encoded examples.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use mtst_core::data::{
    generate_synthetic, load_dataset, split_holdout, write_jsonl, DatasetSplit, LoadOptions, LoadReport, Sample,
};
use mtst_core::features::SensitiveLexicon;
use mtst_core::model::{Example, ModelConfig};
use mtst_core::prepare::Featurizer;

use crate::artifacts;
use crate::config::{DataSource, RunConfig};

pub const VOCAB_FILE: &str = "vocab.json";

pub struct Corpus {
    pub split: DatasetSplit,
    /// Per input file, keyed by role.
    pub reports: BTreeMap<String, LoadReport>,
}

fn load(path: &Path, cfg: &RunConfig) -> Result<(Vec<Sample>, LoadReport)> {
    let opts = LoadOptions {
        format: cfg.data.format,
        field_map: cfg.data.field_map.clone(),
        rules: cfg.data.rules.clone(),
        reject_budget: cfg.data.reject_budget,
    };
    Ok(load_dataset(path, &opts, &cfg.data.schema)?)
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    if cfg.data.source == DataSource::Synthetic {
        let c = generate_synthetic(&cfg.data.synthetic, cfg.seed)?;
        return Ok(Corpus {
            split: c.split,
            reports: BTreeMap::new(),
        });
    }
    let mut reports = BTreeMap::new();
    let labeled_path = cfg.data.labeled.as_ref().expect("validated");
    let (labeled, r) = load(labeled_path, cfg)?;
    reports.insert("labeled".to_string(), r);
    let mut unlabeled = Vec::new();
    if let Some(path) = &cfg.data.unlabeled {
        let (mut samples, r) = load(path, cfg)?;
        for s in &mut samples {
            s.multi_label = None;
            s.main_label = None;
        }
        unlabeled = samples;
        reports.insert("unlabeled".to_string(), r);
    }
    let split = match (&cfg.data.validation, &cfg.data.test) {
        (Some(v), Some(t)) => {
            let (validation, rv) = load(v, cfg)?;
            let (test, rt) = load(t, cfg)?;
            reports.insert("validation".to_string(), rv);
            reports.insert("test".to_string(), rt);
            let split = DatasetSplit {
                labeled,
                unlabeled,
                validation,
                test,
            };
            split.check()?;
            split
        }
        _ => split_holdout(
            labeled,
            unlabeled,
            cfg.data.validation_fraction,
            cfg.data.test_fraction,
            cfg.seed,
        )?,
    };
    Ok(Corpus { split, reports })
}

/// Writes the cleaned partitions and the per-file load reports.
pub fn write_corpus(dir: &Path, corpus: &Corpus, cfg: &RunConfig) -> Result<()> {
    let data = dir.join("data");
    artifacts::ensure_dir(&data)?;
    for (name, part) in corpus.split.partitions() {
        write_jsonl(&data.join(format!("{name}.jsonl")), part, &cfg.data.schema)?;
    }
    artifacts::write_json(&dir.join("load_report.json"), &corpus.reports)
}

pub fn lexicon(cfg: &RunConfig) -> Result<SensitiveLexicon> {
    match &cfg.preprocess.lexicon {
        Some(path) => Ok(SensitiveLexicon::load(path)?),
        None => Ok(SensitiveLexicon::placeholder()),
    }
}

pub struct Prepared {
    pub corpus: Corpus,
    pub featurizer: Featurizer,
    pub model: ModelConfig,
    pub train: Vec<Example>,
    pub unlabeled: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

impl Prepared {
    pub fn split(&self, name: &str) -> Option<&[Example]> {
        match name {
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Loads the corpus and trains the vocabulary on labeled and unlabeled text.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let corpus = load_corpus(cfg)?;
    let texts: Vec<&str> = corpus
        .split
        .labeled
        .iter()
        .chain(&corpus.split.unlabeled)
        .map(|s| s.text.as_str())
        .collect();
    let featurizer = Featurizer::fit(
        &texts,
        cfg.preprocess.vocab_size,
        lexicon(cfg)?,
        cfg.model.n_max,
        cfg.preprocess.len_cap,
    )?;
    Ok(with_featurizer(cfg, corpus, featurizer))
}

/// Encodes with an existing vocabulary, as stored in a run directory.
pub fn prepare_with_vocab(cfg: &RunConfig, run_dir: &Path) -> Result<Prepared> {
    let corpus = load_corpus(cfg)?;
    let path = run_dir.join(VOCAB_FILE);
    let vocab = mtst_core::tokenizer::Vocabulary::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let featurizer = Featurizer {
        vocab,
        lexicon: lexicon(cfg)?,
        n_max: cfg.model.n_max,
        len_cap: cfg.preprocess.len_cap,
    };
    Ok(with_featurizer(cfg, corpus, featurizer))
}

fn with_featurizer(cfg: &RunConfig, corpus: Corpus, featurizer: Featurizer) -> Prepared {
    let model = cfg
        .model
        .build(featurizer.vocab.len(), &cfg.data.schema, featurizer.feature_dim());
    Prepared {
        train: featurizer.examples(&corpus.split.labeled),
        unlabeled: featurizer.examples(&corpus.split.unlabeled),
        validation: featurizer.examples(&corpus.split.validation),
        test: featurizer.examples(&corpus.split.test),
        corpus,
        featurizer,
        model,
    }
}
