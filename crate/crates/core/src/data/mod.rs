//! Corpus handling: label schema, samples, cleaning, loading and the
//! planted synthetic generator used for desk-scale verification.

mod clean;
mod labels;
mod loader;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use clean::clean_text;
pub use labels::{map_main_label, MappingRules};
pub use loader::{load_dataset, write_jsonl, FieldMap, Format, LoadOptions, LoadReport};
pub use synthetic::{generate_synthetic, HiddenLabels, SynthConfig, SyntheticCorpus};

/// Category names for both tasks. Index order is fixed for a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub multi_labels: Vec<String>,
    pub main_labels: Vec<String>,
}

impl Default for LabelSchema {
    fn default() -> Self {
        Self {
            multi_labels: ["race", "religion", "gender"].map(String::from).to_vec(),
            main_labels: ["hate", "offensive", "normal"].map(String::from).to_vec(),
        }
    }
}

impl LabelSchema {
    pub fn new(multi_labels: Vec<String>, main_labels: Vec<String>) -> Result<Self> {
        let schema = Self {
            multi_labels,
            main_labels,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<()> {
        if self.multi_labels.is_empty() {
            return Err(Error::Schema("need at least one multi-label category".into()));
        }
        if self.main_labels.len() < 2 {
            return Err(Error::Schema("need at least two main categories".into()));
        }
        for list in [&self.multi_labels, &self.main_labels] {
            let unique: BTreeSet<&String> = list.iter().collect();
            if unique.len() != list.len() {
                return Err(Error::Schema(format!("duplicate names in {list:?}")));
            }
        }
        Ok(())
    }

    /// Number of multi-label categories (C).
    pub fn num_multi(&self) -> usize {
        self.multi_labels.len()
    }

    /// Number of main categories (K).
    pub fn num_main(&self) -> usize {
        self.main_labels.len()
    }

    pub fn multi_index(&self, name: &str) -> Option<usize> {
        self.multi_labels
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name.trim()))
    }

    pub fn main_index(&self, name: &str) -> Option<usize> {
        self.main_labels
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name.trim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Gold,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub lang: String,
    pub multi_label: Option<Vec<u8>>,
    pub main_label: Option<usize>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Sample {
    pub fn unlabeled(id: impl Into<String>, text: impl Into<String>, lang: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            lang: lang.into(),
            multi_label: None,
            main_label: None,
            provenance: Provenance::Gold,
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.multi_label.is_some() || self.main_label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyText,
    MultiLabelLength { expected: usize, found: usize },
    MultiLabelValue(u8),
    MainLabelIndex(usize),
    PseudoUnlabeled,
}

impl Violation {
    /// Stable short key used in reject reports.
    pub fn key(&self) -> &'static str {
        match self {
            Violation::EmptyText => "empty text",
            Violation::MultiLabelLength { .. } => "multi_label length",
            Violation::MultiLabelValue(_) => "multi_label value",
            Violation::MainLabelIndex(_) => "main_label index",
            Violation::PseudoUnlabeled => "pseudo unlabeled",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MultiLabelLength { expected, found } => {
                write!(f, "multi_label length {found}, expected {expected}")
            }
            Violation::MultiLabelValue(v) => write!(f, "multi_label value {v} not in {{0,1}}"),
            Violation::MainLabelIndex(i) => write!(f, "main_label index {i} out of range"),
            other => f.write_str(other.key()),
        }
    }
}

/// Returns every invariant the sample breaks; empty means valid.
pub fn validate(sample: &Sample, schema: &LabelSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    if sample.text.trim().is_empty() {
        out.push(Violation::EmptyText);
    }
    if let Some(ml) = &sample.multi_label {
        if ml.len() != schema.num_multi() {
            out.push(Violation::MultiLabelLength {
                expected: schema.num_multi(),
                found: ml.len(),
            });
        }
        if let Some(&bad) = ml.iter().find(|&&v| v > 1) {
            out.push(Violation::MultiLabelValue(bad));
        }
    }
    if let Some(m) = sample.main_label {
        if m >= schema.num_main() {
            out.push(Violation::MainLabelIndex(m));
        }
    }
    if sample.provenance == Provenance::Pseudo && !sample.is_labeled() {
        out.push(Violation::PseudoUnlabeled);
    }
    out
}

/// The four partitions of a run. Unlabeled samples carry no gold labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl DatasetSplit {
    /// Checks id-disjointness across partitions and that the unlabeled pool
    /// holds no labels.
    pub fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, part) in self.partitions() {
            for s in part {
                if !seen.insert(s.id.as_str()) {
                    return Err(Error::Config(format!(
                        "sample id `{}` appears twice (second time in {name})",
                        s.id
                    )));
                }
            }
        }
        if let Some(s) = self.unlabeled.iter().find(|s| s.is_labeled()) {
            return Err(Error::Config(format!(
                "unlabeled sample `{}` carries labels",
                s.id
            )));
        }
        Ok(())
    }

    pub fn partitions(&self) -> [(&'static str, &[Sample]); 4] {
        [
            ("labeled", &self.labeled),
            ("unlabeled", &self.unlabeled),
            ("validation", &self.validation),
            ("test", &self.test),
        ]
    }
}

/// Carves validation and test partitions out of `labeled` by a seeded
/// shuffle; the rest stays labeled in its original order.
pub fn split_holdout(
    labeled: Vec<Sample>,
    unlabeled: Vec<Sample>,
    validation_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let ok = |f: f64| (0.0..1.0).contains(&f);
    if !ok(validation_fraction) || !ok(test_fraction) || validation_fraction + test_fraction >= 1.0 {
        return Err(Error::Config(format!(
            "hold-out fractions {validation_fraction} and {test_fraction} must be in [0, 1) with sum below 1"
        )));
    }
    let n = labeled.len();
    let n_val = (n as f64 * validation_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut role = vec![0u8; n];
    for &i in &order[..n_val] {
        role[i] = 1;
    }
    for &i in &order[n_val..n_val + n_test] {
        role[i] = 2;
    }
    let mut split = DatasetSplit {
        labeled: Vec::new(),
        unlabeled,
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (s, r) in labeled.into_iter().zip(role) {
        match r {
            1 => split.validation.push(s),
            2 => split.test.push(s),
            _ => split.labeled.push(s),
        }
    }
    split.check()?;
    Ok(split)
}
