//! Run configuration: one TOML document, defaults for every key, and
//! dotted-path overrides from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mtst_core::baseline::BaselineConfig;
use mtst_core::data::{FieldMap, Format, LabelSchema, MappingRules, SynthConfig};
use mtst_core::encoder::EncoderConfig;
use mtst_core::features::DEFAULT_LEN_CAP;
use mtst_core::model::{FusionConfig, ModelConfig};
use mtst_core::selftrain::SelfTrainConfig;
use mtst_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UserError;

pub const RESOLVED_CONFIG: &str = "config.toml";
pub const SEEDS_FILE: &str = "seeds.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub format: Format,
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    /// When absent, validation and test are carved out of `labeled`.
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub reject_budget: f64,
    pub schema: LabelSchema,
    pub rules: MappingRules,
    pub field_map: FieldMap,
    pub synthetic: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            format: Format::Jsonl,
            labeled: None,
            unlabeled: None,
            validation: None,
            test: None,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            reject_budget: 0.01,
            schema: LabelSchema::default(),
            rules: MappingRules::default(),
            field_map: FieldMap::default(),
            synthetic: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub vocab_size: usize,
    pub len_cap: usize,
    /// JSON `{group: [terms]}`; the built-in placeholder when absent.
    pub lexicon: Option<PathBuf>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8192,
            len_cap: DEFAULT_LEN_CAP,
            lexicon: None,
        }
    }
}

/// Encoder shape without the vocabulary size, which comes from the trained
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub n_max: usize,
    pub dropout_p: f64,
    pub fusion: FusionConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            layers: e.layers,
            hidden: e.hidden,
            heads: e.heads,
            ffn_mult: e.ffn_mult,
            n_max: e.n_max,
            dropout_p: e.dropout_p,
            fusion: FusionConfig::default(),
        }
    }
}

impl ModelSection {
    pub fn build(&self, vocab_size: usize, schema: &LabelSchema, feature_dim: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                layers: self.layers,
                hidden: self.hidden,
                heads: self.heads,
                ffn_mult: self.ffn_mult,
                vocab_size,
                n_max: self.n_max,
                dropout_p: self.dropout_p,
            },
            fusion: self.fusion.clone(),
            num_multi: schema.num_multi(),
            num_main: schema.num_main(),
            feature_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Thresholds written by `evaluate --sweep`.
    pub sweep: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            sweep: (1..=19).map(|i| f64::from(i) * 0.05).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives data generation, hold-out splitting and parameter init.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub selftrain: SelfTrainConfig,
    pub baseline: BaselineConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            selftrain: SelfTrainConfig::default(),
            baseline: BaselineConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub seed: u64,
    pub train_seed: u64,
    pub baseline_seed: u64,
}

impl RunConfig {
    pub fn seeds(&self) -> Seeds {
        Seeds {
            seed: self.seed,
            train_seed: self.train.seed,
            baseline_seed: self.baseline.lr.seed,
        }
    }

    /// Checks cross-section consistency and every component config.
    pub fn validate(&self) -> Result<()> {
        self.data.schema.check()?;
        if self.data.source == DataSource::Synthetic && self.data.synthetic.schema != self.data.schema {
            bail!(UserError(
                "data.synthetic.schema must equal data.schema".into()
            ));
        }
        if self.data.source == DataSource::Files && self.data.labeled.is_none() {
            bail!(UserError("data.labeled is required when data.source = \"files\"".into()));
        }
        if self.data.validation.is_some() != self.data.test.is_some() {
            bail!(UserError("data.validation and data.test must be given together".into()));
        }
        self.train.validate()?;
        self.selftrain.validate()?;
        self.baseline.lr.validate()?;
        let probe = self.model.build(mtst_core::tokenizer::BYTE_FLOOR, &self.data.schema, 1);
        probe.validate()?;
        if self.preprocess.vocab_size < mtst_core::tokenizer::BYTE_FLOOR {
            bail!(UserError(format!(
                "preprocess.vocab_size must be at least {}",
                mtst_core::tokenizer::BYTE_FLOOR
            )));
        }
        if self.evaluate.sweep.iter().any(|t| !(0.0..=1.0).contains(t)) {
            bail!(UserError("evaluate.sweep thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing the resolved config")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        crate::artifacts::write_text(&dir.join(RESOLVED_CONFIG), &self.to_toml()?)?;
        crate::artifacts::write_json(&dir.join(SEEDS_FILE), &self.seeds())
    }
}

/// Parses `value` as a TOML scalar or array, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!(UserError(format!("malformed config key `{key}`")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => bail!(UserError(format!("config key `{key}`: `{part}` is not a section"))),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Ordered `key=value` overrides. The same key given twice with different
/// values is a conflict.
#[derive(Debug, Default, Clone)]
pub struct Overrides(BTreeMap<String, String>);

impl Overrides {
    pub fn push(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let value = value.into();
        match self.0.get(key) {
            Some(prev) if *prev != value => bail!(UserError(format!(
                "conflicting values for `{key}`: `{prev}` and `{value}`"
            ))),
            _ => {
                self.0.insert(key.to_string(), value);
                Ok(())
            }
        }
    }

    pub fn push_assignment(&mut self, assignment: &str) -> Result<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            bail!(UserError(format!("expected key=value, got `{assignment}`")));
        };
        self.push(k.trim(), v.trim())
    }
}

/// Defaults, then the optional file, then overrides; unknown keys anywhere
/// are rejected by name.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UserError(format!("cannot read config {}: {e}", path.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| UserError(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in &overrides.0 {
        set_path(&mut table, k, parse_value(v))?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| UserError(format!("invalid config: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}
