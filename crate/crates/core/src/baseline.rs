//! TF-IDF features with logistic-regression heads.

use std::collections::BTreeMap;

use icu_properties::props::Script;
use icu_properties::CodePointMapData;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::features::is_punctuation;
use crate::model::Prediction;
use crate::nn::{sigmoid, softmax};
use crate::optim::{lr_at, AdamW, LrDecay};

/// Sparse row as `(column, value)` pairs sorted by column.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    L2,
    None,
}

fn is_han(ch: char) -> bool {
    CodePointMapData::<Script>::new().get(ch) == Script::Han
}

/// Lowercased words split on whitespace and punctuation; every Han
/// codepoint is its own term.
pub fn word_terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() || is_punctuation(ch) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if is_han(ch) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        } else {
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub norm: Norm,
}

/// Smoothed idf `ln((1 + N) / (1 + df)) + 1`. Columns follow sorted term order.
pub fn fit_tfidf(corpus: &[impl AsRef<str>], norm: Norm) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::EmptyDataset("tf-idf corpus".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let mut terms = word_terms(doc.as_ref());
        terms.sort_unstable();
        terms.dedup();
        for t in terms {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = corpus.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (i, (term, count)) in df.into_iter().enumerate() {
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
        vocabulary.insert(term, i);
    }
    Ok(TfidfModel { vocabulary, idf, norm })
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Raw term counts over known columns; unseen terms are dropped.
    pub fn counts(&self, text: &str) -> BTreeMap<usize, f64> {
        let mut counts = BTreeMap::new();
        for t in word_terms(text) {
            if let Some(&col) = self.vocabulary.get(&t) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        counts
    }

    pub fn transform(&self, text: &str) -> SparseVec {
        let mut v: SparseVec = self
            .counts(text)
            .into_iter()
            .map(|(col, tf)| (col, tf * self.idf[col]))
            .collect();
        if self.norm == Norm::L2 {
            let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|(_, x)| *x /= norm);
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrTask {
    MainSoftmax,
    MultiOvr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrConfig {
    /// Coefficient of the `reg / 2 * ||W||^2` penalty; biases are not penalized.
    pub reg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            reg: 1e-6,
            epochs: 40,
            batch_size: 16,
            lr: 0.2,
            seed: 0,
        }
    }
}

impl LrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(Error::Config(format!("reg must be finite and >= 0, got {}", self.reg)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Targets for one classifier: a class index per row, or a 0/1 vector per row.
pub enum LrTargets<'a> {
    Main { classes: &'a [usize], num_classes: usize },
    Multi(&'a [&'a [u8]]),
}

/// Weights are stored `dim x outputs`. A degenerate output (single class
/// seen in training) always returns its fixed prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub task: LrTask,
    pub dim: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub constant: Option<Vec<f64>>,
    pub constant_columns: Vec<Option<f64>>,
}

impl LogReg {
    fn logits(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for &(col, v) in x {
            if col < self.dim {
                let row = &self.weights[col * self.outputs..(col + 1) * self.outputs];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += v * w;
                }
            }
        }
        out
    }

    pub fn predict(&self, x: &[(usize, f64)]) -> Vec<f64> {
        if let Some(c) = &self.constant {
            return c.clone();
        }
        let z = self.logits(x);
        match self.task {
            LrTask::MainSoftmax => softmax(&z),
            LrTask::MultiOvr => z
                .iter()
                .zip(&self.constant_columns)
                .map(|(&v, c)| c.unwrap_or_else(|| sigmoid(v)))
                .collect(),
        }
    }
}

/// Mean cross-entropy plus the L2 penalty, minimized with AdamW and a
/// linearly decaying step size.
pub fn train_lr(x: &[SparseVec], targets: LrTargets<'_>, dim: usize, cfg: &LrConfig) -> Result<LogReg> {
    cfg.validate()?;
    let (task, outputs, n) = match &targets {
        LrTargets::Main { classes, num_classes } => (LrTask::MainSoftmax, *num_classes, classes.len()),
        LrTargets::Multi(rows) => {
            let k = rows.first().map_or(0, |r| r.len());
            (LrTask::MultiOvr, k, rows.len())
        }
    };
    if n == 0 || outputs == 0 {
        return Err(Error::EmptyDataset("logistic regression training set".into()));
    }
    if x.len() != n {
        return Err(Error::LengthMismatch(format!("{} rows for {n} targets", x.len())));
    }
    let mut model = LogReg {
        task,
        dim,
        outputs,
        weights: vec![0.0; dim * outputs],
        bias: vec![0.0; outputs],
        constant: None,
        constant_columns: vec![None; outputs],
    };
    // Targets as dense rows.
    let y: Vec<Vec<f64>> = match &targets {
        LrTargets::Main { classes, .. } => classes
            .iter()
            .map(|&c| {
                if c >= outputs {
                    return Err(Error::Shape(format!("class {c} out of range {outputs}")));
                }
                let mut row = vec![0.0; outputs];
                row[c] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?,
        LrTargets::Multi(rows) => rows
            .iter()
            .map(|r| {
                if r.len() != outputs {
                    return Err(Error::Shape(format!("label width {} != {outputs}", r.len())));
                }
                Ok(r.iter().map(|&b| f64::from(b)).collect())
            })
            .collect::<Result<_>>()?,
    };
    let mut prior = vec![0.0; outputs];
    for row in &y {
        for (p, v) in prior.iter_mut().zip(row) {
            *p += v / n as f64;
        }
    }
    match task {
        LrTask::MainSoftmax => {
            if prior.iter().filter(|&&p| p > 0.0).count() < 2 {
                model.constant = Some(prior);
                return Ok(model);
            }
        }
        LrTask::MultiOvr => {
            for (c, &p) in model.constant_columns.iter_mut().zip(&prior) {
                if p == 0.0 || p == 1.0 {
                    *c = Some(p);
                }
            }
        }
    }

    let mut opt = AdamW::new([dim * outputs, outputs], 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let steps_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total = steps_per_epoch * cfg.epochs as u64;
    let mut gw = vec![0.0; dim * outputs];
    let mut gb = vec![0.0; outputs];
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for (g, w) in gw.iter_mut().zip(&model.weights) {
                *g = cfg.reg * w;
            }
            gb.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let p = model.predict(&x[i]);
                let d: Vec<f64> = p.iter().zip(&y[i]).map(|(p, t)| (p - t) * scale).collect();
                for (g, v) in gb.iter_mut().zip(&d) {
                    *g += v;
                }
                for &(col, v) in &x[i] {
                    if col < dim {
                        let row = &mut gw[col * outputs..(col + 1) * outputs];
                        for (g, dv) in row.iter_mut().zip(&d) {
                            *g += v * dv;
                        }
                    }
                }
            }
            let lr = lr_at(cfg.lr, LrDecay::Linear, step, total);
            opt.step(
                [
                    (model.weights.as_mut_slice(), gw.as_slice(), false),
                    (model.bias.as_mut_slice(), gb.as_slice(), false),
                ],
                lr,
            )?;
            step += 1;
        }
    }
    if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic regression weights".into()));
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub norm: Norm,
    pub lr: LrConfig,
}

/// Fitted vectorizer plus one classifier per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub tfidf: TfidfModel,
    pub num_multi: usize,
    pub num_main: usize,
    pub multi: Option<LogReg>,
    pub main: Option<LogReg>,
}

impl Baseline {
    /// Fits on labeled training samples only. The vectorizer sees the same texts.
    pub fn fit(train: &[Sample], num_multi: usize, num_main: usize, cfg: &BaselineConfig) -> Result<Self> {
        let labeled: Vec<&Sample> = train.iter().filter(|s| s.is_labeled()).collect();
        if labeled.is_empty() {
            return Err(Error::EmptyDataset("baseline training set has no labels".into()));
        }
        let texts: Vec<&str> = labeled.iter().map(|s| s.text.as_str()).collect();
        let tfidf = fit_tfidf(&texts, cfg.norm)?;
        let dim = tfidf.dim();

        let with_main: Vec<&Sample> = labeled.iter().copied().filter(|s| s.main_label.is_some()).collect();
        let main = if with_main.is_empty() {
            None
        } else {
            let x: Vec<SparseVec> = with_main.iter().map(|s| tfidf.transform(&s.text)).collect();
            let classes: Vec<usize> = with_main.iter().filter_map(|s| s.main_label).collect();
            let targets = LrTargets::Main {
                classes: &classes,
                num_classes: num_main,
            };
            Some(train_lr(&x, targets, dim, &cfg.lr)?)
        };

        let with_multi: Vec<&Sample> = labeled.iter().copied().filter(|s| s.multi_label.is_some()).collect();
        let multi = if with_multi.is_empty() {
            None
        } else {
            let x: Vec<SparseVec> = with_multi.iter().map(|s| tfidf.transform(&s.text)).collect();
            let rows: Vec<&[u8]> = with_multi.iter().filter_map(|s| s.multi_label.as_deref()).collect();
            if rows.iter().any(|r| r.len() != num_multi) {
                return Err(Error::Shape(format!("multi-label width differs from {num_multi}")));
            }
            Some(train_lr(&x, LrTargets::Multi(&rows), dim, &cfg.lr)?)
        };

        Ok(Self {
            tfidf,
            num_multi,
            num_main,
            multi,
            main,
        })
    }

    /// Missing heads fall back to 0.5 per label and a uniform class distribution.
    pub fn predict(&self, text: &str) -> Prediction {
        let x = self.tfidf.transform(text);
        Prediction {
            multi_probs: self
                .multi
                .as_ref()
                .map_or_else(|| vec![0.5; self.num_multi], |m| m.predict(&x)),
            main_probs: self
                .main
                .as_ref()
                .map_or_else(|| vec![1.0 / self.num_main as f64; self.num_main], |m| m.predict(&x)),
        }
    }

    pub fn predict_all(&self, samples: &[Sample]) -> Vec<Prediction> {
        samples.iter().map(|s| self.predict(&s.text)).collect()
    }
}
