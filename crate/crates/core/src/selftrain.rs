//! Iterative pseudo-labeling with a decaying confidence threshold.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{self, Example, Prediction, DEFAULT_THRESHOLD};
use crate::params::ModelParams;
use crate::trainer::{self, TrainConfig, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    /// Accept when the top main-class probability exceeds the threshold.
    #[default]
    MainConfidence,
    /// Additionally require every category decision to be that confident.
    JointConfidence,
}

impl std::str::FromStr for AcceptanceRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main_confidence" | "main" => Ok(Self::MainConfidence),
            "joint_confidence" | "joint" => Ok(Self::JointConfidence),
            other => Err(Error::Config(format!("unknown acceptance rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    pub tau_init: f64,
    pub tau_min: f64,
    pub alpha: f64,
    /// Zero disables pseudo-labeling; only the initial fit runs.
    pub iterations: usize,
    pub acceptance_rule: AcceptanceRule,
    pub remove_accepted: bool,
    /// Retrain each iteration from the initial parameters instead of
    /// continuing from the previous iteration.
    pub from_scratch: bool,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self {
            tau_init: 0.9,
            tau_min: 0.85,
            alpha: 0.02,
            iterations: 5,
            acceptance_rule: AcceptanceRule::MainConfidence,
            remove_accepted: true,
            from_scratch: false,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min <= self.tau_init) || !(self.alpha >= 0.0) {
            return Err(Error::Config("self-training needs tau_min <= tau_init and alpha >= 0".into()));
        }
        if !(self.tau_min > 0.0 && self.tau_init < 1.0) {
            return Err(Error::Config("self-training thresholds must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Threshold used at each iteration: starts at `tau_init` and decays by
/// `alpha` after every iteration, never below `tau_min`.
pub fn tau_schedule(cfg: &SelfTrainConfig) -> Vec<f64> {
    let mut tau = cfg.tau_init;
    let mut out = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        out.push(tau);
        tau = cfg.tau_min.max(tau - cfg.alpha);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub id: String,
    pub multi_label: Vec<u8>,
    pub main_label: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelBatch {
    pub iteration: usize,
    pub tau_used: f64,
    pub accepted: Vec<PseudoLabel>,
}

/// Confidence of a prediction under `rule`.
pub fn confidence(pred: &Prediction, rule: AcceptanceRule) -> f64 {
    let main = pred.main_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match rule {
        AcceptanceRule::MainConfidence => main,
        AcceptanceRule::JointConfidence => pred
            .multi_probs
            .iter()
            .map(|&p| p.max(1.0 - p))
            .fold(main, f64::min),
    }
}

/// Accepts every prediction whose confidence strictly exceeds `tau`, in
/// input order.
pub fn select_pseudo(
    preds: &[(String, Prediction)],
    tau: f64,
    rule: AcceptanceRule,
    iteration: usize,
) -> PseudoLabelBatch {
    let accepted = preds
        .iter()
        .filter_map(|(id, pred)| {
            let c = confidence(pred, rule);
            (c > tau).then(|| {
                let (multi_label, main_label) = model::binarize(pred, DEFAULT_THRESHOLD);
                PseudoLabel {
                    id: id.clone(),
                    multi_label,
                    main_label,
                    confidence: c,
                }
            })
        })
        .collect();
    PseudoLabelBatch {
        iteration,
        tau_used: tau,
        accepted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based; iteration 0 is the initial supervised fit.
    pub iteration: usize,
    pub tau_used: Option<f64>,
    pub accepted: usize,
    pub labeled_size: usize,
    pub unlabeled_size: usize,
    pub retrained: bool,
    pub train_log: Option<TrainLog>,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub params: ModelParams,
    pub batches: Vec<PseudoLabelBatch>,
    /// Iteration 0 followed by every pseudo-labeling iteration run.
    pub records: Vec<IterationRecord>,
    /// Final labeled pool, gold samples first.
    pub labeled: Vec<Example>,
    pub pseudo_ids: BTreeSet<String>,
}

/// Callback invoked after every iteration (including the initial fit) with
/// the record, that iteration's batch and the current parameters.
pub type Observer<'a> = dyn FnMut(&IterationRecord, Option<&PseudoLabelBatch>, &ModelParams) -> Result<()> + 'a;

pub fn self_train(
    labeled: &[Example],
    unlabeled: &[Example],
    validation: &[Example],
    params: ModelParams,
    train_cfg: &TrainConfig,
    cfg: &SelfTrainConfig,
    observer: &mut Observer<'_>,
) -> Result<SelfTrainOutcome> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::EmptyDataset("labeled pool".into()));
    }
    if unlabeled.is_empty() && cfg.iterations > 0 {
        return Err(Error::EmptyDataset("unlabeled pool".into()));
    }
    let held_out: BTreeSet<&str> = validation.iter().map(|e| e.id.as_str()).collect();
    if let Some(e) = unlabeled.iter().find(|e| held_out.contains(e.id.as_str())) {
        return Err(Error::Config(format!("unlabeled sample `{}` also appears in validation", e.id)));
    }

    let initial = params.clone();
    let mut pool_l: Vec<Example> = labeled.to_vec();
    let mut pool_u: Vec<Example> = unlabeled.to_vec();
    let mut in_l: BTreeSet<String> = pool_l.iter().map(|e| e.id.clone()).collect();
    let mut pseudo_ids = BTreeSet::new();

    let (mut params, log) = trainer::train(&pool_l, validation, params, train_cfg)?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        tau_used: None,
        accepted: 0,
        labeled_size: pool_l.len(),
        unlabeled_size: pool_u.len(),
        retrained: true,
        train_log: Some(log),
    }];
    observer(&records[0], None, &params)?;

    let mut batches = Vec::new();
    for (t, tau) in tau_schedule(cfg).into_iter().enumerate() {
        let iteration = t + 1;
        let preds = metrics::predict_all(&params, &pool_u)?;
        let tagged: Vec<(String, Prediction)> = pool_u.iter().map(|e| e.id.clone()).zip(preds).collect();
        let batch = select_pseudo(&tagged, tau, cfg.acceptance_rule, iteration);

        let accepted: BTreeSet<&str> = batch.accepted.iter().map(|p| p.id.as_str()).collect();
        let by_id: std::collections::BTreeMap<&str, &Example> = pool_u.iter().map(|e| (e.id.as_str(), e)).collect();
        for pl in &batch.accepted {
            if in_l.contains(&pl.id) {
                continue;
            }
            let mut ex = by_id[pl.id.as_str()].clone();
            ex.multi_label = Some(pl.multi_label.clone());
            ex.main_label = Some(pl.main_label);
            in_l.insert(pl.id.clone());
            pseudo_ids.insert(pl.id.clone());
            pool_l.push(ex);
        }
        if cfg.remove_accepted {
            pool_u.retain(|e| !accepted.contains(e.id.as_str()));
        }

        let exhausted = batch.accepted.is_empty() && tau <= cfg.tau_min;
        let mut record = IterationRecord {
            iteration,
            tau_used: Some(tau),
            accepted: batch.accepted.len(),
            labeled_size: pool_l.len(),
            unlabeled_size: pool_u.len(),
            retrained: false,
            train_log: None,
        };
        if !exhausted {
            let start = if cfg.from_scratch { initial.clone() } else { params };
            let iter_cfg = TrainConfig {
                seed: train_cfg.seed.wrapping_add(iteration as u64),
                ..train_cfg.clone()
            };
            let (p, log) = trainer::train(&pool_l, validation, start, &iter_cfg)?;
            params = p;
            record.retrained = true;
            record.train_log = Some(log);
        }
        observer(&record, Some(&batch), &params)?;
        records.push(record);
        batches.push(batch);
        if exhausted || pool_u.is_empty() {
            break;
        }
    }

    Ok(SelfTrainOutcome {
        params,
        batches,
        records,
        labeled: pool_l,
        pseudo_ids,
    })
}
