//! Mini-batch AdamW training with learning-rate decay, early stopping on
//! validation loss, and resumable checkpoints.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint, RngState};
use crate::encoder::Mode;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::model::{self, Example, ModelConfig, DEFAULT_THRESHOLD};
use crate::optim::{self, AdamW, LrDecay};
use crate::params::ModelParams;

/// Fine-tuning learning rate for large pretrained encoders.
pub const FINE_TUNE_LR: f64 = 5e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: LrDecay,
    /// Epochs without validation-loss improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub grad_clip_norm: Option<f64>,
    /// Binarization threshold for validation metrics.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 16,
            lr: 3e-4,
            weight_decay: 0.01,
            lr_decay: LrDecay::Linear,
            early_stop_patience: 2,
            seed: 0,
            grad_clip_norm: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    /// Defaults with the pretrained fine-tuning learning rate.
    pub fn fine_tune_preset() -> Self {
        Self {
            lr: FINE_TUNE_LR,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train.lr and train.weight_decay must be non-negative".into()));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("train.grad_clip_norm must be positive".into()));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("train.threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_metrics: Option<MetricsReport>,
    pub lr_last: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochsExhausted,
    EarlyStopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were returned, when validation data exists.
    pub best_epoch: Option<usize>,
    /// Joint loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

impl TrainLog {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Everything needed to continue an interrupted run bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub optimizer: AdamW,
    pub rng: ChaCha8Rng,
    pub epochs_done: usize,
    pub best: Option<(f64, usize, ModelParams)>,
    pub bad_epochs: usize,
    pub log: TrainLog,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    kind: String,
    config: ModelConfig,
    train: TrainConfig,
    tensors: serde_json::Value,
    rng: RngState,
    optimizer_step: u64,
    weight_decay: f64,
    epochs_done: usize,
    best: Option<(f64, usize)>,
    bad_epochs: usize,
    log: TrainLog,
}

impl TrainState {
    fn fresh(params: ModelParams, cfg: &TrainConfig) -> Self {
        let optimizer = AdamW::for_params(&params, cfg.weight_decay);
        Self {
            params,
            optimizer,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            epochs_done: 0,
            best: None,
            bad_epochs: 0,
            log: TrainLog {
                epochs: Vec::new(),
                stop_reason: StopReason::EpochsExhausted,
                best_epoch: None,
                step_losses: Vec::new(),
            },
        }
    }

    pub fn save(&self, path: &Path, cfg: &TrainConfig) -> Result<()> {
        let mut ck = Checkpoint::default();
        let tensors = checkpoint::push_params(&mut ck, "", &self.params);
        for (i, (m, v)) in self.optimizer.m.iter().zip(&self.optimizer.v).enumerate() {
            ck.push(format!("adam.m.{i}"), m.clone());
            ck.push(format!("adam.v.{i}"), v.clone());
        }
        if let Some((_, _, best)) = &self.best {
            checkpoint::push_params(&mut ck, "best.", best);
        }
        let meta = StateMeta {
            kind: "train_state".into(),
            config: self.params.config.clone(),
            train: cfg.clone(),
            tensors,
            rng: RngState::capture(&self.rng),
            optimizer_step: self.optimizer.step,
            weight_decay: self.optimizer.weight_decay,
            epochs_done: self.epochs_done,
            best: self.best.as_ref().map(|(l, e, _)| (*l, *e)),
            bad_epochs: self.bad_epochs,
            log: self.log.clone(),
        };
        ck.meta = serde_json::to_value(meta)?;
        ck.write(path)
    }

    /// Loads a state written by [`TrainState::save`] and the config it ran with.
    pub fn load(path: &Path) -> Result<(Self, TrainConfig)> {
        let mut ck = Checkpoint::read(path)?;
        let meta: StateMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if meta.kind != "train_state" {
            return Err(Error::Checkpoint(format!("{} is not a training state", path.display())));
        }
        let params = checkpoint::take_params(&mut ck, "", &meta.config, &meta.tensors)?;
        let mut optimizer = AdamW::for_params(&params, meta.weight_decay);
        optimizer.step = meta.optimizer_step;
        for i in 0..params.tensors.len() {
            optimizer.m[i] = ck.take(&format!("adam.m.{i}"))?;
            optimizer.v[i] = ck.take(&format!("adam.v.{i}"))?;
        }
        let best = match meta.best {
            Some((loss, epoch)) => Some((
                loss,
                epoch,
                checkpoint::take_params(&mut ck, "best.", &meta.config, &meta.tensors)?,
            )),
            None => None,
        };
        let state = Self {
            params,
            optimizer,
            rng: meta.rng.restore()?,
            epochs_done: meta.epochs_done,
            best,
            bad_epochs: meta.bad_epochs,
            log: meta.log,
        };
        Ok((state, meta.train))
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Receives `last.ckpt` after every epoch and `best.ckpt` on improvement.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop (without finalizing) after this many total epochs; used to
    /// simulate interruption.
    pub halt_after_epochs: Option<usize>,
}

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

pub fn train(
    train_set: &[Example],
    validation: &[Example],
    params: ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    train_with(train_set, validation, TrainState::fresh(params, cfg), cfg, &TrainOptions::default())
}

/// Continues from the checkpoint at `path` with the config stored in it.
pub fn resume(
    train_set: &[Example],
    validation: &[Example],
    path: &Path,
    opts: &TrainOptions,
) -> Result<(ModelParams, TrainLog)> {
    let (state, cfg) = TrainState::load(path)?;
    train_with(train_set, validation, state, &cfg, opts)
}

pub fn start(params: ModelParams, cfg: &TrainConfig) -> TrainState {
    TrainState::fresh(params, cfg)
}

pub fn train_with(
    train_set: &[Example],
    validation: &[Example],
    mut st: TrainState,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("labeled training set".into()));
    }
    if let Some(ex) = train_set.iter().find(|e| e.multi_label.is_none() && e.main_label.is_none()) {
        return Err(Error::EmptyDataset(format!("training sample `{}` carries no labels", ex.id)));
    }
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let n = train_set.len();
    let per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total_steps = per_epoch * cfg.epochs as u64;

    while st.epochs_done < cfg.epochs && st.log.stop_reason != StopReason::EarlyStopped {
        if opts.halt_after_epochs.is_some_and(|h| st.epochs_done >= h) {
            return Ok((st.params, st.log));
        }
        let epoch = st.epochs_done;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut st.rng);
        let (mut sum, mut lr) = (0.0, cfg.lr);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            st.params.zero_grad();
            let loss = model::batch_loss_grad(&batch, &mut st.params, Mode::Train, &mut st.rng)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: b });
            }
            if let Some(c) = cfg.grad_clip_norm {
                optim::clip_grad_norm(&mut st.params, c);
            }
            lr = optim::lr_at(cfg.lr, cfg.lr_decay, st.optimizer.step, total_steps);
            st.optimizer.step_params(&mut st.params, lr)?;
            if !st.params.all_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {} batch {b}", epoch + 1)));
            }
            st.log.step_losses.push(loss.total);
            sum += loss.total;
        }
        let train_loss = sum / per_epoch as f64;

        let (val_loss, val_metrics) = if validation.is_empty() {
            (None, None)
        } else {
            let refs: Vec<&Example> = validation.iter().collect();
            let l = model::batch_loss(&refs, &st.params, Mode::Eval, &mut st.rng)?;
            let m = metrics::evaluate(&st.params, validation, cfg.threshold)?;
            (Some(l.total), Some(m))
        };
        st.epochs_done += 1;
        st.log.epochs.push(EpochLog {
            epoch: st.epochs_done,
            train_loss,
            val_loss,
            val_metrics,
            lr_last: lr,
        });

        let mut stop = false;
        if let Some(vl) = val_loss {
            if st.best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                st.best = Some((vl, st.epochs_done, st.params.clone()));
                st.bad_epochs = 0;
                if let Some(dir) = &opts.checkpoint_dir {
                    checkpoint::save_model(&dir.join(BEST_CHECKPOINT), &st.params)?;
                }
            } else {
                st.bad_epochs += 1;
                stop = cfg.early_stop_patience > 0 && st.bad_epochs >= cfg.early_stop_patience;
            }
        }
        if stop {
            st.log.stop_reason = StopReason::EarlyStopped;
        }
        if let Some(dir) = &opts.checkpoint_dir {
            st.save(&dir.join(LAST_CHECKPOINT), cfg)?;
        }
        if stop {
            break;
        }
    }

    let mut params = st.params;
    if let Some((_, epoch, best)) = st.best {
        params.copy_values_from(&best);
        st.log.best_epoch = Some(epoch);
    }
    params.zero_grad();
    Ok((params, st.log))
}
