//! Feature fusion, the two prediction heads and the joint loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{self, EncoderConfig, EncoderTape, Mode};
use crate::error::{Error, Result};
use crate::nn;
use crate::params::{grads_pair, ModelParams};
use crate::tokenizer::TokenSequence;

/// Probability clamp for the cross-entropy terms.
pub const PROB_EPS: f64 = 1e-12;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Width of the transformed feature vector; 0 disables the feature stream.
    pub feature_dense_dim: usize,
    pub feature_dropout_p: f64,
    /// Weight of the multi-label loss in the joint objective.
    pub lambda: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            feature_dense_dim: 16,
            feature_dropout_p: 0.3,
            lambda: 0.7,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("fusion.lambda {} outside [0, 1]", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.feature_dropout_p) {
            return Err(Error::Config(format!(
                "fusion.feature_dropout_p {} outside [0, 1)",
                self.feature_dropout_p
            )));
        }
        Ok(())
    }
}

/// Everything needed to lay out the parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    /// Number of multi-label categories.
    pub num_multi: usize,
    /// Number of main-task classes.
    pub num_main: usize,
    /// Length of the handcrafted feature vector.
    pub feature_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            fusion: FusionConfig::default(),
            num_multi: 3,
            num_main: 3,
            feature_dim: crate::features::feature_width(2),
        }
    }
}

impl ModelConfig {
    /// Gradient-check scale: 2 layers, width 16, 2 heads, 8 positions,
    /// 3 categories, 3 classes, 4 features.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                layers: 2,
                hidden: 16,
                heads: 2,
                ffn_mult: 2,
                vocab_size,
                n_max: 8,
                dropout_p: 0.0,
            },
            fusion: FusionConfig {
                feature_dense_dim: 4,
                ..FusionConfig::default()
            },
            num_multi: 3,
            num_main: 3,
            feature_dim: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.fusion.validate()?;
        if self.num_multi == 0 || self.num_main < 2 {
            return Err(Error::Config(
                "need at least one multi-label category and two main classes".into(),
            ));
        }
        if self.fusion.feature_dense_dim > 0 && self.feature_dim == 0 {
            return Err(Error::Config("feature stream enabled with zero feature_dim".into()));
        }
        Ok(())
    }

    pub fn features_enabled(&self) -> bool {
        self.fusion.feature_dense_dim > 0
    }

    pub fn fused_dim(&self) -> usize {
        self.encoder.hidden + self.fusion.feature_dense_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub multi_probs: Vec<f64>,
    pub main_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FuseTape {
    phi: Vec<f64>,
    t: Vec<f64>,
}

/// `concat(h, tanh(dropout(phi) W + b))`, or `h` alone when the feature
/// stream is disabled.
pub fn fuse<R: Rng + ?Sized>(
    h: &[f64],
    phi: &[f64],
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, FuseTape)> {
    let cfg = &params.config;
    if h.len() != cfg.encoder.hidden {
        return Err(Error::Shape(format!("h has {} entries, expected {}", h.len(), cfg.encoder.hidden)));
    }
    let Some((w, b)) = params.layout.feat else {
        return Ok((h.to_vec(), FuseTape { phi: Vec::new(), t: Vec::new() }));
    };
    if phi.len() != cfg.feature_dim {
        return Err(Error::Shape(format!(
            "feature vector has {} entries, expected {}",
            phi.len(),
            cfg.feature_dim
        )));
    }
    let mut phi = phi.to_vec();
    let p = cfg.fusion.feature_dropout_p;
    if mode == Mode::Train && p > 0.0 {
        let mask = nn::dropout_mask(phi.len(), p, rng);
        nn::apply_mask(&mut phi, Some(&mask));
    }
    let fd = cfg.fusion.feature_dense_dim;
    let t: Vec<f64> = nn::linear(&phi, 1, params.value(w), Some(params.value(b)), phi.len(), fd)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let mut fused = h.to_vec();
    fused.extend_from_slice(&t);
    Ok((fused, FuseTape { phi, t }))
}

/// Head logits for a fused vector: (multi, main).
pub fn logits(fused: &[f64], params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = &params.config;
    let df = cfg.fused_dim();
    if fused.len() != df {
        return Err(Error::Shape(format!("fused vector has {} entries, expected {df}", fused.len())));
    }
    let lay = &params.layout;
    let zm = nn::linear(fused, 1, params.value(lay.multi_w), Some(params.value(lay.multi_b)), df, cfg.num_multi);
    let zs = nn::linear(fused, 1, params.value(lay.main_w), Some(params.value(lay.main_b)), df, cfg.num_main);
    if zm.iter().chain(&zs).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("head logits".into()));
    }
    Ok((zm, zs))
}

pub fn probs_from_logits(multi_logits: &[f64], main_logits: &[f64]) -> Prediction {
    Prediction {
        multi_probs: multi_logits.iter().map(|&z| nn::sigmoid(z)).collect(),
        main_probs: nn::softmax(main_logits),
    }
}

pub fn predict(fused: &[f64], params: &ModelParams) -> Result<Prediction> {
    let (zm, zs) = logits(fused, params)?;
    Ok(probs_from_logits(&zm, &zs))
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy summed over categories.
pub fn loss_multi(pred: &Prediction, y: &[u8]) -> f64 {
    pred.multi_probs
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = clamp(p);
            if t == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// Categorical cross-entropy against class `z`.
pub fn loss_main(pred: &Prediction, z: usize) -> f64 {
    -clamp(pred.main_probs[z]).ln()
}

pub fn loss_joint(l_multi: f64, l_main: f64, lambda: f64) -> f64 {
    lambda * l_multi + (1.0 - lambda) * l_main
}

/// Thresholded categories and the argmax class (lowest index on ties).
pub fn binarize(pred: &Prediction, threshold: f64) -> (Vec<u8>, usize) {
    let multi = pred
        .multi_probs
        .iter()
        .map(|&p| u8::from(p >= threshold))
        .collect();
    let mut best = 0;
    for (i, &p) in pred.main_probs.iter().enumerate() {
        if p > pred.main_probs[best] {
            best = i;
        }
    }
    (multi, best)
}

/// A tokenized sample with its feature vector, ready for the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub seq: TokenSequence,
    pub features: Vec<f64>,
    pub multi_label: Option<Vec<u8>>,
    pub main_label: Option<usize>,
}

/// Recorded forward pass of the full model on one example.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    enc: EncoderTape,
    fuse: FuseTape,
    fused: Vec<f64>,
    pub prediction: Prediction,
}

pub fn forward<R: Rng + ?Sized>(
    seq: &TokenSequence,
    phi: &[f64],
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardPass> {
    let enc = encoder::forward(seq, params, mode, rng)?;
    let (fused, fuse_tape) = fuse(&enc.cls, phi, params, mode, rng)?;
    let prediction = predict(&fused, params)?;
    Ok(ForwardPass {
        enc: enc.tape,
        fuse: fuse_tape,
        fused,
        prediction,
    })
}

/// Eval-mode prediction.
pub fn infer(seq: &TokenSequence, phi: &[f64], params: &ModelParams) -> Result<Prediction> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    Ok(forward(seq, phi, params, Mode::Eval, &mut unused)?.prediction)
}

/// Backpropagates upstream logit gradients; `None` skips a head entirely.
pub fn backward(
    pass: &ForwardPass,
    d_multi: Option<&[f64]>,
    d_main: Option<&[f64]>,
    params: &mut ModelParams,
) -> Result<()> {
    let cfg = params.config.clone();
    let lay = params.layout.clone();
    let df = cfg.fused_dim();
    let mut dfused = vec![0.0; df];
    for (dz, w, b, width) in [
        (d_multi, lay.multi_w, lay.multi_b, cfg.num_multi),
        (d_main, lay.main_w, lay.main_b, cfg.num_main),
    ] {
        let Some(dz) = dz else { continue };
        if dz.len() != width {
            return Err(Error::Shape(format!("logit gradient has {} entries, expected {width}", dz.len())));
        }
        let (gw, gb) = grads_pair(&mut params.grads, w, b);
        let part = nn::linear_backward(&pass.fused, 1, &params.tensors[w].data, df, width, dz, gw, Some(gb));
        nn::add_assign(&mut dfused, &part);
    }
    let d = cfg.encoder.hidden;
    if let Some((w, b)) = lay.feat {
        let dpre: Vec<f64> = dfused[d..]
            .iter()
            .zip(&pass.fuse.t)
            .map(|(g, t)| g * (1.0 - t * t))
            .collect();
        let (gw, gb) = grads_pair(&mut params.grads, w, b);
        let fd = cfg.fusion.feature_dense_dim;
        nn::linear_backward(&pass.fuse.phi, 1, &params.tensors[w].data, cfg.feature_dim, fd, &dpre, gw, Some(gb));
    }
    encoder::backward(&pass.enc, &dfused[..d], params)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchLoss {
    pub total: f64,
    /// Mean BCE over samples carrying multi-labels (0 when none do).
    pub multi: f64,
    /// Mean CE over samples carrying a main label (0 when none do).
    pub main: f64,
}

fn check_labels(ex: &Example, cfg: &ModelConfig) -> Result<()> {
    if let Some(y) = &ex.multi_label {
        if y.len() != cfg.num_multi || y.iter().any(|&v| v > 1) {
            return Err(Error::Shape(format!("sample `{}` has a malformed multi-label vector", ex.id)));
        }
    }
    if let Some(z) = ex.main_label {
        if z >= cfg.num_main {
            return Err(Error::Shape(format!("sample `{}` main label {z} out of range", ex.id)));
        }
    }
    Ok(())
}

fn per_sample_rngs<R: Rng + ?Sized>(n: usize, mode: Mode, rng: &mut R) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|_| {
            let seed = if mode == Mode::Train { rng.random::<u64>() } else { 0 };
            ChaCha8Rng::seed_from_u64(seed)
        })
        .collect()
}

/// Masked joint loss over a batch. Each term is averaged over the samples
/// that carry that label kind.
pub fn batch_loss<R: Rng + ?Sized>(
    batch: &[&Example],
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<BatchLoss> {
    let lambda = params.config.fusion.lambda;
    let (mut sm, mut nm, mut ss, mut ns) = (0.0, 0usize, 0.0, 0usize);
    for (ex, mut r) in batch.iter().zip(per_sample_rngs(batch.len(), mode, rng)) {
        check_labels(ex, &params.config)?;
        let pass = forward(&ex.seq, &ex.features, params, mode, &mut r)?;
        if let Some(y) = &ex.multi_label {
            sm += loss_multi(&pass.prediction, y);
            nm += 1;
        }
        if let Some(z) = ex.main_label {
            ss += loss_main(&pass.prediction, z);
            ns += 1;
        }
    }
    let multi = if nm > 0 { sm / nm as f64 } else { 0.0 };
    let main = if ns > 0 { ss / ns as f64 } else { 0.0 };
    Ok(BatchLoss {
        total: loss_joint(multi, main, lambda),
        multi,
        main,
    })
}

/// [`batch_loss`] plus accumulation of its exact gradient into
/// `params.grads`. A term whose weight is zero is not backpropagated.
pub fn batch_loss_grad<R: Rng + ?Sized>(
    batch: &[&Example],
    params: &mut ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<BatchLoss> {
    let lambda = params.config.fusion.lambda;
    let nm = batch.iter().filter(|e| e.multi_label.is_some()).count();
    let ns = batch.iter().filter(|e| e.main_label.is_some()).count();
    let wm = if nm > 0 { lambda / nm as f64 } else { 0.0 };
    let ws = if ns > 0 { (1.0 - lambda) / ns as f64 } else { 0.0 };
    let (mut sm, mut ss) = (0.0, 0.0);
    for (ex, mut r) in batch.iter().zip(per_sample_rngs(batch.len(), mode, rng)) {
        check_labels(ex, &params.config)?;
        let pass = forward(&ex.seq, &ex.features, params, mode, &mut r)?;
        let pred = &pass.prediction;
        let d_multi = ex.multi_label.as_ref().map(|y| {
            sm += loss_multi(pred, y);
            pred.multi_probs
                .iter()
                .zip(y)
                .map(|(p, &t)| wm * (p - f64::from(t)))
                .collect::<Vec<_>>()
        });
        let d_main = ex.main_label.map(|z| {
            ss += loss_main(pred, z);
            pred.main_probs
                .iter()
                .enumerate()
                .map(|(c, p)| ws * (p - f64::from(u8::from(c == z))))
                .collect::<Vec<_>>()
        });
        let d_multi = d_multi.filter(|_| wm != 0.0);
        let d_main = d_main.filter(|_| ws != 0.0);
        if d_multi.is_some() || d_main.is_some() {
            backward(&pass, d_multi.as_deref(), d_main.as_deref(), params)?;
        }
    }
    let multi = if nm > 0 { sm / nm as f64 } else { 0.0 };
    let main = if ns > 0 { ss / ns as f64 } else { 0.0 };
    Ok(BatchLoss {
        total: loss_joint(multi, main, lambda),
        multi,
        main,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;

    fn pred(multi: &[f64], main: &[f64]) -> Prediction {
        Prediction {
            multi_probs: multi.to_vec(),
            main_probs: main.to_vec(),
        }
    }

    #[test]
    fn bce_hand_values() {
        assert!((loss_multi(&pred(&[0.5], &[]), &[1]) - std::f64::consts::LN_2).abs() < 1e-15);
        let want = -(0.9f64.ln() + 0.8f64.ln());
        assert!((loss_multi(&pred(&[0.9, 0.2], &[]), &[1, 0]) - want).abs() < 1e-15);
        assert!((want - 0.3285).abs() < 1e-4);
        assert!(loss_multi(&pred(&[1.0, 0.0], &[]), &[1, 0]) < 1e-10);
    }

    #[test]
    fn ce_hand_values() {
        let u = 1.0 / 3.0;
        assert!((loss_main(&pred(&[], &[u, u, u]), 0) - 3f64.ln()).abs() < 1e-15);
        assert!((loss_main(&pred(&[], &[0.7, 0.2, 0.1]), 1) - 1.6094).abs() < 1e-4);
        assert!(loss_main(&pred(&[], &[1.0, 0.0]), 0) < 1e-10);
        assert!(loss_main(&pred(&[], &[0.0, 1.0]), 0).is_finite());
    }

    #[test]
    fn joint_weighting() {
        assert_eq!(loss_joint(1.0, 2.0, 0.7), 1.3);
        assert_eq!(loss_joint(1.0, 2.0, 0.5), 1.5);
        assert_eq!(loss_joint(1.0, 5.0, 1.0), 1.0);
    }

    #[test]
    fn binarize_threshold_and_ties() {
        let (m, c) = binarize(&pred(&[0.49, 0.51], &[0.4, 0.4, 0.2]), DEFAULT_THRESHOLD);
        assert_eq!(m, vec![0, 1]);
        assert_eq!(c, 0);
        let (_, c) = binarize(&pred(&[], &[0.2, 0.4, 0.4]), 0.5);
        assert_eq!(c, 1);
    }

    #[test]
    fn zero_heads_give_uniform() {
        let mut p = ModelParams::init(&ModelConfig::tiny(40), 1).unwrap();
        for i in [p.layout.multi_w, p.layout.main_w] {
            p.tensors[i].data.fill(0.0);
        }
        let pr = predict(&vec![0.3; p.config.fused_dim()], &p).unwrap();
        assert!(pr.multi_probs.iter().all(|&v| v == 0.5));
        assert!(pr.main_probs.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn large_logit_dominates() {
        let pr = probs_from_logits(&[0.0], &[20.0, 0.0, 0.0]);
        assert!(pr.main_probs[0] > 0.999);
        let shifted = probs_from_logits(&[0.0], &[27.0, 7.0, 7.0]);
        for (a, b) in pr.main_probs.iter().zip(&shifted.main_probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_features_give_bias_activation() {
        let mut p = ModelParams::init(&ModelConfig::tiny(40), 1).unwrap();
        let (_, b) = p.layout.feat.unwrap();
        p.tensors[b].data = vec![0.1, -0.2, 0.3, 0.0];
        let h = vec![0.5; 16];
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let (fused, _) = fuse(&h, &[0.0; 4], &p, Mode::Eval, &mut r).unwrap();
        assert_eq!(&fused[..16], &h[..]);
        let want: Vec<f64> = [0.1f64, -0.2, 0.3, 0.0].iter().map(|v| v.tanh()).collect();
        assert_eq!(&fused[16..], &want[..]);
    }

    #[test]
    fn disabled_features_pass_h_through() {
        let mut cfg = ModelConfig::tiny(40);
        cfg.fusion.feature_dense_dim = 0;
        let p = ModelParams::init(&cfg, 1).unwrap();
        assert!(p.layout.feat.is_none());
        let h = vec![0.25; 16];
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(fuse(&h, &[], &p, Mode::Eval, &mut r).unwrap().0, h);
    }

    #[test]
    fn shape_errors() {
        let p = ModelParams::init(&ModelConfig::tiny(40), 1).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert!(fuse(&[0.0; 15], &[0.0; 4], &p, Mode::Eval, &mut r).is_err());
        assert!(fuse(&[0.0; 16], &[0.0; 3], &p, Mode::Eval, &mut r).is_err());
        assert!(predict(&[0.0; 3], &p).is_err());
    }

    #[test]
    fn bad_fusion_config_rejected() {
        let mut cfg = ModelConfig::tiny(40);
        cfg.fusion.lambda = 1.2;
        assert!(cfg.validate().is_err());
        cfg.fusion.lambda = 0.7;
        cfg.fusion.feature_dropout_p = 1.0;
        assert!(cfg.validate().is_err());
    }

    fn example(id: &str, ids: &[u32], multi: Option<Vec<u8>>, main: Option<usize>) -> Example {
        let mut full = vec![2];
        full.extend_from_slice(ids);
        full.push(3);
        let true_length = full.len();
        let mut attention_mask = vec![1; true_length];
        full.resize(8, 0);
        attention_mask.resize(8, 0);
        Example {
            id: id.into(),
            seq: TokenSequence {
                ids: full,
                attention_mask,
                true_length,
            },
            features: vec![0.2, 0.05, 0.4, 1.0],
            multi_label: multi,
            main_label: main,
        }
    }

    fn batch() -> Vec<Example> {
        vec![
            example("a", &[5, 6, 7], Some(vec![1, 0, 1]), Some(0)),
            example("b", &[9, 10], Some(vec![0, 0, 0]), Some(2)),
            example("c", &[11, 12, 13, 14], None, Some(1)),
            example("d", &[20], Some(vec![0, 1, 0]), None),
        ]
    }

    fn perturbed(cfg: &ModelConfig) -> ModelParams {
        let mut p = ModelParams::init(cfg, 2).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(8);
        for t in &mut p.tensors {
            for v in &mut t.data {
                *v += r.random_range(-0.3..0.3);
            }
        }
        p
    }

    fn grad_check(cfg: &ModelConfig, mode: Mode) {
        let mut p = perturbed(cfg);
        let data = batch();
        let refs: Vec<&Example> = data.iter().collect();
        let rng = ChaCha8Rng::seed_from_u64(5);
        batch_loss_grad(&refs, &mut p, mode, &mut rng.clone()).unwrap();
        let loss = |q: &ModelParams| batch_loss(&refs, q, mode, &mut rng.clone()).unwrap().total;
        let checks = check_gradients(&mut p, loss, 1e-5, |_| true);
        assert_eq!(checks.len(), p.tensors.len());
        for c in &checks {
            assert!(c.rel_error < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn joint_gradient_matches_fd_eval() {
        grad_check(&ModelConfig::tiny(40), Mode::Eval);
    }

    #[test]
    fn joint_gradient_matches_fd_with_dropout() {
        let mut cfg = ModelConfig::tiny(40);
        cfg.encoder.dropout_p = 0.2;
        grad_check(&cfg, Mode::Train);
    }

    #[test]
    fn loss_and_grad_agree_on_value() {
        let mut p = perturbed(&ModelConfig::tiny(40));
        let data = batch();
        let refs: Vec<&Example> = data.iter().collect();
        let a = batch_loss(&refs, &p, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let b = batch_loss_grad(&refs, &mut p, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total, loss_joint(a.multi, a.main, 0.7));
    }

    fn head_norms(lambda: f64) -> (f64, f64, f64, f64) {
        let mut cfg = ModelConfig::tiny(40);
        cfg.fusion.lambda = lambda;
        let mut p = perturbed(&cfg);
        let data = batch();
        let refs: Vec<&Example> = data.iter().collect();
        batch_loss_grad(&refs, &mut p, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let n = |i: usize| p.grads[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        let l = &p.layout;
        (n(l.multi_w), n(l.multi_b), n(l.main_w), n(l.main_b))
    }

    #[test]
    fn lambda_one_silences_main_head() {
        let (mw, mb, sw, sb) = head_norms(1.0);
        assert_eq!((sw, sb), (0.0, 0.0));
        assert!(mw > 0.0 && mb > 0.0);
    }

    #[test]
    fn lambda_zero_silences_multi_head() {
        let (mw, mb, sw, sb) = head_norms(0.0);
        assert_eq!((mw, mb), (0.0, 0.0));
        assert!(sw > 0.0 && sb > 0.0);
    }
}
