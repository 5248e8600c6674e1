//! Trainable tensors of the encoder, fusion layer and both heads, each
//! paired with a gradient buffer of identical shape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// Whether decoupled weight decay applies (matrices and embeddings).
    pub decay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIdx {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Tensor indices by role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub layers: Vec<LayerIdx>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    /// Feature dense layer; absent when the feature stream is disabled.
    pub feat: Option<(usize, usize)>,
    pub multi_w: usize,
    pub multi_b: usize,
    pub main_w: usize,
    pub main_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layout: Layout,
    pub tensors: Vec<Tensor>,
    pub grads: Vec<Vec<f64>>,
}

struct Builder {
    specs: Vec<(String, usize, usize, Init, bool)>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let decay = init == Init::Normal;
        self.specs.push((name, rows, cols, init, decay));
        self.specs.len() - 1
    }
}

fn build_layout(cfg: &ModelConfig) -> (Layout, Vec<(String, usize, usize, Init, bool)>) {
    let e = &cfg.encoder;
    let (d, f) = (e.hidden, e.ffn_dim());
    let mut b = Builder { specs: Vec::new() };
    let tok_emb = b.add("embed.token".into(), e.vocab_size, d, Init::Normal);
    let pos_emb = b.add("embed.position".into(), e.n_max, d, Init::Normal);
    let layers = (0..e.layers)
        .map(|l| {
            let mut t = |s: &str, r, c, i| b.add(format!("layer{l}.{s}"), r, c, i);
            LayerIdx {
                ln1_g: t("attn_norm.gain", 1, d, Init::Ones),
                ln1_b: t("attn_norm.shift", 1, d, Init::Zeros),
                wq: t("attn.query.weight", d, d, Init::Normal),
                bq: t("attn.query.bias", 1, d, Init::Zeros),
                wk: t("attn.key.weight", d, d, Init::Normal),
                bk: t("attn.key.bias", 1, d, Init::Zeros),
                wv: t("attn.value.weight", d, d, Init::Normal),
                bv: t("attn.value.bias", 1, d, Init::Zeros),
                wo: t("attn.out.weight", d, d, Init::Normal),
                bo: t("attn.out.bias", 1, d, Init::Zeros),
                ln2_g: t("ffn_norm.gain", 1, d, Init::Ones),
                ln2_b: t("ffn_norm.shift", 1, d, Init::Zeros),
                w1: t("ffn.up.weight", d, f, Init::Normal),
                b1: t("ffn.up.bias", 1, f, Init::Zeros),
                w2: t("ffn.down.weight", f, d, Init::Normal),
                b2: t("ffn.down.bias", 1, d, Init::Zeros),
            }
        })
        .collect();
    let lnf_g = b.add("final_norm.gain".into(), 1, d, Init::Ones);
    let lnf_b = b.add("final_norm.shift".into(), 1, d, Init::Zeros);
    let fd = cfg.fusion.feature_dense_dim;
    let feat = (fd > 0).then(|| {
        (
            b.add("fusion.dense.weight".into(), cfg.feature_dim, fd, Init::Normal),
            b.add("fusion.dense.bias".into(), 1, fd, Init::Zeros),
        )
    });
    let df = cfg.fused_dim();
    let multi_w = b.add("head.multi.weight".into(), df, cfg.num_multi, Init::Normal);
    let multi_b = b.add("head.multi.bias".into(), 1, cfg.num_multi, Init::Zeros);
    let main_w = b.add("head.main.weight".into(), df, cfg.num_main, Init::Normal);
    let main_b = b.add("head.main.bias".into(), 1, cfg.num_main, Init::Zeros);
    let layout = Layout {
        tok_emb,
        pos_emb,
        layers,
        lnf_g,
        lnf_b,
        feat,
        multi_w,
        multi_b,
        main_w,
        main_b,
    };
    (layout, b.specs)
}

impl ModelParams {
    /// Scaled-normal weights (std 0.02), zero biases, unit norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let tensors: Vec<Tensor> = specs
            .into_iter()
            .map(|(name, rows, cols, init, decay)| {
                let data = match init {
                    Init::Normal => (0..rows * cols).map(|_| normal.sample(&mut rng)).collect(),
                    Init::Zeros => vec![0.0; rows * cols],
                    Init::Ones => vec![1.0; rows * cols],
                };
                Tensor {
                    name,
                    rows,
                    cols,
                    data,
                    decay,
                }
            })
            .collect();
        let grads = tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Ok(Self {
            config: config.clone(),
            layout,
            tensors,
            grads,
        })
    }

    /// Rebuilds parameters from stored tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(config);
        if specs.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for ((name, rows, cols, _, _), t) in specs.iter().zip(&tensors) {
            if &t.name != name || t.rows != *rows || t.cols != *cols || t.data.len() != rows * cols {
                return Err(Error::Shape(format!(
                    "tensor `{}` ({}x{}) does not match `{name}` ({rows}x{cols})",
                    t.name, t.rows, t.cols
                )));
            }
        }
        let grads = tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Ok(Self {
            config: config.clone(),
            layout,
            tensors,
            grads,
        })
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        &self.tensors[idx].data
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Copies values (not gradients) from `other`.
    pub fn copy_values_from(&mut self, other: &ModelParams) {
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.data.copy_from_slice(&src.data);
        }
    }

    /// Adds every gradient of `other` into this buffer.
    pub fn add_grads_from(&mut self, other: &[Vec<f64>]) {
        for (dst, src) in self.grads.iter_mut().zip(other) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

/// Two distinct mutable gradient buffers at once.
pub(crate) fn grads_pair(grads: &mut [Vec<f64>], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = grads.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = grads.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}
