//! Pre-norm transformer encoder with learned absolute positions and a
//! hand-written backward pass.
//!
//! Only the active prefix (`true_length` rows) is computed. Padded rows of
//! `H` are left at zero: attention never reads them, so `h` is unaffected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, NormCache};
use crate::params::{grads_pair, ModelParams};
use crate::tokenizer::TokenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub vocab_size: usize,
    pub n_max: usize,
    pub dropout_p: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            heads: 4,
            ffn_mult: 4,
            vocab_size: 8192,
            n_max: 128,
            dropout_p: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ffn_mult", self.ffn_mult),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("encoder.{name} must be at least 1")));
            }
        }
        if self.n_max < 3 {
            return Err(Error::Config("encoder.n_max must be at least 3".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "encoder.hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("encoder.dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.hidden * self.ffn_mult
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct LayerTape {
    ln1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads x n x n attention weights.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    attn_drop: Option<Vec<f64>>,
    ln2: NormCache,
    b: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    ffn_drop: Option<Vec<f64>>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTape {
    n: usize,
    ids: Vec<u32>,
    emb_drop: Option<Vec<f64>>,
    layers: Vec<LayerTape>,
    lnf: NormCache,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `n_max x hidden`, row-major.
    pub states: Vec<f64>,
    /// Row 0 of `states`.
    pub cls: Vec<f64>,
    pub tape: EncoderTape,
}

fn drop_mask<R: Rng + ?Sized>(len: usize, p: f64, mode: Mode, rng: &mut R) -> Option<Vec<f64>> {
    (mode == Mode::Train && p > 0.0).then(|| nn::dropout_mask(len, p, rng))
}

fn check_finite(x: &[f64], what: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what()))
    }
}

fn check_sequence(seq: &TokenSequence, cfg: &EncoderConfig) -> Result<()> {
    if seq.ids.len() != cfg.n_max || seq.attention_mask.len() != cfg.n_max {
        return Err(Error::Shape(format!(
            "sequence length {} does not match n_max {}",
            seq.ids.len(),
            cfg.n_max
        )));
    }
    if seq.true_length == 0 || seq.true_length > cfg.n_max {
        return Err(Error::Shape(format!("true_length {} outside 1..={}", seq.true_length, cfg.n_max)));
    }
    if let Some(&id) = seq.ids[..seq.true_length].iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::CorruptSequence {
            id,
            size: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Multi-head scaled dot-product attention over `n` active rows.
fn attention(q: &[f64], k: &[f64], v: &[f64], n: usize, d: usize, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; heads * n * n];
    let mut ctx = vec![0.0; n * d];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..n {
            let qi = &q[i * d + off..i * d + off + dh];
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    let kj = &k[j * d + off..j * d + off + dh];
                    qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
                })
                .collect();
            let p = nn::softmax(&scores);
            let ci = &mut ctx[i * d + off..i * d + off + dh];
            for (j, &pj) in p.iter().enumerate() {
                for (c, &vv) in ci.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                    *c += pj * vv;
                }
            }
            probs[(h * n + i) * n..(h * n + i + 1) * n].copy_from_slice(&p);
        }
    }
    (probs, ctx)
}

fn attention_backward(
    lt: &LayerTape,
    n: usize,
    d: usize,
    heads: usize,
    dctx: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..n {
            let dci = &dctx[i * d + off..i * d + off + dh];
            if dci.iter().all(|&x| x == 0.0) {
                continue;
            }
            let p = &lt.probs[(h * n + i) * n..(h * n + i + 1) * n];
            let dp: Vec<f64> = (0..n)
                .map(|j| dci.iter().zip(&lt.v[j * d + off..j * d + off + dh]).map(|(a, b)| a * b).sum())
                .collect();
            let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            for j in 0..n {
                for (g, &c) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                    *g += p[j] * c;
                }
                let ds = p[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for t in 0..dh {
                    dq[i * d + off + t] += ds * lt.k[j * d + off + t];
                    dk[j * d + off + t] += ds * lt.q[i * d + off + t];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Runs the encoder on one sequence. `rng` is only drawn from in train mode.
pub fn forward<R: Rng + ?Sized>(
    seq: &TokenSequence,
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<EncoderOutput> {
    let cfg = &params.config.encoder;
    check_sequence(seq, cfg)?;
    let lay = &params.layout;
    let (d, f, n) = (cfg.hidden, cfg.ffn_dim(), seq.true_length);
    let p = cfg.dropout_p;
    let val = |i: usize| params.value(i);

    let tok = val(lay.tok_emb);
    let pos = val(lay.pos_emb);
    let mut x = vec![0.0; n * d];
    for (i, &id) in seq.ids[..n].iter().enumerate() {
        let id = id as usize;
        for j in 0..d {
            x[i * d + j] = tok[id * d + j] + pos[i * d + j];
        }
    }
    let emb_drop = drop_mask(n * d, p, mode, rng);
    nn::apply_mask(&mut x, emb_drop.as_deref());

    let mut layers = Vec::with_capacity(cfg.layers);
    for (l, li) in lay.layers.iter().enumerate() {
        let (a, ln1) = nn::layer_norm(&x, n, d, val(li.ln1_g), val(li.ln1_b));
        let q = nn::linear(&a, n, val(li.wq), Some(val(li.bq)), d, d);
        let k = nn::linear(&a, n, val(li.wk), Some(val(li.bk)), d, d);
        let v = nn::linear(&a, n, val(li.wv), Some(val(li.bv)), d, d);
        let (probs, ctx) = attention(&q, &k, &v, n, d, cfg.heads);
        let mut o = nn::linear(&ctx, n, val(li.wo), Some(val(li.bo)), d, d);
        let attn_drop = drop_mask(n * d, p, mode, rng);
        nn::apply_mask(&mut o, attn_drop.as_deref());
        nn::add_assign(&mut x, &o);

        let (b, ln2) = nn::layer_norm(&x, n, d, val(li.ln2_g), val(li.ln2_b));
        let u = nn::linear(&b, n, val(li.w1), Some(val(li.b1)), d, f);
        let g: Vec<f64> = u.iter().map(|&z| nn::gelu(z)).collect();
        let mut y = nn::linear(&g, n, val(li.w2), Some(val(li.b2)), f, d);
        let ffn_drop = drop_mask(n * d, p, mode, rng);
        nn::apply_mask(&mut y, ffn_drop.as_deref());
        nn::add_assign(&mut x, &y);
        check_finite(&x, || format!("encoder layer {l}"))?;

        layers.push(LayerTape {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            ln2,
            b,
            u,
            g,
            ffn_drop,
        });
    }

    let (out, lnf) = nn::layer_norm(&x, n, d, val(lay.lnf_g), val(lay.lnf_b));
    check_finite(&out, || "encoder final norm".to_string())?;
    let mut states = vec![0.0; cfg.n_max * d];
    states[..n * d].copy_from_slice(&out);
    let cls = out[..d].to_vec();
    Ok(EncoderOutput {
        states,
        cls,
        tape: EncoderTape {
            n,
            ids: seq.ids[..n].to_vec(),
            emb_drop,
            layers,
            lnf,
            hidden: d,
        },
    })
}

/// Accumulates the gradient of a loss with upstream `d_cls = dL/dh` into
/// `params.grads`.
pub fn backward(tape: &EncoderTape, d_cls: &[f64], params: &mut ModelParams) -> Result<()> {
    let cfg = params.config.encoder.clone();
    let (d, f, n) = (cfg.hidden, cfg.ffn_dim(), tape.n);
    if tape.hidden != d || tape.layers.len() != cfg.layers || d_cls.len() != d {
        return Err(Error::Shape("encoder tape does not match parameters".into()));
    }
    let lay = params.layout.clone();
    let (vals, grads) = (&params.tensors, &mut params.grads);
    let val = |i: usize| vals[i].data.as_slice();

    let mut dy = vec![0.0; n * d];
    dy[..d].copy_from_slice(d_cls);
    let (gg, gb) = grads_pair(grads, lay.lnf_g, lay.lnf_b);
    let mut dx = nn::layer_norm_backward(&tape.lnf, n, d, val(lay.lnf_g), &dy, gg, gb);

    for (li, lt) in lay.layers.iter().zip(&tape.layers).rev() {
        let mut dyb = dx.clone();
        nn::apply_mask(&mut dyb, lt.ffn_drop.as_deref());
        let (gw, gbias) = grads_pair(grads, li.w2, li.b2);
        let mut du = nn::linear_backward(&lt.g, n, val(li.w2), f, d, &dyb, gw, Some(gbias));
        for (g, &u) in du.iter_mut().zip(&lt.u) {
            *g *= nn::gelu_grad(u);
        }
        let (gw, gbias) = grads_pair(grads, li.w1, li.b1);
        let db = nn::linear_backward(&lt.b, n, val(li.w1), d, f, &du, gw, Some(gbias));
        let (gg, gb) = grads_pair(grads, li.ln2_g, li.ln2_b);
        let dres = nn::layer_norm_backward(&lt.ln2, n, d, val(li.ln2_g), &db, gg, gb);
        nn::add_assign(&mut dx, &dres);

        let mut dob = dx.clone();
        nn::apply_mask(&mut dob, lt.attn_drop.as_deref());
        let (gw, gbias) = grads_pair(grads, li.wo, li.bo);
        let dctx = nn::linear_backward(&lt.ctx, n, val(li.wo), d, d, &dob, gw, Some(gbias));
        let (dq, dk, dv) = attention_backward(lt, n, d, cfg.heads, &dctx);
        let mut da = vec![0.0; n * d];
        for (w, b, dproj) in [(li.wq, li.bq, &dq), (li.wk, li.bk, &dk), (li.wv, li.bv, &dv)] {
            let (gw, gbias) = grads_pair(grads, w, b);
            let part = nn::linear_backward(&lt.a, n, val(w), d, d, dproj, gw, Some(gbias));
            nn::add_assign(&mut da, &part);
        }
        let (gg, gb) = grads_pair(grads, li.ln1_g, li.ln1_b);
        let dres = nn::layer_norm_backward(&lt.ln1, n, d, val(li.ln1_g), &da, gg, gb);
        nn::add_assign(&mut dx, &dres);
    }

    nn::apply_mask(&mut dx, tape.emb_drop.as_deref());
    for (i, &id) in tape.ids.iter().enumerate() {
        let row = &dx[i * d..(i + 1) * d];
        let id = id as usize;
        nn::add_assign(&mut grads[lay.tok_emb][id * d..(id + 1) * d], row);
        nn::add_assign(&mut grads[lay.pos_emb][i * d..(i + 1) * d], row);
    }
    Ok(())
}
