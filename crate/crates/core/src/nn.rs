//! Dense row-major kernels with their backward passes.
//!
//! Matrices are flat `&[f64]` slices in row-major order. A linear layer's
//! weight is stored `in x out`, so `y = x W + b`.

use rand::Rng;

/// Layer-norm variance floor. Small enough that normalized rows have unit
/// variance to ~1e-9 at embedding scale.
pub const LN_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `x (n x k) * w (k x m) + b` -> `n x m`.
pub fn linear(x: &[f64], n: usize, w: &[f64], b: Option<&[f64]>, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), n * k);
    debug_assert_eq!(w.len(), k * m);
    let mut y = vec![0.0; n * m];
    for i in 0..n {
        let yi = &mut y[i * m..(i + 1) * m];
        if let Some(b) = b {
            yi.copy_from_slice(b);
        }
        for (p, &xv) in x[i * k..(i + 1) * k].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (yv, &wv) in yi.iter_mut().zip(&w[p * m..(p + 1) * m]) {
                *yv += xv * wv;
            }
        }
    }
    y
}

/// Backward of [`linear`]: accumulates `dW += x^T dy`, `db += sum(dy)` and
/// returns `dx = dy W^T`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    n: usize,
    w: &[f64],
    k: usize,
    m: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dx = vec![0.0; n * k];
    for i in 0..n {
        let dyi = &dy[i * m..(i + 1) * m];
        if dyi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let xi = &x[i * k..(i + 1) * k];
        let dxi = &mut dx[i * k..(i + 1) * k];
        for p in 0..k {
            let wrow = &w[p * m..(p + 1) * m];
            let mut acc = 0.0;
            for (a, b) in wrow.iter().zip(dyi) {
                acc += a * b;
            }
            dxi[p] = acc;
            let xv = xi[p];
            if xv != 0.0 {
                for (g, &d) in dw[p * m..(p + 1) * m].iter_mut().zip(dyi) {
                    *g += xv * d;
                }
            }
        }
    }
    if let Some(db) = db {
        for i in 0..n {
            for (g, &d) in db.iter_mut().zip(&dy[i * m..(i + 1) * m]) {
                *g += d;
            }
        }
    }
    dx
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm(x: &[f64], n: usize, d: usize, gain: &[f64], shift: &[f64]) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = gain[j] * h + shift[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub fn layer_norm_backward(
    cache: &NormCache,
    n: usize,
    d: usize,
    gain: &[f64],
    dy: &[f64],
    dgain: &mut [f64],
    dshift: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    for i in 0..n {
        let dyi = &dy[i * d..(i + 1) * d];
        if dyi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            dgain[j] += dyi[j] * xh[j];
            dshift[j] += dyi[j];
            let dxh = dyi[j] * gain[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let r = cache.rstd[i];
        for j in 0..d {
            let dxh = dyi[j] * gain[j];
            dx[i * d + j] = r * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Tanh-approximation GELU.
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

pub fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Inverted-dropout mask: entries are 0 or `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

pub fn apply_mask(x: &mut [f64], mask: Option<&[f64]>) {
    if let Some(m) = mask {
        for (v, k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn gelu_grad_matches_fd() {
        for &u in &[-3.0, -0.7, 0.0, 0.3, 1.1, 4.0] {
            assert!((gelu_grad(u) - fd(gelu, u)).abs() < 1e-8, "u={u}");
        }
    }

    #[test]
    fn sigmoid_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_backward_matches_fd() {
        let (n, k, m) = (2, 3, 2);
        let x = [0.1, -0.4, 0.7, 0.3, 0.2, -0.5];
        let w = [0.5, -0.1, 0.2, 0.4, -0.3, 0.6];
        let b = [0.05, -0.02];
        let dy = [1.0, -2.0, 0.5, 0.25];
        let loss = |x: &[f64], w: &[f64]| -> f64 {
            linear(x, n, w, Some(&b), k, m).iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        let mut dw = vec![0.0; k * m];
        let mut db = vec![0.0; m];
        let dx = linear_backward(&x, n, &w, k, m, &dy, &mut dw, Some(&mut db));
        for i in 0..x.len() {
            let f = |v: f64| {
                let mut xx = x;
                xx[i] = v;
                loss(&xx, &w)
            };
            assert!((dx[i] - fd(f, x[i])).abs() < 1e-8);
        }
        for i in 0..w.len() {
            let f = |v: f64| {
                let mut ww = w;
                ww[i] = v;
                loss(&x, &ww)
            };
            assert!((dw[i] - fd(f, w[i])).abs() < 1e-8);
        }
        assert_eq!(db, vec![1.5, -1.75]);
    }

    #[test]
    fn layer_norm_backward_matches_fd() {
        let (n, d) = (2, 4);
        let x = [0.3, -1.2, 0.8, 0.1, 2.0, 0.5, -0.4, 1.1];
        let g = [1.1, 0.9, 1.3, 0.7];
        let s = [0.1, 0.0, -0.2, 0.3];
        let dy = [0.4, -0.3, 0.2, 0.9, -1.0, 0.5, 0.3, 0.2];
        let loss = |x: &[f64]| -> f64 {
            layer_norm(x, n, d, &g, &s).0.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = layer_norm(&x, n, d, &g, &s);
        let mut dg = vec![0.0; d];
        let mut ds = vec![0.0; d];
        let dx = layer_norm_backward(&cache, n, d, &g, &dy, &mut dg, &mut ds);
        for i in 0..x.len() {
            let f = |v: f64| {
                let mut xx = x;
                xx[i] = v;
                loss(&xx)
            };
            assert!((dx[i] - fd(f, x[i])).abs() < 1e-7, "i={i}");
        }
    }

    #[test]
    fn normalized_rows_have_zero_mean_unit_variance() {
        let x: Vec<f64> = (0..32).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.013).collect();
        let (_, cache) = layer_norm(&x, 4, 8, &[1.0; 8], &[0.0; 8]);
        for row in cache.xhat.chunks(8) {
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }
}
