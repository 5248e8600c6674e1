//! Central finite-difference check of accumulated gradients.

use crate::params::ModelParams;

/// Norms below this are treated as zero when forming relative errors; it
/// sits well above central-difference roundoff (about 1e-10 per entry
/// for unit-scale losses at step 1e-5).
pub const NORM_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `|a - n| / max(|a|, |n|, NORM_FLOOR)` over the whole tensor.
    pub rel_error: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Compares `params.grads` (already accumulated by the caller) against
/// central differences of `loss` with step `h`, for every tensor accepted
/// by `include`.
pub fn check_gradients(
    params: &mut ModelParams,
    loss: impl Fn(&ModelParams) -> f64,
    h: f64,
    include: impl Fn(&str) -> bool,
) -> Vec<TensorCheck> {
    let mut out = Vec::new();
    for ti in 0..params.tensors.len() {
        if !include(&params.tensors[ti].name) {
            continue;
        }
        let mut num = vec![0.0; params.tensors[ti].data.len()];
        for (j, slot) in num.iter_mut().enumerate() {
            let orig = params.tensors[ti].data[j];
            params.tensors[ti].data[j] = orig + h;
            let up = loss(params);
            params.tensors[ti].data[j] = orig - h;
            let down = loss(params);
            params.tensors[ti].data[j] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let ana = &params.grads[ti];
        let diff: Vec<f64> = ana.iter().zip(&num).map(|(a, b)| a - b).collect();
        let (an, nn) = (norm(ana), norm(&num));
        out.push(TensorCheck {
            name: params.tensors[ti].name.clone(),
            analytic_norm: an,
            numeric_norm: nn,
            rel_error: norm(&diff) / an.max(nn).max(NORM_FLOOR),
        });
    }
    out
}

pub fn max_rel_error(checks: &[TensorCheck]) -> f64 {
    checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
}
