//! Evaluation metrics for both tasks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::data::Sample;
use crate::model::{self, Example, Prediction};
use crate::params::ModelParams;

/// Anything carrying gold labels.
pub trait Labeled {
    fn id(&self) -> &str;
    fn multi_label(&self) -> Option<&[u8]>;
    fn main_label(&self) -> Option<usize>;
}

impl Labeled for Example {
    fn id(&self) -> &str {
        &self.id
    }
    fn multi_label(&self) -> Option<&[u8]> {
        self.multi_label.as_deref()
    }
    fn main_label(&self) -> Option<usize> {
        self.main_label
    }
}

impl Labeled for Sample {
    fn id(&self) -> &str {
        &self.id
    }
    fn multi_label(&self) -> Option<&[u8]> {
        self.multi_label.as_deref()
    }
    fn main_label(&self) -> Option<usize> {
        self.main_label
    }
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_pairs(truth: &[usize], pred: &[usize], k: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut cm = Self::new(k);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::Shape(format!("class index outside 0..{k}")));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    /// Binary matrix with class 1 as the positive class.
    pub fn binary(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self {
            counts: vec![vec![tn, fp], vec![fn_, tp]],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let s = cm.total();
    if s == 0 {
        return Err(Error::EmptyDataset("confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / s as f64)
}

/// Matthews correlation from the full confusion matrix. The K-class form
/// reduces to the binary formula for K = 2; a zero denominator yields 0.
pub fn mcc(cm: &ConfusionMatrix) -> Result<f64> {
    let s = cm.total() as f64;
    if s == 0.0 {
        return Err(Error::EmptyDataset("confusion matrix".into()));
    }
    let k = cm.k();
    let c = cm.trace() as f64;
    let t: Vec<f64> = (0..k).map(|i| cm.counts[i].iter().sum::<u64>() as f64).collect();
    let p: Vec<f64> = (0..k).map(|j| (0..k).map(|i| cm.counts[i][j]).sum::<u64>() as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let tt: f64 = t.iter().map(|a| a * a).sum();
    let den = ((s * s - pp) * (s * s - tt)).sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((c * s - pt) / den)
}

fn check_matrix<T>(a: &[Vec<u8>], b: &[Vec<T>]) -> Result<usize> {
    if a.is_empty() {
        return Err(Error::EmptyDataset("no samples to score".into()));
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!("{} rows vs {} rows", a.len(), b.len())));
    }
    let c = a[0].len();
    if a.iter().any(|r| r.len() != c) || b.iter().any(|r| r.len() != c) {
        return Err(Error::LengthMismatch("rows differ in width".into()));
    }
    Ok(c)
}

/// Mean per-sample intersection over union; a sample with both sets empty
/// scores 1.
pub fn jaccard_macro(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> Result<f64> {
    check_matrix(truth, pred)?;
    let total: f64 = truth
        .iter()
        .zip(pred)
        .map(|(y, p)| {
            let inter = y.iter().zip(p).filter(|(a, b)| **a == 1 && **b == 1).count();
            let union = y.iter().zip(p).filter(|(a, b)| **a == 1 || **b == 1).count();
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .sum();
    Ok(total / truth.len() as f64)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-label precision, recall and F1, each averaged over labels.
pub fn prf_macro(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> Result<(f64, f64, f64)> {
    let c = check_matrix(truth, pred)?;
    if c == 0 {
        return Err(Error::LengthMismatch("zero label columns".into()));
    }
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for k in 0..c {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (y, p) in truth.iter().zip(pred) {
            match (y[k], p[k]) {
                (1, 1) => tp += 1,
                (0, 1) => fp += 1,
                (1, 0) => fn_ += 1,
                _ => {}
            }
        }
        let prec = ratio(tp, tp + fp);
        let rec = ratio(tp, tp + fn_);
        let f1 = if prec + rec == 0.0 {
            0.0
        } else {
            2.0 * prec * rec / (prec + rec)
        };
        ps += prec;
        rs += rec;
        fs += f1;
    }
    let c = c as f64;
    Ok((ps / c, rs / c, fs / c))
}

/// Mean absolute and squared error of probabilities against binary truth.
pub fn mae_mse(truth: &[Vec<u8>], probs: &[Vec<f64>]) -> Result<(f64, f64)> {
    let c = check_matrix(truth, probs)?;
    let cells = (truth.len() * c) as f64;
    if cells == 0.0 {
        return Err(Error::LengthMismatch("zero label columns".into()));
    }
    let (mut a, mut s) = (0.0, 0.0);
    for (y, p) in truth.iter().zip(probs) {
        for (&t, &q) in y.iter().zip(p) {
            let d = (f64::from(t) - q).abs();
            a += d;
            s += d * d;
        }
    }
    Ok((a / cells, s / cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MainMetrics {
    pub accuracy: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiMetrics {
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub mae: f64,
    pub mse: f64,
    pub jaccard_macro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub main: Option<MainMetrics>,
    pub multi: Option<MultiMetrics>,
    pub counts: Option<ConfusionMatrix>,
    pub n_samples: usize,
}

pub const CSV_COLUMNS: [&str; 9] = [
    "n_samples",
    "accuracy",
    "mcc",
    "precision_macro",
    "recall_macro",
    "f1_macro",
    "mae",
    "mse",
    "jaccard_macro",
];

impl MetricsReport {
    /// Values in [`CSV_COLUMNS`] order; absent metrics are empty strings.
    pub fn csv_row(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let m = self.main.as_ref();
        let u = self.multi.as_ref();
        vec![
            self.n_samples.to_string(),
            f(m.map(|m| m.accuracy)),
            f(m.map(|m| m.mcc)),
            f(u.map(|u| u.precision_macro)),
            f(u.map(|u| u.recall_macro)),
            f(u.map(|u| u.f1_macro)),
            f(u.map(|u| u.mae)),
            f(u.map(|u| u.mse)),
            f(u.map(|u| u.jaccard_macro)),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds a report from per-sample predictions. Main metrics cover samples
/// with a main label, multi-label metrics those with a multi-label vector;
/// `with_multi = false` omits the latter entirely.
pub fn report_from_predictions<L: Labeled>(
    preds: &[Prediction],
    examples: &[L],
    threshold: f64,
    num_main: usize,
    with_multi: bool,
) -> Result<MetricsReport> {
    if preds.len() != examples.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} samples",
            preds.len(),
            examples.len()
        )));
    }
    if let Some(ex) = examples.iter().find(|e| e.main_label().is_none() && e.multi_label().is_none()) {
        return Err(Error::EmptyDataset(format!("sample `{}` is unlabeled", ex.id())));
    }
    let (mut zt, mut zp) = (Vec::new(), Vec::new());
    let (mut yt, mut yp, mut yprob) = (Vec::new(), Vec::new(), Vec::new());
    for (pred, ex) in preds.iter().zip(examples) {
        let (bits, class) = model::binarize(pred, threshold);
        if let Some(z) = ex.main_label() {
            zt.push(z);
            zp.push(class);
        }
        if let Some(y) = ex.multi_label() {
            yt.push(y.to_vec());
            yp.push(bits);
            yprob.push(pred.multi_probs.clone());
        }
    }
    let (main, counts) = if zt.is_empty() {
        (None, None)
    } else {
        let cm = ConfusionMatrix::from_pairs(&zt, &zp, num_main)?;
        (
            Some(MainMetrics {
                accuracy: accuracy(&cm)?,
                mcc: mcc(&cm)?,
            }),
            Some(cm),
        )
    };
    let multi = if with_multi && !yt.is_empty() {
        let (precision_macro, recall_macro, f1_macro) = prf_macro(&yt, &yp)?;
        let (mae, mse) = mae_mse(&yt, &yprob)?;
        Some(MultiMetrics {
            precision_macro,
            recall_macro,
            f1_macro,
            mae,
            mse,
            jaccard_macro: jaccard_macro(&yt, &yp)?,
        })
    } else {
        None
    };
    Ok(MetricsReport {
        main,
        multi,
        counts,
        n_samples: examples.len(),
    })
}

pub fn predict_all(params: &ModelParams, examples: &[Example]) -> Result<Vec<Prediction>> {
    examples
        .iter()
        .map(|ex| model::infer(&ex.seq, &ex.features, params))
        .collect()
}

/// Eval-mode forward over `examples`, binarized at `threshold`. Multi-label
/// metrics are dropped when the model's multi-label loss weight is zero.
pub fn evaluate(params: &ModelParams, examples: &[Example], threshold: f64) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    let preds = predict_all(params, examples)?;
    let with_multi = params.config.fusion.lambda > 0.0;
    report_from_predictions(&preds, examples, threshold, params.config.num_main, with_multi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcc_hand_value() {
        let m = mcc(&ConfusionMatrix::binary(3, 4, 1, 2)).unwrap();
        assert!((m - 10.0 / 600f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mcc_extremes() {
        assert_eq!(mcc(&ConfusionMatrix::binary(1, 1, 1, 1)).unwrap(), 0.0);
        assert_eq!(mcc(&ConfusionMatrix::binary(5, 5, 0, 0)).unwrap(), 1.0);
        assert_eq!(mcc(&ConfusionMatrix::binary(0, 0, 5, 5)).unwrap(), -1.0);
        let diag = ConfusionMatrix {
            counts: vec![vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 4]],
        };
        assert_eq!(mcc(&diag).unwrap(), 1.0);
        assert!(mcc(&ConfusionMatrix::new(3)).is_err());
    }

    #[test]
    fn constant_predictor_has_zero_mcc() {
        let truth = [0, 1, 2, 0, 1, 2];
        let cm = ConfusionMatrix::from_pairs(&truth, &[1; 6], 3).unwrap();
        assert!(mcc(&cm).unwrap().abs() < 1e-9);
    }

    #[test]
    fn jaccard_cases() {
        assert!((jaccard_macro(&[vec![1, 1, 0]], &[vec![0, 1, 1]]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard_macro(&[vec![0, 0]], &[vec![0, 0]]).unwrap(), 1.0);
        assert_eq!(jaccard_macro(&[vec![1, 0]], &[vec![0, 1]]).unwrap(), 0.0);
        assert!(jaccard_macro(&[vec![1]], &[vec![1], vec![0]]).is_err());
    }

    #[test]
    fn prf_conventions() {
        let y = vec![vec![1, 0], vec![0, 1]];
        assert_eq!(prf_macro(&y, &y).unwrap(), (1.0, 1.0, 1.0));
        // label 1 never predicted: precision 0 by convention
        let p = vec![vec![1, 0], vec![0, 0]];
        assert_eq!(prf_macro(&y, &p).unwrap(), (0.5, 0.5, 0.5));
    }

    #[test]
    fn mae_mse_half() {
        let (a, s) = mae_mse(&[vec![1, 0], vec![0, 0]], &[vec![0.5; 2], vec![0.5; 2]]).unwrap();
        assert_eq!((a, s), (0.5, 0.25));
    }

    #[test]
    fn csv_row_blanks_missing_sections() {
        let r = MetricsReport {
            main: Some(MainMetrics {
                accuracy: 0.5,
                mcc: 0.0,
            }),
            multi: None,
            counts: None,
            n_samples: 4,
        };
        let row = r.csv_row();
        assert_eq!(row.len(), CSV_COLUMNS.len());
        assert_eq!(row[..3], ["4", "0.5", "0"]);
        assert!(row[3..].iter().all(String::is_empty));
        let back: MetricsReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
