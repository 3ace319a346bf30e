use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::series::format_real;

/// Receiver operating characteristic from a descending threshold sweep.
///
/// `points[k]` is `(fpr, tpr)` when every score `>= thresholds[k]` is called
/// positive. The first point is `(0, 0)` at threshold `+inf`; equal scores
/// share one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for (&(fpr, tpr), &th) in self.points.iter().zip(&self.thresholds) {
            out.push_str(&format!(
                "{},{},{}\n",
                format_real(th),
                format_real(fpr),
                format_real(tpr)
            ));
        }
        out
    }
}

/// ROC curve of `scores` against boolean ground truth.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<RocCurve, EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            truth: truth.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NanScore(i));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        thresholds.push(s);
    }
    Ok(RocCurve {
        points,
        thresholds,
        positives,
        negatives,
    })
}

/// Trapezoidal area under `curve`.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// [`auc`] of [`roc_curve`].
pub fn auc_from_scores(scores: &[f64], truth: &[bool]) -> Result<f64, EvalError> {
    Ok(auc(&roc_curve(scores, truth)?))
}
