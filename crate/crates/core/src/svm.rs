//! Soft-margin support vector classification on precomputed Gram matrices.
//!
//! The dual
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a    s.t.  0 <= a_i <= C,  y^T a = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! is solved by sequential minimal optimization. Each step picks the maximal
//! violating pair
//!
//! ```text
//! i = argmax { -y_t G_t : t in I_up },   j = argmin { -y_t G_t : t in I_low }
//! ```
//!
//! with `G = Q a - e`, and stops once `m - M = (-y_i G_i) - (-y_j G_j) <= tol`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psdrepair;

/// KKT tolerance used as the default stopping criterion.
pub const DEFAULT_TOL: f64 = 1e-3;
/// Pair-update cap.
pub const DEFAULT_MAX_UPDATES: usize = 10_000_000;
/// Smallest eigenvalue accepted, relative to the spectral norm.
pub const INDEFINITE_THRESHOLD: f64 = 1e-6;

const TAU: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("need at least two training items, got {0}")]
    TooFewItems(usize),
    #[error("gram matrix is indefinite: min eigenvalue {min_eig:e}, spectral norm {norm:e}")]
    IndefiniteGram { min_eig: f64, norm: f64 },
    #[error("no convergence after {updates} pair updates (violation {violation:e})")]
    NoConvergence {
        best: Box<SvmModel>,
        updates: usize,
        violation: f64,
    },
    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(f64),
    #[error("C must be positive and finite, got {0}")]
    BadC(f64),
    #[error("class {class}: {source}")]
    Class {
        class: String,
        #[source]
        source: Box<SvmError>,
    },
    #[error("one-vs-all needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error(transparent)]
    Repair(#[from] psdrepair::RepairError),
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_updates: usize,
}

impl SvmParams {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            tol: DEFAULT_TOL,
            max_updates: DEFAULT_MAX_UPDATES,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// A trained binary classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    #[serde(rename = "C")]
    pub c: f64,
    pub gram_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

impl SvmModel {
    /// Number of training items.
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Dual objective `1/2 a^T Q a - sum a` on the training Gram.
    pub fn dual_objective(&self, gram: &DMatrix<f64>) -> f64 {
        dual_objective(gram, &self.labels, &self.alphas)
    }
}

/// `1/2 a^T Q a - sum(a)` with `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(gram: &DMatrix<f64>, y: &[f64], alphas: &[f64]) -> f64 {
    let k = alphas.len();
    let mut quad = 0.0;
    for i in 0..k {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..k {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * gram[(i, j)];
        }
    }
    0.5 * quad - alphas.iter().sum::<f64>()
}

fn check_inputs(gram: &DMatrix<f64>, y: &[f64], c: f64) -> Result<(), SvmError> {
    let k = y.len();
    if gram.shape() != (k, k) {
        return Err(SvmError::ShapeMismatch {
            expected: format!("{k}x{k}"),
            found: format!("{}x{}", gram.nrows(), gram.ncols()),
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::BadC(c));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::BadLabel(bad));
    }
    if k < 2 {
        return Err(SvmError::TooFewItems(k));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(SvmError::SingleClass);
    }
    Ok(())
}

/// Rejects Gram matrices whose smallest eigenvalue is below
/// `-INDEFINITE_THRESHOLD * ||gram||_2`.
pub fn check_definiteness(gram: &DMatrix<f64>) -> Result<(), SvmError> {
    let min_eig = psdrepair::min_eigenvalue(gram)?;
    let norm = psdrepair::spectral_norm(gram)?;
    if min_eig < -INDEFINITE_THRESHOLD * norm {
        return Err(SvmError::IndefiniteGram { min_eig, norm });
    }
    Ok(())
}

/// Trains a binary soft-margin SVM on a precomputed Gram matrix.
///
/// `y` holds `+1`/`-1` labels. The Gram matrix must be PSD up to the
/// [`INDEFINITE_THRESHOLD`] relative tolerance.
pub fn train_svm(gram: &DMatrix<f64>, y: &[f64], params: &SvmParams) -> Result<SvmModel, SvmError> {
    check_inputs(gram, y, params.c)?;
    check_definiteness(gram)?;
    smo(gram, y, params)
}

/// [`train_svm`] without the eigenvalue check, for callers that have already
/// validated the Gram matrix.
pub(crate) fn train_svm_prechecked(
    gram: &DMatrix<f64>,
    y: &[f64],
    params: &SvmParams,
) -> Result<SvmModel, SvmError> {
    check_inputs(gram, y, params.c)?;
    smo(gram, y, params)
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating pair `(i, m, j, M)`; `None` when a set is empty.
fn select_pair(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> Option<(usize, f64, usize, f64)> {
    let mut up: Option<(usize, f64)> = None;
    let mut low: Option<(usize, f64)> = None;
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if in_up(y[t], alpha[t], c) && up.is_none_or(|(_, best)| v > best) {
            up = Some((t, v));
        }
        if in_low(y[t], alpha[t], c) && low.is_none_or(|(_, best)| v < best) {
            low = Some((t, v));
        }
    }
    match (up, low) {
        (Some((i, m)), Some((j, mm))) => Some((i, m, j, mm)),
        _ => None,
    }
}

fn smo(gram: &DMatrix<f64>, y: &[f64], params: &SvmParams) -> Result<SvmModel, SvmError> {
    let k = y.len();
    let c = params.c;
    let mut alpha = vec![0.0; k];
    let mut grad = vec![-1.0; k];
    let mut updates = 0usize;

    loop {
        let Some((i, m_up, j, m_low)) = select_pair(y, &alpha, &grad, c) else {
            break;
        };
        let gap = m_up - m_low;
        if gap <= params.tol {
            break;
        }
        if updates >= params.max_updates {
            let best = finish(y, alpha, &grad, c);
            return Err(SvmError::NoConvergence {
                best: Box::new(best),
                updates,
                violation: gap,
            });
        }
        updates += 1;

        // move along d: a_i += y_i s, a_j -= y_j s, keeping y^T a fixed
        let curvature = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(TAU);
        let step_free = gap / curvature;
        let cap_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let step = step_free.min(cap_i).min(cap_j);

        let old_i = alpha[i];
        let old_j = alpha[j];
        alpha[i] = if step == cap_i {
            if y[i] > 0.0 {
                c
            } else {
                0.0
            }
        } else {
            (old_i + y[i] * step).clamp(0.0, c)
        };
        alpha[j] = if step == cap_j {
            if y[j] > 0.0 {
                0.0
            } else {
                c
            }
        } else {
            (old_j - y[j] * step).clamp(0.0, c)
        };
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..k {
            grad[t] += y[t] * (y[i] * gram[(t, i)] * di + y[j] * gram[(t, j)] * dj);
        }
    }
    Ok(finish(y, alpha, &grad, c))
}

fn finish(y: &[f64], alpha: Vec<f64>, grad: &[f64], c: f64) -> SvmModel {
    let free: Vec<f64> = (0..y.len())
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| -y[t] * grad[t])
        .collect();
    let bias = if free.is_empty() {
        // midpoint of the feasible interval [max over I_up, min over I_low]
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for t in 0..y.len() {
            let v = -y[t] * grad[t];
            if in_up(y[t], alpha[t], c) {
                lo = lo.max(v);
            }
            if in_low(y[t], alpha[t], c) {
                hi = hi.min(v);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    let support_indices = (0..y.len()).filter(|&t| alpha[t] > 0.0).collect();
    SvmModel {
        alphas: alpha,
        labels: y.to_vec(),
        bias,
        support_indices,
        c,
        gram_ref: String::new(),
        class: None,
    }
}

/// `f_i = sum_j a_j y_j k_rows[i][j] + b` for each test row.
pub fn decision_values(model: &SvmModel, k_rows: &DMatrix<f64>) -> Result<Vec<f64>, SvmError> {
    if k_rows.ncols() != model.len() {
        return Err(SvmError::ShapeMismatch {
            expected: format!("N x {}", model.len()),
            found: format!("{}x{}", k_rows.nrows(), k_rows.ncols()),
        });
    }
    Ok((0..k_rows.nrows())
        .map(|r| {
            let mut f = 0.0;
            for &s in &model.support_indices {
                f += model.alphas[s] * model.labels[s] * k_rows[(r, s)];
            }
            f + model.bias
        })
        .collect())
}

/// Largest KKT residual of `model` on its training Gram.
///
/// Residual of item `i` with margin `y_i f(x_i)`: `max(0, 1 - margin)` when
/// `a_i = 0`, `|margin - 1|` when `0 < a_i < C`, `max(0, margin - 1)` when
/// `a_i = C`.
pub fn kkt_violation(
    model: &SvmModel,
    gram: &DMatrix<f64>,
    y: &[f64],
    c: f64,
) -> Result<f64, SvmError> {
    let k = model.len();
    if gram.shape() != (k, k) || y.len() != k {
        return Err(SvmError::ShapeMismatch {
            expected: format!("{k}x{k} gram and {k} labels"),
            found: format!(
                "{}x{} gram and {} labels",
                gram.nrows(),
                gram.ncols(),
                y.len()
            ),
        });
    }
    let f = decision_values_all(model, gram, y);
    Ok((0..k)
        .map(|i| {
            let margin = y[i] * f[i];
            let a = model.alphas[i];
            if a <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            }
        })
        .fold(0.0, f64::max))
}

fn decision_values_all(model: &SvmModel, gram: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let k = model.len();
    (0..k)
        .map(|i| {
            let mut f = model.bias;
            for j in 0..k {
                if model.alphas[j] != 0.0 {
                    f += model.alphas[j] * y[j] * gram[(i, j)];
                }
            }
            f
        })
        .collect()
}

/// One binary model per class, in sorted class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsAllModel {
    pub classes: Vec<String>,
    pub models: Vec<SvmModel>,
}

impl OneVsAllModel {
    /// Decision values, one row per test item and one column per class.
    pub fn decision_matrix(&self, k_rows: &DMatrix<f64>) -> Result<DMatrix<f64>, SvmError> {
        let mut out = DMatrix::zeros(k_rows.nrows(), self.classes.len());
        for (c, model) in self.models.iter().enumerate() {
            let f = decision_values(model, k_rows)?;
            for (r, v) in f.into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        Ok(out)
    }

    /// Argmax class per test row; ties go to the earlier class.
    pub fn predict(&self, k_rows: &DMatrix<f64>) -> Result<Vec<String>, SvmError> {
        let scores = self.decision_matrix(k_rows)?;
        Ok((0..scores.nrows())
            .map(|r| self.classes[argmax_row(&scores, r)].clone())
            .collect())
    }
}

pub(crate) fn argmax_row(scores: &DMatrix<f64>, r: usize) -> usize {
    let mut best = 0;
    for c in 1..scores.ncols() {
        if scores[(r, c)] > scores[(r, best)] {
            best = c;
        }
    }
    best
}

/// Trains one binary model per class (`+1` iff the item has that class).
///
/// Classes are the sorted distinct labels. Per-class problems are trained in
/// parallel on the current rayon pool.
pub fn train_one_vs_all(
    gram: &DMatrix<f64>,
    labels: &[&str],
    params: &SvmParams,
) -> Result<OneVsAllModel, SvmError> {
    let mut classes: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    classes.sort();
    classes.dedup();
    train_one_vs_all_with_classes(gram, labels, &classes, params)
}

/// [`train_one_vs_all`] against an explicit class list. A listed class with
/// no training item fails with [`SvmError::SingleClass`] tagged by class.
pub fn train_one_vs_all_with_classes(
    gram: &DMatrix<f64>,
    labels: &[&str],
    classes: &[String],
    params: &SvmParams,
) -> Result<OneVsAllModel, SvmError> {
    if classes.len() < 2 {
        return Err(SvmError::TooFewClasses(classes.len()));
    }
    if gram.shape() != (labels.len(), labels.len()) {
        return Err(SvmError::ShapeMismatch {
            expected: format!("{0}x{0}", labels.len()),
            found: format!("{}x{}", gram.nrows(), gram.ncols()),
        });
    }
    check_definiteness(gram)?;
    let models = classes
        .par_iter()
        .map(|class| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            train_svm_prechecked(gram, &y, params)
                .map(|mut m| {
                    m.class = Some(class.clone());
                    m
                })
                .map_err(|e| SvmError::Class {
                    class: class.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OneVsAllModel {
        classes: classes.to_vec(),
        models,
    })
}
