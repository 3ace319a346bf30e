//! Repair of indefinite similarity matrices.
//!
//! [`nearest_correlation`] finds the closest (Frobenius) symmetric PSD matrix
//! with unit diagonal by alternating projections with Dykstra's correction:
//!
//! ```text
//! dS = 0, Y = A
//! repeat
//!     R = Y - dS
//!     X = P_psd(R)          clamp negative eigenvalues to zero
//!     dS = X - R
//!     Y = P_unitdiag(X)     set the diagonal to one
//! until ||Y_k - Y_{k-1}||_F < tol and ||X_k - Y_k||_F < tol
//! ```
//!
//! The correction term `dS` is applied only before the PSD projection, since
//! the unit-diagonal set is affine and needs none.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{DistanceMatrix, GramMatrix, KernelConfig};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Relative tolerance used to decide whether an input is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("no convergence after {} iterations (last change {:e})", .report.iterations, .last_change)]
    NoConvergence {
        partial: Box<DMatrix<f64>>,
        report: RepairReport,
        last_change: f64,
    },
    #[error("distance matrix has non-zero diagonal entry {value} at {index}")]
    NonZeroDiagonal { index: usize, value: f64 },
    #[error("distance matrix has negative entry {value} at ({i}, {j})")]
    NegativeDistance { i: usize, j: usize, value: f64 },
    #[error("t must be positive and finite, got {0}")]
    NonPositiveT(f64),
    #[error("tolerance must be positive and max_iter at least one")]
    BadSettings,
}

/// Diagnostics of one repair run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub iterations: usize,
    /// `||input - output||_F`.
    pub frobenius_change: f64,
    pub min_eig_before: f64,
    pub min_eig_after: f64,
    pub converged: bool,
    /// Set by the literal repair-then-exponentiate mode when the exponentiated
    /// matrix was still indefinite and needed a second pass.
    #[serde(default)]
    pub second_pass: bool,
}

/// Order of exponentiation and repair in [`dtw_to_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    /// `K = exp(-D / t)`, then the nearest correlation matrix of `K`.
    #[default]
    ExpThenRepair,
    /// Nearest correlation matrix of the rescaled distances, then `exp`;
    /// a second repair pass runs if the result is still indefinite.
    RepairThenExp,
}

/// Tolerance and iteration cap for alternating projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairSettings {
    pub mode: RepairMode,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RepairSettings {
    fn default() -> Self {
        Self {
            mode: RepairMode::ExpThenRepair,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64, RepairError> {
    check_symmetric(a)?;
    Ok(eigenvalues(a).iter().copied().fold(f64::INFINITY, f64::min))
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64, RepairError> {
    check_symmetric(a)?;
    Ok(eigenvalues(a).iter().map(|v| v.abs()).fold(0.0, f64::max))
}

fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone().symmetric_eigenvalues().iter().copied().collect()
}

pub fn check_symmetric(a: &DMatrix<f64>) -> Result<(), RepairError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(RepairError::NotSquare { rows, cols });
    }
    let scale = a.amax().max(1.0);
    for i in 0..rows {
        for j in (i + 1)..cols {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if !(gap <= SYMMETRY_TOL * scale) {
                return Err(RepairError::NotSymmetric { i, j, gap });
            }
        }
    }
    Ok(())
}

/// Projection onto the PSD cone: eigenvalues clamped at zero.
fn project_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return a.clone();
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    symmetrize(&mut out);
    out
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Nearest correlation matrix of a symmetric `a`.
///
/// On success the output has an exact unit diagonal and smallest eigenvalue
/// at least `-tol`. If `max_iter` runs out first, the last iterate comes back
/// inside [`RepairError::NoConvergence`].
pub fn nearest_correlation(
    a: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, RepairReport), RepairError> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(RepairError::BadSettings);
    }
    check_symmetric(a)?;
    let n = a.nrows();
    let min_eig_before = eigenvalues(a).into_iter().fold(f64::INFINITY, f64::min);

    let mut y = a.clone();
    symmetrize(&mut y);
    let mut correction = DMatrix::<f64>::zeros(n, n);
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let r = &y - &correction;
        let x = project_psd(&r);
        correction = &x - &r;
        let mut y_next = x.clone();
        y_next.fill_diagonal(1.0);
        last_change = (&y_next - &y).norm();
        let gap = (&x - &y_next).norm();
        y = y_next;
        if last_change < tol && gap < tol {
            converged = true;
            break;
        }
    }
    let report = RepairReport {
        iterations,
        frobenius_change: (a - &y).norm(),
        min_eig_before,
        min_eig_after: eigenvalues(&y).into_iter().fold(f64::INFINITY, f64::min),
        converged,
        second_pass: false,
    };
    if converged {
        Ok((y, report))
    } else {
        Err(RepairError::NoConvergence {
            partial: Box::new(y),
            report,
            last_change,
        })
    }
}

/// Entrywise `exp(-d / t)`.
pub fn exp_kernel(d: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    d.map(|v| (-v / t).exp())
}

fn check_distance(d: &DMatrix<f64>, t: f64) -> Result<(), RepairError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(RepairError::NonPositiveT(t));
    }
    check_symmetric(d)?;
    for i in 0..d.nrows() {
        if d[(i, i)] != 0.0 {
            return Err(RepairError::NonZeroDiagonal {
                index: i,
                value: d[(i, i)],
            });
        }
        for j in 0..d.ncols() {
            if d[(i, j)] < 0.0 {
                return Err(RepairError::NegativeDistance {
                    i,
                    j,
                    value: d[(i, j)],
                });
            }
        }
    }
    Ok(())
}

/// Turns a DTW distance matrix into a PSD kernel matrix with unit diagonal.
///
/// See [`RepairMode`] for the two orders of operations. The returned report
/// compares the unrepaired `exp(-D / t)` with the final matrix.
pub fn dtw_to_kernel_values(
    d: &DMatrix<f64>,
    t: f64,
    settings: &RepairSettings,
) -> Result<(DMatrix<f64>, RepairReport), RepairError> {
    check_distance(d, t)?;
    let raw = exp_kernel(d, t);
    match settings.mode {
        RepairMode::ExpThenRepair => nearest_correlation(&raw, settings.tol, settings.max_iter),
        RepairMode::RepairThenExp => {
            let scale = d.amax();
            let scaled = if scale > 0.0 { d / scale } else { d.clone() };
            let (corr, first) = nearest_correlation(&scaled, settings.tol, settings.max_iter)?;
            let repaired_dist = corr * scale;
            let k = exp_kernel(&repaired_dist, t);
            let min_eig = eigenvalues(&k).into_iter().fold(f64::INFINITY, f64::min);
            let min_eig_before = eigenvalues(&raw).into_iter().fold(f64::INFINITY, f64::min);
            if min_eig < -settings.tol {
                let (k2, second) = nearest_correlation(&k, settings.tol, settings.max_iter)?;
                let report = RepairReport {
                    iterations: first.iterations + second.iterations,
                    frobenius_change: (&raw - &k2).norm(),
                    min_eig_before,
                    min_eig_after: second.min_eig_after,
                    converged: second.converged,
                    second_pass: true,
                };
                Ok((k2, report))
            } else {
                let report = RepairReport {
                    iterations: first.iterations,
                    frobenius_change: (&raw - &k).norm(),
                    min_eig_before,
                    min_eig_after: min_eig,
                    converged: first.converged,
                    second_pass: false,
                };
                Ok((k, report))
            }
        }
    }
}

/// [`dtw_to_kernel_values`] packaged as a [`GramMatrix`].
pub fn dtw_to_kernel(
    dist: &DistanceMatrix,
    t: f64,
    settings: &RepairSettings,
) -> Result<GramMatrix, RepairError> {
    let (values, report) = dtw_to_kernel_values(&dist.values, t, settings)?;
    let config = KernelConfig {
        t: Some(t),
        ..dist.config
    };
    Ok(GramMatrix {
        values,
        config,
        repaired: true,
        item_ids: dist.item_ids.clone(),
        series_lengths: dist.series_lengths.clone(),
        repair: Some(report),
    })
}
