//! Global alignment kernel: the sum over every alignment of
//! `exp(-accumulated divergence)`.
//!
//! The recurrence `M(i, j) = kappa(x_i, y_j) (M(i-1, j) + M(i, j-1) + M(i-1, j-1))`
//! with `M(0, 0) = 1` is run on `log M`, so long series do not underflow.

use serde::{Deserialize, Serialize};

use super::divergence::check_sigma;
use super::dtw::{band_range, check_pair, effective_band};
use super::{KernelError, LocalDivergence};
use crate::series::TimeSeries;

/// A GA kernel value kept both in log and linear form.
///
/// `value` is `exp(log_value)` and may underflow to zero or overflow to
/// infinity while `log_value` stays finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaValue {
    pub log_value: f64,
    pub value: f64,
}

impl GaValue {
    fn from_log(log_value: f64) -> Self {
        Self {
            log_value,
            value: log_value.exp(),
        }
    }
}

/// GA kernel with Cuturi's `phi_sigma` local divergence.
pub fn ga_kernel(x: &TimeSeries, y: &TimeSeries, sigma: f64) -> Result<GaValue, KernelError> {
    check_sigma(sigma)?;
    ga_kernel_with(x, y, &LocalDivergence::PhiSigma { sigma }, None)
}

/// GA kernel for an arbitrary local divergence, optionally banded.
pub fn ga_kernel_with(
    x: &TimeSeries,
    y: &TimeSeries,
    div: &LocalDivergence,
    band: Option<usize>,
) -> Result<GaValue, KernelError> {
    check_pair(x, y)?;
    let (n, m) = (x.len(), y.len());
    let w = effective_band(n, m, band);
    let mut prev = vec![f64::NEG_INFINITY; m + 1];
    let mut cur = vec![f64::NEG_INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::NEG_INFINITY);
        let xi = x.frame(i - 1);
        let (lo, hi) = band_range(i, m, w);
        for j in lo..=hi {
            let acc = log_sum_exp3(prev[j - 1], prev[j], cur[j - 1]);
            cur[j] = acc - div.eval(xi, y.frame(j - 1));
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(GaValue::from_log(prev[m]))
}

/// The same recurrence evaluated directly on kernel values.
///
/// Underflows for long or dissimilar series; kept as an independent route
/// to cross-check the log-space evaluation.
pub fn ga_kernel_linear(
    x: &TimeSeries,
    y: &TimeSeries,
    div: &LocalDivergence,
) -> Result<f64, KernelError> {
    check_pair(x, y)?;
    let (n, m) = (x.len(), y.len());
    let mut prev = vec![0.0; m + 1];
    let mut cur = vec![0.0; m + 1];
    prev[0] = 1.0;
    for i in 1..=n {
        cur[0] = 0.0;
        let xi = x.frame(i - 1);
        for j in 1..=m {
            let kappa = (-div.eval(xi, y.frame(j - 1))).exp();
            cur[j] = kappa * (prev[j - 1] + prev[j] + cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// `log(e^a + e^b + e^c)` without overflow; `-inf` terms contribute nothing.
#[inline]
pub fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let hi = a.max(b).max(c);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + ((a - hi).exp() + (b - hi).exp() + (c - hi).exp()).ln()
}
