//! Dynamic time warping by the `O(nm)` dynamic programme.

use super::{AlignmentPath, KernelError, LocalDivergence};
use crate::series::TimeSeries;

/// Minimum accumulated divergence over all alignments of `x` and `y`.
///
/// `D(i, j) = min(D(i-1, j), D(i, j-1), D(i-1, j-1)) + phi(x_i, y_j)`.
pub fn dtw_distance(
    x: &TimeSeries,
    y: &TimeSeries,
    div: &LocalDivergence,
) -> Result<f64, KernelError> {
    dtw_distance_banded(x, y, div, None)
}

/// [`dtw_distance`] restricted to a Sakoe-Chiba band of half-width `band`.
///
/// The band is widened to `|n - m|` when narrower, so the end cell stays
/// reachable. `None` means unconstrained.
pub fn dtw_distance_banded(
    x: &TimeSeries,
    y: &TimeSeries,
    div: &LocalDivergence,
    band: Option<usize>,
) -> Result<f64, KernelError> {
    check_pair(x, y)?;
    let (n, m) = (x.len(), y.len());
    let w = effective_band(n, m, band);
    // rolling rows over j = 0..=m, with column 0 as the +inf boundary
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        let xi = x.frame(i - 1);
        let (lo, hi) = band_range(i, m, w);
        for c in cur.iter_mut().take(lo).skip(1) {
            *c = f64::INFINITY;
        }
        for j in lo..=hi {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = best + div.eval(xi, y.frame(j - 1));
        }
        for c in cur.iter_mut().skip(hi + 1) {
            *c = f64::INFINITY;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// DTW cost together with one optimal alignment.
///
/// Backtracking prefers the diagonal predecessor, then `(i-1, j)`, then
/// `(i, j-1)` among equal-cost candidates, which makes the path deterministic.
pub fn dtw_path(
    x: &TimeSeries,
    y: &TimeSeries,
    div: &LocalDivergence,
) -> Result<(f64, AlignmentPath), KernelError> {
    check_pair(x, y)?;
    let (n, m) = (x.len(), y.len());
    let stride = m + 1;
    let mut acc = vec![f64::INFINITY; (n + 1) * stride];
    acc[0] = 0.0;
    for i in 1..=n {
        let xi = x.frame(i - 1);
        for j in 1..=m {
            let best = acc[(i - 1) * stride + j - 1]
                .min(acc[(i - 1) * stride + j])
                .min(acc[i * stride + j - 1]);
            acc[i * stride + j] = best + div.eval(xi, y.frame(j - 1));
        }
    }
    let cost = acc[n * stride + m];

    let mut pairs = vec![(n, m)];
    let (mut i, mut j) = (n, m);
    while (i, j) != (1, 1) {
        let diag = acc[(i - 1) * stride + j - 1];
        let up = acc[(i - 1) * stride + j];
        let left = acc[i * stride + j - 1];
        (i, j) = if diag <= up && diag <= left {
            (i - 1, j - 1)
        } else if up <= left {
            (i - 1, j)
        } else {
            (i, j - 1)
        };
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok((cost, AlignmentPath::from_pairs_unchecked(pairs)))
}

pub(crate) fn check_pair(x: &TimeSeries, y: &TimeSeries) -> Result<(), KernelError> {
    if x.dim() != y.dim() {
        return Err(KernelError::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    Ok(())
}

pub(crate) fn effective_band(n: usize, m: usize, band: Option<usize>) -> usize {
    match band {
        None => usize::MAX,
        Some(w) => w.max(n.abs_diff(m)),
    }
}

/// Inclusive column range of row `i` (1-based) inside the band.
#[inline]
pub(crate) fn band_range(i: usize, m: usize, w: usize) -> (usize, usize) {
    if w == usize::MAX {
        return (1, m);
    }
    let lo = i.saturating_sub(w).max(1);
    let hi = i.saturating_add(w).min(m);
    (lo, hi)
}
