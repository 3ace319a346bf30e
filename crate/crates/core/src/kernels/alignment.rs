//! Alignment paths and exhaustive enumeration of the alignment set.

use serde::{Deserialize, Serialize};

use super::{KernelError, LocalDivergence};
use crate::series::TimeSeries;

/// Default ceiling on the number of paths [`enumerate_alignments`] will build.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// A monotone warping path between series of lengths `n` and `m`.
///
/// Pairs are 1-based. The path starts at `(1, 1)`, ends at `(n, m)`, and
/// each step is one of `(0, 1)`, `(1, 0)`, `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlignmentPath {
    pairs: Vec<(usize, usize)>,
}

impl AlignmentPath {
    /// Wraps `pairs` after checking the path invariants against `(n, m)`.
    pub fn new(pairs: Vec<(usize, usize)>, n: usize, m: usize) -> Result<Self, KernelError> {
        let path = Self { pairs };
        if path.is_valid(n, m) {
            Ok(path)
        } else {
            Err(KernelError::InvalidPath)
        }
    }

    pub(crate) fn from_pairs_unchecked(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_valid(&self, n: usize, m: usize) -> bool {
        let (Some(&first), Some(&last)) = (self.pairs.first(), self.pairs.last()) else {
            return false;
        };
        if first != (1, 1) || last != (n, m) || self.pairs.len() > n + m - 1 {
            return false;
        }
        self.pairs.windows(2).all(|w| {
            let di = w[1].0.wrapping_sub(w[0].0);
            let dj = w[1].1.wrapping_sub(w[0].1);
            matches!((di, dj), (0, 1) | (1, 0) | (1, 1))
        })
    }

    /// Sum of the local divergence over the path, accumulated from the start.
    pub fn cost(&self, x: &TimeSeries, y: &TimeSeries, div: &LocalDivergence) -> f64 {
        let mut total = 0.0;
        for &(i, j) in &self.pairs {
            total += div.eval(x.frame(i - 1), y.frame(j - 1));
        }
        total
    }
}

/// `|A(n, m)|`, the Delannoy number `D(n - 1, m - 1)`, saturating at `u128::MAX`.
pub fn alignment_count(n: usize, m: usize) -> u128 {
    if n == 0 || m == 0 {
        return 0;
    }
    let mut prev = vec![1u128; m];
    for _ in 1..n {
        let mut row = vec![1u128; m];
        for j in 1..m {
            row[j] = row[j - 1]
                .saturating_add(prev[j])
                .saturating_add(prev[j - 1]);
        }
        prev = row;
    }
    prev[m - 1]
}

/// Every alignment between series of lengths `n` and `m`, each exactly once.
///
/// Intended as a brute-force oracle; fails with [`KernelError::TooLarge`] when
/// the set would exceed `cap` paths.
pub fn enumerate_alignments(
    n: usize,
    m: usize,
    cap: u128,
) -> Result<Vec<AlignmentPath>, KernelError> {
    if n == 0 || m == 0 {
        return Err(KernelError::EmptySeries);
    }
    let count = alignment_count(n, m);
    if count > cap {
        return Err(KernelError::TooLarge { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut stack = vec![(1usize, 1usize)];
    extend(&mut stack, n, m, &mut out);
    Ok(out)
}

fn extend(stack: &mut Vec<(usize, usize)>, n: usize, m: usize, out: &mut Vec<AlignmentPath>) {
    let (i, j) = *stack.last().expect("non-empty");
    if (i, j) == (n, m) {
        out.push(AlignmentPath::from_pairs_unchecked(stack.clone()));
        return;
    }
    for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
        let (ni, nj) = (i + di, j + dj);
        if ni <= n && nj <= m {
            stack.push((ni, nj));
            extend(stack, n, m, out);
            stack.pop();
        }
    }
}
