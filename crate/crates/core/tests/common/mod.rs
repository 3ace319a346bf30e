//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, frames: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..frames)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn phi(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    let r = sq_dist(u, v);
    let a = r / (2.0 * sigma * sigma);
    a + (2.0 - (-a).exp()).ln()
}

/// Every alignment between lengths `n` and `m` as 0-based index pairs,
/// built by recursive extension from (0, 0).
pub fn all_alignments(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(
        i: usize,
        j: usize,
        n: usize,
        m: usize,
        path: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        path.push((i, j));
        if i == n - 1 && j == m - 1 {
            out.push(path.clone());
        } else {
            if i + 1 < n && j + 1 < m {
                walk(i + 1, j + 1, n, m, path, out);
            }
            if i + 1 < n {
                walk(i + 1, j, n, m, path, out);
            }
            if j + 1 < m {
                walk(i, j + 1, n, m, path, out);
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    walk(0, 0, n, m, &mut Vec::new(), &mut out);
    out
}

/// Delannoy numbers by the three-term recurrence.
pub fn delannoy(n: usize, m: usize) -> u128 {
    let mut c = vec![vec![0u128; m + 1]; n + 1];
    c[1][1] = 1;
    for i in 1..=n {
        for j in 1..=m {
            if i == 1 && j == 1 {
                continue;
            }
            c[i][j] = c[i - 1][j] + c[i][j - 1] + c[i - 1][j - 1];
        }
    }
    c[n][m]
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * m.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Gaussian Gram matrix of random points; strictly positive definite for
/// distinct points.
pub fn gaussian_gram(points: &[Vec<f64>], bandwidth: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        (-sq_dist(&points[i], &points[j]) / (2.0 * bandwidth * bandwidth)).exp()
    })
}

pub fn svm_objective(gram: &DMatrix<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let k = y.len();
    let mut q = 0.0;
    for i in 0..k {
        for j in 0..k {
            q += alpha[i] * alpha[j] * y[i] * y[j] * gram[(i, j)];
        }
    }
    0.5 * q - alpha.iter().sum::<f64>()
}

/// Exact minimum of the SVM dual by active-set enumeration.
///
/// Each coordinate is fixed at 0, fixed at C, or free. For every pattern the
/// stationarity equations of the free block together with `y^T a = 0` form a
/// linear system; feasible solutions are scored and the best is returned.
pub fn qp_oracle(gram: &DMatrix<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let k = y.len();
    assert!(k <= 8, "active-set enumeration is exponential");
    let mut best: Option<(Vec<f64>, f64)> = None;
    let patterns = 3usize.pow(k as u32);
    for code in 0..patterns {
        let mut state = vec![0u8; k];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..k).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state
            .iter()
            .map(|&s| if s == 1 { c } else { 0.0 })
            .collect();
        if free.is_empty() {
            let eq: f64 = (0..k).map(|i| y[i] * alpha[i]).sum();
            if eq.abs() > 1e-12 * c * k as f64 {
                continue;
            }
        } else {
            let f = free.len();
            let mut a = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                let mut fixed = 0.0;
                for t in 0..k {
                    if state[t] == 1 {
                        fixed += y[i] * y[t] * gram[(i, t)] * c;
                    }
                }
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = y[i] * y[j] * gram[(i, j)];
                }
                a[(r, f)] = y[i];
                rhs[r] = 1.0 - fixed;
                a[(f, r)] = y[i];
            }
            rhs[f] = -(0..k)
                .filter(|&t| state[t] == 1)
                .map(|t| y[t] * c)
                .sum::<f64>();
            let Some(sol) = a.lu().solve(&rhs) else {
                continue;
            };
            let mut ok = true;
            for (r, &i) in free.iter().enumerate() {
                let v = sol[r];
                if !(v > -1e-12 && v < c + 1e-12) {
                    ok = false;
                    break;
                }
                alpha[i] = v.clamp(0.0, c);
            }
            if !ok {
                continue;
            }
        }
        let obj = svm_objective(gram, y, &alpha);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((alpha, obj));
        }
    }
    best.expect("the all-zero point is always feasible")
}

/// Mann-Whitney estimate of AUC: the fraction of positive/negative pairs
/// ranked correctly, ties counting one half.
pub fn mann_whitney(scores: &[f64], truth: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (sp, &tp) in scores.iter().zip(truth) {
        if !tp {
            continue;
        }
        for (sn, &tn) in scores.iter().zip(truth) {
            if tn {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut s = 0;
        while s < idx.len() {
            let mut e = s;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
                e += 1;
            }
            let avg = (s + e) as f64 / 2.0 + 1.0;
            for &i in &idx[s..=e] {
                r[i] = avg;
            }
            s = e + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma).powi(2);
        vb += (rb[i] - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}
