use serde::{Deserialize, Serialize};

use super::KernelError;

/// Squared Euclidean distance `||u - v||^2`.
pub fn sq_euclidean(u: &[f64], v: &[f64]) -> Result<f64, KernelError> {
    check_dims(u, v)?;
    Ok(sq_euclidean_unchecked(u, v))
}

#[inline]
pub(crate) fn sq_euclidean_unchecked(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Cuturi's local divergence
/// `r / (2 sigma^2) + log(2 - exp(-r / (2 sigma^2)))` with `r = ||u - v||^2`.
///
/// `exp(-phi_sigma)` is the local kernel of the global alignment kernel; it
/// equals `k / (2 - k)` for the Gaussian `k`, which keeps the induced GA
/// kernel positive definite.
pub fn phi_sigma(u: &[f64], v: &[f64], sigma: f64) -> Result<f64, KernelError> {
    check_dims(u, v)?;
    check_sigma(sigma)?;
    Ok(phi_sigma_of_sq(sq_euclidean_unchecked(u, v), sigma))
}

/// [`phi_sigma`] from a precomputed squared distance.
#[inline]
pub fn phi_sigma_of_sq(r: f64, sigma: f64) -> f64 {
    let a = r / (2.0 * sigma * sigma);
    // log(2 - e^{-a}) = log1p(1 - e^{-a}) = log1p(-expm1(-a))
    a + (-(-a).exp_m1()).ln_1p()
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<(), KernelError> {
    if u.len() != v.len() {
        return Err(KernelError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_sigma(sigma: f64) -> Result<(), KernelError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(KernelError::NonPositiveSigma(sigma));
    }
    Ok(())
}

/// Which per-frame divergence a kernel accumulates along an alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    SqEuclidean,
    PhiSigma,
}

/// A divergence with its parameters bound, ready to evaluate frame pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalDivergence {
    SqEuclidean,
    PhiSigma { sigma: f64 },
}

impl LocalDivergence {
    pub fn phi_sigma(sigma: f64) -> Result<Self, KernelError> {
        check_sigma(sigma)?;
        Ok(LocalDivergence::PhiSigma { sigma })
    }

    /// Evaluates the divergence; both frames must have equal length.
    #[inline]
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        let r = sq_euclidean_unchecked(u, v);
        match *self {
            LocalDivergence::SqEuclidean => r,
            LocalDivergence::PhiSigma { sigma } => phi_sigma_of_sq(r, sigma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sq_euclidean_examples() {
        assert_eq!(sq_euclidean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(sq_euclidean(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 8.0);
        assert_eq!(sq_euclidean(&[0.0], &[3.0]).unwrap(), 9.0);
        assert!(matches!(
            sq_euclidean(&[0.0], &[1.0, 2.0]),
            Err(KernelError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn phi_sigma_zero_distance_is_zero() {
        for sigma in [0.01, 1.0, 300.0] {
            assert_eq!(phi_sigma(&[0.3, -1.0], &[0.3, -1.0], sigma).unwrap(), 0.0);
        }
    }

    #[test]
    fn phi_sigma_at_r_equal_two_sigma_squared() {
        // r = 2 sigma^2 -> 1 + ln(2 - e^{-1}), evaluated directly
        let expected = 1.0 + (2.0 - (-1.0f64).exp()).ln();
        assert!((expected - 1.489_880_125_6).abs() < 1e-9);
        let sigma: f64 = 0.7;
        let r = 2.0 * sigma * sigma;
        let v = phi_sigma(&[0.0], &[r.sqrt()], sigma).unwrap();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn phi_sigma_asymptote() {
        let sigma = 1.3;
        let r = 200.0 * sigma * sigma;
        let v = phi_sigma_of_sq(r, sigma);
        assert!((v - (100.0 + std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn phi_sigma_rejects_bad_sigma() {
        assert!(matches!(
            phi_sigma(&[0.0], &[1.0], 0.0),
            Err(KernelError::NonPositiveSigma(_))
        ));
        assert!(phi_sigma(&[0.0], &[1.0], -1.0).is_err());
        assert!(phi_sigma(&[0.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn larger_sigma_strictly_decreases_phi() {
        let r = 0.8;
        let mut prev = f64::INFINITY;
        for k in -5..=10 {
            let v = phi_sigma_of_sq(r, 2f64.powi(k));
            assert!(v < prev, "sigma = 2^{k}");
            prev = v;
        }
    }
}
