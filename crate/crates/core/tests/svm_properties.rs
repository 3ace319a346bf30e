mod common;

use common::{gaussian_gram, qp_oracle, random_rows, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use tskernel::svm::{decision_values, kkt_violation, train_svm, SvmParams};

fn instance(seed: u64, k: usize) -> (Vec<Vec<f64>>, Vec<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let pts = random_rows(&mut r, k, 2);
    let mut y: Vec<f64> = (0..k)
        .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let bw = r.random_range(0.3..1.5);
    let gram = gaussian_gram(&pts, bw);
    (pts, y, gram)
}

#[test]
fn objective_matches_active_set_oracle() {
    for seed in 0..60u64 {
        let k = 2 + (seed as usize % 5);
        let (_, y, gram) = instance(seed, k);
        let c = [0.1, 1.0, 10.0][seed as usize % 3];
        let model = train_svm(&gram, &y, &SvmParams::new(c)).unwrap();
        let (_, exact) = qp_oracle(&gram, &y, c);
        let got = model.dual_objective(&gram);
        assert!(
            (got - exact).abs() <= 1e-4 * exact.abs(),
            "seed {seed}: {got} vs {exact}"
        );
    }
}

#[test]
fn duplicating_points_with_half_c_keeps_predictions() {
    for seed in 100..120u64 {
        let (pts, y, _) = instance(seed, 8);
        let mut r = rng(seed + 1000);
        let test = random_rows(&mut r, 12, 2);
        let bw = 0.8;
        let c = 2.0;
        let gram = gaussian_gram(&pts, bw);
        let doubled_pts: Vec<Vec<f64>> = pts.iter().chain(pts.iter()).cloned().collect();
        let doubled_y: Vec<f64> = y.iter().chain(y.iter()).copied().collect();
        let doubled = gaussian_gram(&doubled_pts, bw);

        let rows = |train: &[Vec<f64>]| {
            DMatrix::from_fn(test.len(), train.len(), |i, j| {
                (-common::sq_dist(&test[i], &train[j]) / (2.0 * bw * bw)).exp()
            })
        };
        let a = train_svm(&gram, &y, &SvmParams::new(c).with_tol(1e-9)).unwrap();
        let b = train_svm(
            &doubled,
            &doubled_y,
            &SvmParams::new(c / 2.0).with_tol(1e-9),
        )
        .unwrap();
        let fa = decision_values(&a, &rows(&pts)).unwrap();
        let fb = decision_values(&b, &rows(&doubled_pts)).unwrap();
        for (u, v) in fa.iter().zip(&fb) {
            assert!((u - v).abs() < 1e-6, "seed {seed}: {u} vs {v}");
            if u.abs() > 1e-6 {
                assert_eq!(u.signum(), v.signum());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_feasibility_and_kkt(seed in 0u64..10_000, k in 2usize..20, c in 0.05f64..50.0) {
        let (_, y, gram) = instance(seed, k);
        let model = train_svm(&gram, &y, &SvmParams::new(c)).unwrap();
        let mut eq = 0.0;
        for (a, yi) in model.alphas.iter().zip(&y) {
            prop_assert!(*a >= 0.0 && *a <= c);
            eq += a * yi;
        }
        prop_assert!(eq.abs() <= 1e-8 * c * k as f64, "sum a y = {}", eq);
        prop_assert!(kkt_violation(&model, &gram, &y, c).unwrap() <= 1e-3);
    }

    #[test]
    fn label_flip_negates_exactly(seed in 0u64..10_000, k in 2usize..16) {
        let (_, y, gram) = instance(seed, k);
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        let a = train_svm(&gram, &y, &SvmParams::new(1.0)).unwrap();
        let b = train_svm(&gram, &flipped, &SvmParams::new(1.0)).unwrap();
        prop_assert_eq!(a.bias, -b.bias);
        let fa = decision_values(&a, &gram).unwrap();
        let fb = decision_values(&b, &gram).unwrap();
        for (u, v) in fa.iter().zip(&fb) {
            prop_assert_eq!(*u, -*v);
        }
    }

    #[test]
    fn order_does_not_change_predictions(seed in 0u64..10_000, k in 3usize..14) {
        let (_, y, gram) = instance(seed, k);
        let mut r = rng(seed ^ 0x5eed);
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let gram_p = DMatrix::from_fn(k, k, |i, j| gram[(perm[i], perm[j])]);
        let params = SvmParams::new(1.0).with_tol(1e-9);
        let a = train_svm(&gram, &y, &params).unwrap();
        let b = train_svm(&gram_p, &y_p, &params).unwrap();
        let fa = decision_values(&a, &gram).unwrap();
        let rows_p = DMatrix::from_fn(k, k, |i, j| gram[(i, perm[j])]);
        let fb = decision_values(&b, &rows_p).unwrap();
        for (u, v) in fa.iter().zip(&fb) {
            prop_assert!((u - v).abs() < 1e-6, "{} vs {}", u, v);
        }
    }
}
