mod common;

use hotcake::fixtures::planted_low_rank;
use hotcake::linalg::{orthonormality_defect, rsvd, singular_values, svd, RsvdParams};
use hotcake::rng::CounterRng;
use hotcake::Matrix;
use proptest::prelude::*;

fn frob_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `U diag(s) Vᵀ` with random orthonormal `U, V` and the given spectrum.
fn with_spectrum(rows: usize, cols: usize, s: &[f64], seed: u64) -> Matrix {
    planted_low_rank(rows, cols, s, 0.0, seed).unwrap()
}

#[test]
fn svd_matches_gram_oracle() {
    for (i, &(m, n)) in [(1, 1), (5, 3), (3, 5), (12, 12), (40, 17), (17, 40), (64, 30)].iter().enumerate() {
        let a = Matrix::random_normal(m, n, &mut CounterRng::new(i as u64));
        let s = singular_values(&a).unwrap();
        let oracle = common::gram_singular_values(&a);
        assert_eq!(s.len(), m.min(n));
        assert!(common::max_abs_diff(&s, &oracle) <= 1e-10 * oracle[0], "{m}x{n}");
    }
}

#[test]
fn eckart_young_tail_energy() {
    let a = Matrix::random_normal(30, 20, &mut CounterRng::new(5));
    let full = svd(&a).unwrap();
    for r in [1, 5, 10, 19, 20] {
        let ar = full.truncate(r).unwrap().reconstruct();
        let err2 = frob_diff(&a, &ar).powi(2);
        let tail: f64 = full.s[r..].iter().map(|x| x * x).sum();
        assert!((err2 - tail).abs() <= 1e-10 * a.frobenius_norm().powi(2), "r={r}");
    }
}

#[test]
fn rsvd_recovers_fast_decay_spectrum() {
    let spectrum: Vec<f64> = (0..40).map(|i| 0.5f64.powi(i)).collect();
    let a = with_spectrum(120, 80, &spectrum, 1);
    let exact = singular_values(&a).unwrap();
    for r in [1, 5, 10, 20] {
        let approx = rsvd(&a, r, RsvdParams::with_seed(3)).unwrap();
        for i in 0..r {
            assert!((approx.s[i] - exact[i]).abs() <= 1e-6 * exact[i], "r={r} i={i}");
        }
        assert!(orthonormality_defect(&approx.u) < 1e-12);
        assert!(orthonormality_defect(&approx.vt.transpose()) < 1e-12);
    }
}

#[test]
fn rsvd_near_optimal_over_seeds() {
    // slow decay plus noise: the tail is not negligible
    let spectrum: Vec<f64> = (0..30).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let a = planted_low_rank(100, 70, &spectrum, 1e-3, 9).unwrap();
    let full = svd(&a).unwrap();
    let r = 8;
    let optimal = full.s[r..].iter().map(|x| x * x).sum::<f64>().sqrt();
    let passing = (0..50)
        .filter(|&seed| {
            let approx = rsvd(&a, r, RsvdParams::with_seed(seed)).unwrap();
            frob_diff(&a, &approx.reconstruct()) <= 1.5 * optimal
        })
        .count();
    assert!(passing >= 48, "{passing}/50 within 1.5x of optimal");
}

#[test]
fn rsvd_is_deterministic_per_seed() {
    let a = Matrix::random_normal(50, 30, &mut CounterRng::new(2));
    let x = rsvd(&a, 5, RsvdParams::with_seed(4)).unwrap();
    let y = rsvd(&a, 5, RsvdParams::with_seed(4)).unwrap();
    assert_eq!(x, y);
}

#[test]
fn wide_and_tall_agree() {
    let a = with_spectrum(25, 60, &[9.0, 4.0, 1.0, 0.5, 0.1], 8);
    let x = rsvd(&a, 3, RsvdParams::with_seed(1)).unwrap();
    let y = rsvd(&a.transpose(), 3, RsvdParams::with_seed(1)).unwrap();
    assert!(common::max_abs_diff(&x.s, &y.s) < 1e-9);
    assert_eq!(x.u.rows(), 25);
    assert_eq!(x.vt.cols(), 60);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs(m in 1usize..24, n in 1usize..24, seed in any::<u64>()) {
        let a = Matrix::random_normal(m, n, &mut CounterRng::new(seed));
        let res = svd(&a).unwrap();
        prop_assert!(frob_diff(&a, &res.reconstruct()) <= 1e-11 * a.frobenius_norm().max(1.0));
        prop_assert!(orthonormality_defect(&res.u) <= 1e-12);
        prop_assert!(orthonormality_defect(&res.vt.transpose()) <= 1e-12);
        prop_assert!(res.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(res.s.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn rank_deficient_factors_stay_orthonormal(m in 4usize..20, n in 4usize..20, r in 1usize..4, seed in any::<u64>()) {
        let s: Vec<f64> = (0..r).map(|i| 3.0 - i as f64 * 0.5).collect();
        let a = with_spectrum(m, n, &s, seed);
        let res = svd(&a).unwrap();
        prop_assert!(orthonormality_defect(&res.u) <= 1e-10);
        prop_assert!(orthonormality_defect(&res.vt.transpose()) <= 1e-10);
        prop_assert!(res.s[r..].iter().all(|&x| x <= 1e-12 * s[0]));
    }
}
