mod common;

use hotcake::linalg::orthonormal_basis;
use hotcake::rng::CounterRng;
use hotcake::{DenseTensor, Matrix};
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(1usize..5, 1..5)
}

fn tensor(shape: &[usize], seed: u64) -> DenseTensor {
    DenseTensor::random_normal(shape.to_vec(), &mut CounterRng::new(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfold_matches_definition(shape in shape_strategy(), seed in any::<u64>()) {
        let t = tensor(&shape, seed);
        for k in 0..shape.len() {
            let m = t.unfold(k).unwrap();
            let oracle = common::naive_unfold(&t, k);
            for (i, row) in oracle.iter().enumerate() {
                prop_assert_eq!(m.row(i), row.as_slice());
            }
        }
    }

    #[test]
    fn fold_inverts_unfold(shape in shape_strategy(), seed in any::<u64>()) {
        let t = tensor(&shape, seed);
        for k in 0..shape.len() {
            let back = DenseTensor::fold(&t.unfold(k).unwrap(), k, &shape).unwrap();
            prop_assert_eq!(&back, &t);
        }
    }

    #[test]
    fn permute_then_inverse(shape in shape_strategy(), seed in any::<u64>(), rot in 0usize..4) {
        let t = tensor(&shape, seed);
        let d = shape.len();
        let perm: Vec<usize> = (0..d).map(|i| (i + rot) % d).collect();
        let mut inv = vec![0; d];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let p = t.permute(&perm).unwrap();
        let expect: Vec<usize> = perm.iter().map(|&i| shape[i]).collect();
        prop_assert_eq!(p.shape(), expect.as_slice());
        prop_assert_eq!(p.permute(&inv).unwrap(), t);
    }

    #[test]
    fn mode_product_matches_definition(shape in shape_strategy(), seed in any::<u64>(), j in 1usize..5) {
        let t = tensor(&shape, seed);
        let mut rng = CounterRng::new(seed ^ 0xabc);
        for k in 0..shape.len() {
            let u = Matrix::random_normal(j, shape[k], &mut rng);
            let got = t.mode_product(&u, k).unwrap();
            let oracle = common::naive_mode_product(&t, &u, k);
            prop_assert!(common::max_abs_diff(got.data(), &oracle) <= 1e-12);
        }
    }

    #[test]
    fn distinct_mode_products_commute(shape in proptest::collection::vec(1usize..5, 2..5), seed in any::<u64>()) {
        let t = tensor(&shape, seed);
        let mut rng = CounterRng::new(seed.wrapping_add(1));
        let (a, b) = (0, shape.len() - 1);
        let u = Matrix::random_normal(3, shape[a], &mut rng);
        let v = Matrix::random_normal(2, shape[b], &mut rng);
        let x = t.mode_product(&u, a).unwrap().mode_product(&v, b).unwrap();
        let y = t.mode_product(&v, b).unwrap().mode_product(&u, a).unwrap();
        prop_assert!(common::max_abs_diff(x.data(), y.data()) <= 1e-12);
    }

    #[test]
    fn orthonormal_products_preserve_norm(shape in shape_strategy(), seed in any::<u64>(), extra in 0usize..3) {
        let t = tensor(&shape, seed);
        let mut rng = CounterRng::new(seed ^ 7);
        for k in 0..shape.len() {
            // J ≥ I_k with orthonormal columns
            let q = orthonormal_basis(&Matrix::random_normal(shape[k] + extra, shape[k], &mut rng));
            let p = t.mode_product(&q, k).unwrap();
            prop_assert!((p.frobenius_norm() - t.frobenius_norm()).abs() <= 1e-12 * t.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn mode_product_norm_bound(shape in shape_strategy(), seed in any::<u64>()) {
        let t = tensor(&shape, seed);
        let mut rng = CounterRng::new(seed ^ 11);
        for k in 0..shape.len() {
            let u = Matrix::random_normal(2, shape[k], &mut rng);
            let s = common::gram_singular_values(&u)[0];
            let p = t.mode_product(&u, k).unwrap();
            prop_assert!(p.frobenius_norm() <= s * t.frobenius_norm() * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn multilinear_equals_sequential(shape in shape_strategy(), seed in any::<u64>()) {
        let t = tensor(&shape, seed);
        let mut rng = CounterRng::new(seed ^ 13);
        let us: Vec<Matrix> = shape.iter().map(|&n| Matrix::random_normal(n + 1, n, &mut rng)).collect();
        let mut seq = t.clone();
        for (k, u) in us.iter().enumerate() {
            seq = seq.mode_product(u, k).unwrap();
        }
        let all = t.multilinear_product(&us).unwrap();
        prop_assert!(common::max_abs_diff(all.data(), seq.data()) <= 1e-12 * seq.max_abs().max(1.0));
    }

    #[test]
    fn reshape_keeps_data(shape in shape_strategy(), seed in any::<u64>()) {
        let t = tensor(&shape, seed);
        let flat = t.reshape(&[t.len()]).unwrap();
        prop_assert_eq!(flat.data(), t.data());
        prop_assert!(t.reshape(&[t.len() + 1]).is_err());
    }
}

#[test]
fn oracle_self_check() {
    // 2×3 matrix: mode-1 unfolding is the transpose
    let t = DenseTensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(common::naive_unfold(&t, 1), vec![vec![1.0, 4.0], vec![2.0, 5.0], vec![3.0, 6.0]]);
    let ev = common::symmetric_eigenvalues(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
    assert!((ev[0] - 3.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
}
