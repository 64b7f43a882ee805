mod common;

use hotcake::fixtures::{add_relative_noise, planted_tucker};
use hotcake::rng::CounterRng;
use hotcake::tucker::{approx_error, hosvd, reconstruct, HosvdOptions, TuckerRanks};
use hotcake::DenseTensor;

fn all_modes(d: usize) -> Vec<usize> {
    (0..d).collect()
}

#[test]
fn planted_tensors_reconstruct_at_true_ranks() {
    let cases: [(&[usize], &[usize]); 5] = [
        (&[10, 12, 14], &[2, 3, 4]),
        (&[32, 20], &[5, 7]),
        (&[6, 7, 8, 9], &[2, 2, 3, 4]),
        (&[5, 5, 6, 4, 7], &[2, 3, 1, 4, 2]),
        (&[32, 8, 16], &[32, 3, 5]),
    ];
    for (i, (dims, ranks)) in cases.iter().enumerate() {
        let t = planted_tucker(dims, ranks, i as u64).unwrap();
        let f = hosvd(&t, &TuckerRanks(ranks.to_vec()), &all_modes(dims.len()), &HosvdOptions::default()).unwrap();
        assert_eq!(f.core.shape(), *ranks);
        assert!(approx_error(&t, &f).unwrap() <= 1e-9, "{dims:?}");
    }
}

/// `‖T − T̂‖² ≤ Σ_k (tail energy of the mode-k unfolding)`, tails from an
/// independent Gram-eigen spectrum.
#[test]
fn error_bounded_by_tail_energies() {
    let mut rng = CounterRng::new(77);
    for trial in 0..100u64 {
        let d = 2 + (trial % 3) as usize;
        let dims: Vec<usize> = (0..d).map(|_| 2 + (rng.next_u64() % 6) as usize).collect();
        let ranks: Vec<usize> = dims.iter().map(|&n| 1 + (rng.next_u64() % n as u64) as usize).collect();
        let t = DenseTensor::random_normal(dims.clone(), &mut rng).unwrap();
        let f = hosvd(&t, &TuckerRanks(ranks.clone()), &all_modes(d), &HosvdOptions::default()).unwrap();
        let err2 = t.sub(&reconstruct(&f).unwrap()).unwrap().frobenius_norm().powi(2);
        let bound: f64 = (0..d)
            .map(|k| {
                let s = common::gram_singular_values(&t.unfold(k).unwrap());
                s.iter().skip(ranks[k]).map(|x| x * x).sum::<f64>()
            })
            .sum();
        assert!(err2 <= bound + 1e-8, "trial {trial}: {err2} > {bound}");
    }
}

#[test]
fn nested_ranks_never_increase_error() {
    let t = add_relative_noise(&planted_tucker(&[6, 7, 8], &[3, 3, 3], 5).unwrap(), 0.2, 5).unwrap();
    let opts = HosvdOptions::default();
    for k in 0..3 {
        let mut prev = f64::INFINITY;
        for r in 1..=t.shape()[k] {
            let mut ranks = vec![3, 3, 3];
            ranks[k] = r;
            let e = approx_error(&t, &hosvd(&t, &TuckerRanks(ranks), &[0, 1, 2], &opts).unwrap()).unwrap();
            assert!(e <= prev + 1e-12, "mode {k} rank {r}: {e} > {prev}");
            prev = e;
        }
    }
}

#[test]
fn full_core_is_all_orthogonal() {
    let t = DenseTensor::random_normal(vec![4, 5, 6], &mut CounterRng::new(3)).unwrap();
    let f = hosvd(&t, &TuckerRanks::full(t.shape()), &[0, 1, 2], &HosvdOptions::default()).unwrap();
    for k in 0..3 {
        let g = f.core.unfold(k).unwrap();
        let gram = g.matmul(&g.transpose()).unwrap();
        let s = common::gram_singular_values(&t.unfold(k).unwrap());
        for i in 0..gram.rows() {
            // slice norms are the mode-k singular values
            assert!((gram.get(i, i).sqrt() - s[i]).abs() <= 1e-10 * s[0]);
            for j in 0..gram.cols() {
                if i != j {
                    assert!(gram.get(i, j).abs() <= 1e-10 * s[0] * s[0], "mode {k} ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn randomized_matches_exact() {
    let t = add_relative_noise(&planted_tucker(&[20, 24, 30], &[4, 5, 6], 8).unwrap(), 1e-3, 8).unwrap();
    let ranks = TuckerRanks(vec![4, 5, 6]);
    let exact = hosvd(&t, &ranks, &[0, 1, 2], &HosvdOptions::default()).unwrap();
    let fast = hosvd(&t, &ranks, &[0, 1, 2], &HosvdOptions { use_rsvd: true, seed: 2, ..Default::default() }).unwrap();
    let a = reconstruct(&exact).unwrap();
    let b = reconstruct(&fast).unwrap();
    assert!(a.sub(&b).unwrap().frobenius_norm() / t.frobenius_norm() <= 1e-4);
    assert!((approx_error(&t, &exact).unwrap() - approx_error(&t, &fast).unwrap()).abs() <= 1e-4);
}

#[test]
fn partial_modes_leave_others_untouched() {
    let t = DenseTensor::random_normal(vec![3, 3, 8, 6], &mut CounterRng::new(4)).unwrap();
    let f = hosvd(&t, &TuckerRanks(vec![1, 1, 2, 3]), &[2, 3], &HosvdOptions::default()).unwrap();
    assert_eq!(f.core.shape(), &[3, 3, 2, 3]);
    assert_eq!(f.identity_modes, vec![true, true, false, false]);
}

#[test]
fn invalid_requests() {
    let t = DenseTensor::random_normal(vec![3, 4], &mut CounterRng::new(1)).unwrap();
    let o = HosvdOptions::default();
    assert!(hosvd(&t, &TuckerRanks(vec![4, 1]), &[0, 1], &o).is_err());
    assert!(hosvd(&t, &TuckerRanks(vec![0, 1]), &[0, 1], &o).is_err());
    assert!(hosvd(&t, &TuckerRanks(vec![1, 1]), &[2], &o).is_err());
    let nan = DenseTensor::new(vec![2], vec![f64::NAN, 1.0]).unwrap();
    assert!(hosvd(&nan, &TuckerRanks(vec![1]), &[0], &o).is_err());
}
