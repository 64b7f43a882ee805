use crate::error::Result;
use crate::hotcake::{reshape_kernel, ChannelFactorization, DecomposedLayer, HotcakeRanks, KernelTensor};
use crate::tensor::DenseTensor;
use crate::tucker::{self, HosvdOptions, TuckerFactors, TuckerRanks};

/// Turns Tucker factors of a `[D_h, D_w, K_11, …, K_1l, K2]` tensor into stage
/// kernels.
fn assemble(
    k: &KernelTensor,
    cf: &ChannelFactorization,
    ranks: &HotcakeRanks,
    f: &TuckerFactors,
    approx_error: f64,
    seed: u64,
) -> Result<DecomposedLayer> {
    let l = cf.len();
    let input_factors = (0..l)
        .map(|i| {
            let u = &f.factors[2 + i];
            DenseTensor::new(vec![1, 1, u.rows(), u.cols()], u.data().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let u_out = f.factors[2 + l].transpose();
    let output_factor = DenseTensor::new(vec![1, 1, u_out.rows(), u_out.cols()], u_out.into_data())?;
    let (dh, dw) = k.spec().spatial;
    let merged: usize = ranks.input_ranks.iter().product();
    let core_t = f.core.reshape(&[dh, dw, merged, ranks.output_rank])?;
    let layer = DecomposedLayer {
        input_factors,
        core: KernelTensor::new(core_t, *k.spec())?,
        output_factor,
        channels: cf.clone(),
        ranks: ranks.clone(),
        approx_error,
        seed,
    };
    layer.validate()?;
    Ok(layer)
}

/// Decomposes one convolution into `l` pointwise sub-mode stages, a spatial
/// core and a pointwise output stage. Spatial modes are never truncated.
pub fn decompose_layer(
    k: &KernelTensor,
    cf: &ChannelFactorization,
    ranks: &HotcakeRanks,
    opts: &HosvdOptions,
) -> Result<DecomposedLayer> {
    ranks.validate(cf, k.out_channels())?;
    let k_new = reshape_kernel(k, cf)?;
    let l = cf.len();
    let (dh, dw) = k.spec().spatial;
    let mut full = vec![dh, dw];
    full.extend(ranks.to_flat());
    let modes: Vec<usize> = (2..3 + l).collect();
    let f = tucker::hosvd(&k_new, &TuckerRanks(full), &modes, opts)?;
    let err = tucker::approx_error(&k_new, &f)?;
    assemble(k, cf, ranks, &f, err, opts.seed)
}

/// Tucker-2 baseline: HOSVD over the input and output channel modes of the
/// 4-way kernel, giving a `1×1 → D×D → 1×1` chain.
pub fn tucker2_decompose(k: &KernelTensor, r3: usize, r4: usize, opts: &HosvdOptions) -> Result<DecomposedLayer> {
    let cf = ChannelFactorization::new(vec![k.in_channels()])?;
    let ranks = HotcakeRanks::new(vec![r3], r4);
    ranks.validate(&cf, k.out_channels())?;
    let (dh, dw) = k.spec().spatial;
    let f = tucker::hosvd(k.tensor(), &TuckerRanks(vec![dh, dw, r3, r4]), &[2, 3], opts)?;
    let err = tucker::approx_error(k.tensor(), &f)?;
    assemble(k, &cf, &ranks, &f, err, opts.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hotcake::{factorize_channels, ConvSpec, ParamCount};
    use crate::rng::CounterRng;

    fn random_kernel(shape: [usize; 4], seed: u64) -> KernelTensor {
        let t = DenseTensor::random_normal(shape.to_vec(), &mut CounterRng::new(seed)).unwrap();
        let spec = ConvSpec::new((shape[0], shape[1]), (1, 1), (shape[0] / 2, shape[1] / 2)).unwrap();
        KernelTensor::new(t, spec).unwrap()
    }

    #[test]
    fn stage_shapes() {
        let k = random_kernel([3, 3, 16, 12], 1);
        let cf = factorize_channels(16, 2).unwrap();
        let dl = decompose_layer(&k, &cf, &HotcakeRanks::new(vec![2, 3], 5), &HosvdOptions::default()).unwrap();
        assert_eq!(dl.input_factors[0].shape(), &[1, 1, 4, 2]);
        assert_eq!(dl.input_factors[1].shape(), &[1, 1, 4, 3]);
        assert_eq!(dl.core.tensor().shape(), &[3, 3, 6, 5]);
        assert_eq!(dl.output_factor.shape(), &[1, 1, 5, 12]);
        assert!(!dl.is_full_rank());
        let stage_sum: usize = dl.stages().iter().map(|s| s.len()).sum();
        assert_eq!(dl.param_count(), stage_sum);
    }

    #[test]
    fn rank_bounds_rejected() {
        let k = random_kernel([1, 1, 8, 4], 2);
        let cf = factorize_channels(8, 2).unwrap();
        let o = HosvdOptions::default();
        assert!(decompose_layer(&k, &cf, &HotcakeRanks::new(vec![3, 2], 4), &o).is_err());
        assert!(decompose_layer(&k, &cf, &HotcakeRanks::new(vec![2, 2], 5), &o).is_err());
        assert!(decompose_layer(&k, &cf, &HotcakeRanks::new(vec![2], 4), &o).is_err());
        assert!(tucker2_decompose(&k, 9, 1, &o).is_err());
        assert!(tucker2_decompose(&k, 1, 0, &o).is_err());
    }

    #[test]
    fn full_rank_reconstructs_kernel() {
        let k = random_kernel([3, 3, 8, 6], 3);
        let cf = factorize_channels(8, 3).unwrap();
        let dl = decompose_layer(&k, &cf, &HotcakeRanks::new(vec![2, 2, 2], 6), &HosvdOptions::default()).unwrap();
        assert!(dl.is_full_rank());
        assert!(dl.approx_error < 1e-12);
        let back = dl.reconstruct_kernel().unwrap();
        let err = back.tensor().sub(k.tensor()).unwrap().frobenius_norm() / k.tensor().frobenius_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn tucker2_matches_single_branch() {
        let k = random_kernel([3, 3, 10, 7], 4);
        let o = HosvdOptions::default();
        let t2 = tucker2_decompose(&k, 4, 3, &o).unwrap();
        let cf = ChannelFactorization::new(vec![10]).unwrap();
        let h1 = decompose_layer(&k, &cf, &HotcakeRanks::new(vec![4], 3), &o).unwrap();
        assert!((t2.approx_error - h1.approx_error).abs() < 1e-9);
        assert_eq!(t2.param_count(), 10 * 4 + 9 * 4 * 3 + 7 * 3);
    }
}
