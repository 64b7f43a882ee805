use crate::error::{Error, Result};
use crate::hotcake::{ChannelFactorization, KernelTensor};
use crate::tensor::DenseTensor;

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Splits `k1` input channels into `branches` factors as evenly as possible.
///
/// Prime factors are taken largest first and each goes to the bucket with the
/// smallest running product (lowest index on ties); the buckets are returned
/// in ascending order.
pub fn factorize_channels(k1: usize, branches: usize) -> Result<ChannelFactorization> {
    if k1 == 0 || branches == 0 {
        return Err(Error::InvalidArgument("channel count and branch count must be positive".into()));
    }
    if branches == 1 {
        return ChannelFactorization::new(vec![k1]);
    }
    let mut primes = prime_factors(k1);
    if primes.len() < branches {
        return Err(Error::NotFactorable { k1, branches });
    }
    primes.sort_unstable_by(|a, b| b.cmp(a));
    let mut buckets = vec![1usize; branches];
    for p in primes {
        let (idx, _) = buckets
            .iter()
            .enumerate()
            .min_by_key(|&(i, &v)| (v, i))
            .expect("at least one bucket");
        buckets[idx] *= p;
    }
    buckets.sort_unstable();
    ChannelFactorization::new(buckets)
}

/// `[D_h, D_w, K1, K2]` → `[D_h, D_w, K_11, …, K_1l, K2]` by a pure reshape, so
/// `K_11` is the slowest-varying channel sub-index.
pub fn reshape_kernel(k: &KernelTensor, cf: &ChannelFactorization) -> Result<DenseTensor> {
    if cf.product() != k.in_channels() {
        return Err(Error::SizeMismatch(format!(
            "branches {:?} multiply to {}, kernel has {} input channels",
            cf.branches(),
            cf.product(),
            k.in_channels()
        )));
    }
    let s = k.tensor().shape();
    let mut shape = vec![s[0], s[1]];
    shape.extend_from_slice(cf.branches());
    shape.push(s[3]);
    k.tensor().reshape(&shape)
}
