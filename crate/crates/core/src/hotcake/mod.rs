//! Kernel compression pipeline: channel factorization, rank search, layer
//! decomposition and parameter/FLOP accounting.

mod accounting;
mod channels;
mod layer;
mod network;
mod search;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub use accounting::{
    flop_estimate, plan_compression_order, CompressionReport, FlopCount, LayerReport, LayerStatus, ParamCount, Totals,
};
pub use channels::{factorize_channels, reshape_kernel};
pub use layer::{decompose_layer, tucker2_decompose};
pub use network::{compress_network, CompressConfig, NetworkLayer, NetworkResult};
pub use search::{search_space, select_ranks, Candidate, Criterion, RankSelection, SearchConfig};

/// Spatial extent, stride and symmetric zero padding of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub spatial: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvSpec {
    pub fn new(spatial: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Result<Self> {
        if spatial.0 == 0 || spatial.1 == 0 {
            return Err(Error::InvalidArgument("kernel extent must be at least 1".into()));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        Ok(ConvSpec { spatial, stride, padding })
    }

    /// 1×1, stride 1, no padding.
    pub fn pointwise() -> Self {
        ConvSpec { spatial: (1, 1), stride: (1, 1), padding: (0, 0) }
    }
}

/// A `[D_h, D_w, K1, K2]` kernel and its convolution geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTensor {
    tensor: DenseTensor,
    spec: ConvSpec,
}

impl KernelTensor {
    pub fn new(tensor: DenseTensor, spec: ConvSpec) -> Result<Self> {
        if tensor.ndim() != 4 {
            return Err(Error::SizeMismatch(format!("kernel must be 4-way, got {:?}", tensor.shape())));
        }
        let s = tensor.shape();
        if (s[0], s[1]) != spec.spatial {
            return Err(Error::SizeMismatch(format!(
                "kernel spatial extent {}x{} disagrees with spec {:?}",
                s[0], s[1], spec.spatial
            )));
        }
        Ok(KernelTensor { tensor, spec })
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn in_channels(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.tensor.shape()[3]
    }
}

/// Input-channel branch sizes `K_11 ≤ … ≤ K_1l`, product `K1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ChannelFactorization {
    branches: Vec<usize>,
}

impl ChannelFactorization {
    pub fn new(branches: Vec<usize>) -> Result<Self> {
        if branches.is_empty() || branches.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid branch sizes {branches:?}")));
        }
        if branches.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(format!("branch sizes must be nondecreasing, got {branches:?}")));
        }
        Ok(ChannelFactorization { branches })
    }

    pub fn branches(&self) -> &[usize] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn product(&self) -> usize {
        self.branches.iter().product()
    }
}

impl TryFrom<Vec<usize>> for ChannelFactorization {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        ChannelFactorization::new(v)
    }
}

impl From<ChannelFactorization> for Vec<usize> {
    fn from(cf: ChannelFactorization) -> Self {
        cf.branches
    }
}

/// Ranks `(R_31, …, R_3l, R_4)` of a decomposed layer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HotcakeRanks {
    pub input_ranks: Vec<usize>,
    pub output_rank: usize,
}

impl HotcakeRanks {
    pub fn new(input_ranks: Vec<usize>, output_rank: usize) -> Self {
        HotcakeRanks { input_ranks, output_rank }
    }

    /// Splits a flat `[R_31, …, R_3l, R_4]` vector.
    pub fn from_flat(flat: &[usize]) -> Result<Self> {
        match flat.split_last() {
            Some((&r4, inputs)) if !inputs.is_empty() => Ok(HotcakeRanks::new(inputs.to_vec(), r4)),
            _ => Err(Error::InvalidArgument(format!("need at least two ranks, got {flat:?}"))),
        }
    }

    pub fn to_flat(&self) -> Vec<usize> {
        let mut v = self.input_ranks.clone();
        v.push(self.output_rank);
        v
    }

    pub fn validate(&self, cf: &ChannelFactorization, k2: usize) -> Result<()> {
        if self.input_ranks.len() != cf.len() {
            return Err(Error::SizeMismatch(format!(
                "{} input ranks for {} branches",
                self.input_ranks.len(),
                cf.len()
            )));
        }
        for (&r, &k) in self.input_ranks.iter().zip(cf.branches()) {
            if r == 0 || r > k {
                return Err(Error::RankOutOfRange { rank: r, max: k });
            }
        }
        if self.output_rank == 0 || self.output_rank > k2 {
            return Err(Error::RankOutOfRange { rank: self.output_rank, max: k2 });
        }
        Ok(())
    }
}

/// Articulated replacement for one convolution: `l` pointwise sub-mode stages
/// `[1,1,K_1i,R_3i]`, a spatial core `[D_h,D_w,∏R_3i,R_4]` with the original
/// geometry, and a pointwise output stage `[1,1,R_4,K2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedLayer {
    pub input_factors: Vec<DenseTensor>,
    pub core: KernelTensor,
    pub output_factor: DenseTensor,
    pub channels: ChannelFactorization,
    pub ranks: HotcakeRanks,
    pub approx_error: f64,
    pub seed: u64,
}

impl DecomposedLayer {
    /// Checks that every stage's output channels feed the next stage.
    pub fn validate(&self) -> Result<()> {
        let chain = |msg: String| Err(Error::SizeMismatch(format!("broken stage chain: {msg}")));
        let branches = self.channels.branches();
        if self.input_factors.len() != branches.len() || self.ranks.input_ranks.len() != branches.len() {
            return chain(format!(
                "{} input factors, {} ranks, {} branches",
                self.input_factors.len(),
                self.ranks.input_ranks.len(),
                branches.len()
            ));
        }
        for (i, f) in self.input_factors.iter().enumerate() {
            let expect = [1, 1, branches[i], self.ranks.input_ranks[i]];
            if f.shape() != expect {
                return chain(format!("input factor {i} is {:?}, expected {expect:?}", f.shape()));
            }
        }
        let r_prod: usize = self.ranks.input_ranks.iter().product();
        if self.core.in_channels() != r_prod || self.core.out_channels() != self.ranks.output_rank {
            return chain(format!(
                "core is {:?}, expected {r_prod} -> {} channels",
                self.core.tensor().shape(),
                self.ranks.output_rank
            ));
        }
        let os = self.output_factor.shape();
        if os.len() != 4 || os[0] != 1 || os[1] != 1 || os[2] != self.ranks.output_rank {
            return chain(format!("output factor is {os:?}"));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.channels.product()
    }

    pub fn out_channels(&self) -> usize {
        self.output_factor.shape()[3]
    }

    /// True when no mode was truncated, i.e. the chain reproduces the kernel
    /// exactly up to rounding.
    pub fn is_full_rank(&self) -> bool {
        self.ranks.input_ranks == self.channels.branches() && self.ranks.output_rank == self.out_channels()
    }

    /// Stage kernels in execution order.
    pub fn stages(&self) -> Vec<&DenseTensor> {
        let mut v: Vec<&DenseTensor> = self.input_factors.iter().collect();
        v.push(self.core.tensor());
        v.push(&self.output_factor);
        v
    }

    /// Multiplies the stages back into a single `[D_h, D_w, K1, K2]` kernel.
    pub fn reconstruct_kernel(&self) -> Result<KernelTensor> {
        self.validate()?;
        let (dh, dw) = self.core.spec().spatial;
        let mut shape = vec![dh, dw];
        shape.extend_from_slice(&self.ranks.input_ranks);
        shape.push(self.ranks.output_rank);
        let mut t = self.core.tensor().reshape(&shape)?;
        let l = self.input_factors.len();
        for (i, f) in self.input_factors.iter().enumerate() {
            let fs = f.shape();
            let u = crate::tensor::Matrix::new(fs[2], fs[3], f.data().to_vec())?;
            t = t.mode_product(&u, 2 + i)?;
        }
        let os = self.output_factor.shape();
        // output factor holds U5ᵀ as [R4, K2]
        let u5t = crate::tensor::Matrix::new(os[2], os[3], self.output_factor.data().to_vec())?;
        t = t.mode_product(&u5t.transpose(), 2 + l)?;
        let t = t.into_reshaped(&[dh, dw, self.in_channels(), self.out_channels()])?;
        KernelTensor::new(t, *self.core.spec())
    }
}
