//! Parameter and multiply-accumulate counts, per-layer reports and the
//! compression order.

use serde::{Deserialize, Serialize};

use crate::convsim::output_size;
use crate::error::Result;
use crate::hotcake::{search::chain_params, DecomposedLayer, HotcakeRanks, KernelTensor};

pub trait ParamCount {
    fn param_count(&self) -> usize;
}

impl ParamCount for KernelTensor {
    /// `D_h · D_w · K1 · K2`.
    fn param_count(&self) -> usize {
        self.tensor().len()
    }
}

impl ParamCount for DecomposedLayer {
    /// `Σ K_1i·R_3i + D_h·D_w·∏R_3i·R_4 + R_4·K2`.
    fn param_count(&self) -> usize {
        chain_params(
            self.core.spec().spatial,
            self.channels.branches(),
            self.out_channels(),
            &self.ranks.to_flat(),
        )
    }
}

/// Multiply-accumulate count of a layer for an `input_hw` feature map.
///
/// Each stage costs (its output positions) × (its kernel volume). For the
/// sub-mode stages the untouched sibling sub-modes count as positions, so
/// stage `i` runs over `H·W·∏_{j<i} R_3j·∏_{j>i} K_1j` positions at volume
/// `K_1i·R_3i`. The core and output stages run at the strided output
/// resolution.
pub trait FlopCount {
    fn flops(&self, input_hw: (usize, usize)) -> Result<u64>;
}

impl FlopCount for KernelTensor {
    fn flops(&self, input_hw: (usize, usize)) -> Result<u64> {
        let (oh, ow) = output_size(input_hw.0, input_hw.1, self.spec())?;
        Ok((oh * ow) as u64 * self.param_count() as u64)
    }
}

impl FlopCount for DecomposedLayer {
    fn flops(&self, input_hw: (usize, usize)) -> Result<u64> {
        self.validate()?;
        let (oh, ow) = output_size(input_hw.0, input_hw.1, self.core.spec())?;
        let hw = (input_hw.0 * input_hw.1) as u64;
        let branches = self.channels.branches();
        let ranks = &self.ranks.input_ranks;
        let mut total = 0u64;
        for i in 0..branches.len() {
            let before: u64 = ranks[..i].iter().map(|&r| r as u64).product();
            let after: u64 = branches[i + 1..].iter().map(|&k| k as u64).product();
            total += hw * before * after * (branches[i] * ranks[i]) as u64;
        }
        let out_pos = (oh * ow) as u64;
        total += out_pos * self.core.param_count() as u64;
        total += out_pos * self.output_factor.len() as u64;
        Ok(total)
    }
}

/// Free-function form of [`FlopCount::flops`].
pub fn flop_estimate<L: FlopCount + ?Sized>(layer: &L, input_hw: (usize, usize)) -> Result<u64> {
    layer.flops(input_hw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerStatus {
    Compressed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub id: String,
    pub status: LayerStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub kernel_shape: Vec<usize>,
    #[serde(default)]
    pub branches: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<HotcakeRanks>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_ranks: Option<HotcakeRanks>,
    #[serde(default)]
    pub candidates_evaluated: usize,
    #[serde(default = "yes")]
    pub feasible: bool,
    pub original_params: usize,
    pub compressed_params: usize,
    pub compression_ratio: f64,
    pub approx_error: f64,
    pub flop_original: u64,
    pub flop_compressed: u64,
}

fn yes() -> bool {
    true
}

impl LayerReport {
    /// A layer left as is; compressed figures equal the original ones.
    pub fn pass_through(id: &str, status: LayerStatus, message: Option<String>, k: &KernelTensor, flops: u64) -> Self {
        let p = k.param_count();
        LayerReport {
            id: id.to_string(),
            status,
            message,
            kernel_shape: k.tensor().shape().to_vec(),
            branches: Vec::new(),
            ranks: None,
            center_ranks: None,
            candidates_evaluated: 0,
            feasible: true,
            original_params: p,
            compressed_params: p,
            compression_ratio: 1.0,
            approx_error: 0.0,
            flop_original: flops,
            flop_compressed: flops,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub original_params: usize,
    pub compressed_params: usize,
    pub compression_ratio: f64,
    pub flop_original: u64,
    pub flop_compressed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub layers: Vec<LayerReport>,
    pub totals: Totals,
    /// Compressed layer ids by descending compression ratio.
    pub order: Vec<String>,
}

impl CompressionReport {
    pub fn from_layers(layers: Vec<LayerReport>) -> Self {
        let original_params = layers.iter().map(|l| l.original_params).sum();
        let compressed_params = layers.iter().map(|l| l.compressed_params).sum();
        let compression_ratio = if compressed_params == 0 {
            1.0
        } else {
            original_params as f64 / compressed_params as f64
        };
        let totals = Totals {
            original_params,
            compressed_params,
            compression_ratio,
            flop_original: layers.iter().map(|l| l.flop_original).sum(),
            flop_compressed: layers.iter().map(|l| l.flop_compressed).sum(),
        };
        let order = plan_compression_order(&layers);
        CompressionReport { layers, totals, order }
    }
}

/// Ids of compressed layers by descending compression ratio; equal ratios
/// are ordered by id.
pub fn plan_compression_order(reports: &[LayerReport]) -> Vec<String> {
    let mut entries: Vec<&LayerReport> =
        reports.iter().filter(|r| r.status == LayerStatus::Compressed).collect();
    entries.sort_by(|a, b| {
        b.compression_ratio
            .total_cmp(&a.compression_ratio)
            .then_with(|| a.id.cmp(&b.id))
    });
    entries.into_iter().map(|r| r.id.clone()).collect()
}
