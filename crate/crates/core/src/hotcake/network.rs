//! Whole-network orchestration: every eligible layer goes through factorize →
//! select ranks → decompose, independently and in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hotcake::accounting::FlopCount;
use crate::hotcake::{
    decompose_layer, factorize_channels, reshape_kernel, select_ranks, ChannelFactorization, CompressionReport,
    Criterion, DecomposedLayer, HotcakeRanks, KernelTensor, LayerReport, LayerStatus, ParamCount, SearchConfig,
};
use crate::rng::derive_seed;
use crate::tucker::HosvdOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressConfig {
    /// Number of input-channel branches `l`.
    pub branches: usize,
    pub search_diameter: usize,
    pub use_rsvd: bool,
    pub seed: u64,
    /// Layers with fewer input channels are passed through.
    pub skip_min_in_channels: usize,
    /// Per-layer parameter cap for the rank search.
    pub param_budget: Option<usize>,
    /// Input feature-map size used for FLOP estimates.
    pub input_size: (usize, usize),
}

impl Default for CompressConfig {
    fn default() -> Self {
        CompressConfig {
            branches: 2,
            search_diameter: 3,
            use_rsvd: false,
            seed: 0,
            skip_min_in_channels: 4,
            param_budget: None,
            input_size: (32, 32),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayer {
    pub id: String,
    pub kernel: KernelTensor,
    /// Skip the search and use these ranks.
    pub ranks: Option<HotcakeRanks>,
    /// Override the automatic channel factorization.
    pub branches: Option<Vec<usize>>,
    pub input_size: Option<(usize, usize)>,
}

impl NetworkLayer {
    pub fn new(id: impl Into<String>, kernel: KernelTensor) -> Self {
        NetworkLayer { id: id.into(), kernel, ranks: None, branches: None, input_size: None }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkResult {
    pub report: CompressionReport,
    /// Decomposed layers in manifest order, compressed layers only.
    pub layers: Vec<(String, DecomposedLayer)>,
}

fn compress_one(
    layer: &NetworkLayer,
    cfg: &CompressConfig,
    seed: u64,
) -> Result<(LayerReport, Option<DecomposedLayer>)> {
    let k = &layer.kernel;
    let input_hw = layer.input_size.unwrap_or(cfg.input_size);
    let flop_original = k.flops(input_hw)?;
    if k.in_channels() < cfg.skip_min_in_channels || k.spec().spatial == (1, 1) {
        let why = if k.spec().spatial == (1, 1) {
            "pointwise layer".to_string()
        } else {
            format!("{} input channels", k.in_channels())
        };
        return Ok((LayerReport::pass_through(&layer.id, LayerStatus::Skipped, Some(why), k, flop_original), None));
    }

    let cf = match &layer.branches {
        Some(b) => ChannelFactorization::new(b.clone())?,
        None => factorize_channels(k.in_channels(), cfg.branches)?,
    };
    let (ranks, center, evaluated, feasible) = match &layer.ranks {
        Some(r) => (r.clone(), None, 0, true),
        None => {
            let k_new = reshape_kernel(k, &cf)?;
            let search = SearchConfig {
                diameter: cfg.search_diameter,
                criterion: Criterion::ErrorUnderBudget,
                budget: cfg.param_budget,
                center: None,
                use_rsvd: cfg.use_rsvd,
                seed,
            };
            let sel = select_ranks(&k_new, &search)?;
            (sel.ranks, Some(sel.center), sel.candidates.len(), sel.feasible)
        }
    };
    let opts = HosvdOptions { use_rsvd: cfg.use_rsvd, seed, ..Default::default() };
    let dl = decompose_layer(k, &cf, &ranks, &opts)?;
    let original = k.param_count();
    let compressed = dl.param_count();
    let report = LayerReport {
        id: layer.id.clone(),
        status: LayerStatus::Compressed,
        message: None,
        kernel_shape: k.tensor().shape().to_vec(),
        branches: cf.branches().to_vec(),
        ranks: Some(ranks),
        center_ranks: center,
        candidates_evaluated: evaluated,
        feasible,
        original_params: original,
        compressed_params: compressed,
        compression_ratio: original as f64 / compressed as f64,
        approx_error: dl.approx_error,
        flop_original,
        flop_compressed: dl.flops(input_hw)?,
    };
    Ok((report, Some(dl)))
}

/// Compresses every layer. Per-layer failures are recorded in the report as
/// pass-through entries and do not stop the run.
pub fn compress_network(layers: &[NetworkLayer], cfg: &CompressConfig) -> NetworkResult {
    let outcomes: Vec<(LayerReport, Option<DecomposedLayer>)> = layers
        .par_iter()
        .enumerate()
        .map(|(i, layer)| {
            let seed = derive_seed(cfg.seed, i as u64);
            compress_one(layer, cfg, seed).unwrap_or_else(|e| {
                let flops = layer.kernel.flops(layer.input_size.unwrap_or(cfg.input_size)).unwrap_or(0);
                let r = LayerReport::pass_through(&layer.id, LayerStatus::Failed, Some(e.to_string()), &layer.kernel, flops);
                (r, None)
            })
        })
        .collect();
    let mut reports = Vec::with_capacity(outcomes.len());
    let mut decomposed = Vec::new();
    for (r, dl) in outcomes {
        if let Some(dl) = dl {
            decomposed.push((r.id.clone(), dl));
        }
        reports.push(r);
    }
    NetworkResult { report: CompressionReport::from_layers(reports), layers: decomposed }
}
