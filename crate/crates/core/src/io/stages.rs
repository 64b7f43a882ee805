//! Per-layer stage directory: one `TNSR` file per stage kernel plus a
//! `layer.json` describing how they chain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hotcake::{ChannelFactorization, ConvSpec, DecomposedLayer, HotcakeRanks, KernelTensor};

use super::{read_tensor, write_atomic, write_tensor, Dtype};

pub const LAYER_FILE: &str = "layer.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub id: String,
    pub branches: ChannelFactorization,
    pub ranks: HotcakeRanks,
    pub spec: ConvSpec,
    pub approx_error: f64,
    pub seed: u64,
    pub input_factors: Vec<String>,
    pub core: String,
    pub output_factor: String,
}

fn input_factor_name(i: usize) -> String {
    format!("input_factor_{i}.tnsr")
}

/// Writes `dir/input_factor_i.tnsr`, `dir/core.tnsr`, `dir/output_factor.tnsr`
/// and `dir/layer.json`.
pub fn write_decomposed(dir: &Path, id: &str, dl: &DecomposedLayer) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let sm = StageManifest {
        id: id.to_string(),
        branches: dl.channels.clone(),
        ranks: dl.ranks.clone(),
        spec: *dl.core.spec(),
        approx_error: dl.approx_error,
        seed: dl.seed,
        input_factors: (0..dl.input_factors.len()).map(input_factor_name).collect(),
        core: "core.tnsr".into(),
        output_factor: "output_factor.tnsr".into(),
    };
    for (f, name) in dl.input_factors.iter().zip(&sm.input_factors) {
        write_tensor(&dir.join(name), f, Dtype::F64)?;
    }
    write_tensor(&dir.join(&sm.core), dl.core.tensor(), Dtype::F64)?;
    write_tensor(&dir.join(&sm.output_factor), &dl.output_factor, Dtype::F64)?;
    let mut json = serde_json::to_string_pretty(&sm)?;
    json.push('\n');
    write_atomic(&dir.join(LAYER_FILE), json.as_bytes())
}

/// Reads a stage directory back and checks the shape chain.
pub fn read_decomposed(dir: &Path) -> Result<(StageManifest, DecomposedLayer)> {
    let text = std::fs::read_to_string(dir.join(LAYER_FILE))?;
    let sm: StageManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad {LAYER_FILE}: {e}")))?;
    let names = sm.input_factors.iter().chain([&sm.core, &sm.output_factor]);
    if names.into_iter().any(|n| n.contains('/') || n.contains('\\') || n == ".." || n.is_empty()) {
        return Err(Error::Format("stage file names must be plain file names".into()));
    }
    let input_factors = sm
        .input_factors
        .iter()
        .map(|n| read_tensor(&dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    let core_t = read_tensor(&dir.join(&sm.core))?;
    if core_t.ndim() != 4 {
        return Err(Error::SizeMismatch(format!("broken stage chain: core is {:?}", core_t.shape())));
    }
    let core = KernelTensor::new(core_t, sm.spec)
        .map_err(|e| Error::SizeMismatch(format!("broken stage chain: {e}")))?;
    let dl = DecomposedLayer {
        input_factors,
        core,
        output_factor: read_tensor(&dir.join(&sm.output_factor))?,
        channels: sm.branches.clone(),
        ranks: sm.ranks.clone(),
        approx_error: sm.approx_error,
        seed: sm.seed,
    };
    dl.validate()?;
    Ok((sm, dl))
}
