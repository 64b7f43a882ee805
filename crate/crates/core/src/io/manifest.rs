//! Layer manifest: a JSON list of kernels on disk plus the global run
//! configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hotcake::{CompressConfig, ConvSpec, HotcakeRanks, KernelTensor, NetworkLayer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub kernel_path: PathBuf,
    pub spatial: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub in_channels: usize,
    pub out_channels: usize,
    /// Flat `[R_31, …, R_3l, R_4]`; skips the rank search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_size: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifestConfig {
    pub branches_l: usize,
    pub search_diameter: usize,
    pub use_rsvd: bool,
    pub seed: u64,
    pub skip_min_in_channels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_budget: Option<usize>,
    pub input_size: [usize; 2],
}

impl Default for ManifestConfig {
    fn default() -> Self {
        let c = CompressConfig::default();
        ManifestConfig {
            branches_l: c.branches,
            search_diameter: c.search_diameter,
            use_rsvd: c.use_rsvd,
            seed: c.seed,
            skip_min_in_channels: c.skip_min_in_channels,
            param_budget: c.param_budget,
            input_size: [c.input_size.0, c.input_size.1],
        }
    }
}

impl ManifestConfig {
    pub fn to_compress_config(&self) -> CompressConfig {
        CompressConfig {
            branches: self.branches_l,
            search_diameter: self.search_diameter,
            use_rsvd: self.use_rsvd,
            seed: self.seed,
            skip_min_in_channels: self.skip_min_in_channels,
            param_budget: self.param_budget,
            input_size: (self.input_size[0], self.input_size[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub layers: Vec<LayerEntry>,
    #[serde(default)]
    pub config: ManifestConfig,
}

/// Ids become directory names, so keep them to a portable character set.
fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Format(format!("layer id {id:?} must be non-empty and use only [A-Za-z0-9_.-]")))
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Manifest> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
        let mut seen = std::collections::HashSet::new();
        for l in &m.layers {
            check_id(&l.id)?;
            if !seen.insert(l.id.as_str()) {
                return Err(Error::Format(format!("duplicate layer id {:?}", l.id)));
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        Manifest::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_json().as_bytes())
    }

    /// Reads every kernel and checks it against its entry.
    pub fn load_layers(&self, base_dir: &Path) -> Result<Vec<NetworkLayer>> {
        self.layers.iter().map(|e| e.load(base_dir)).collect()
    }
}

impl LayerEntry {
    pub fn spec(&self) -> Result<ConvSpec> {
        ConvSpec::new(
            (self.spatial[0], self.spatial[1]),
            (self.stride[0], self.stride[1]),
            (self.padding[0], self.padding[1]),
        )
    }

    pub fn load_kernel(&self, base_dir: &Path) -> Result<KernelTensor> {
        let t = super::read_tensor(&base_dir.join(&self.kernel_path))?;
        let expect = [self.spatial[0], self.spatial[1], self.in_channels, self.out_channels];
        if t.shape() != expect {
            return Err(Error::SizeMismatch(format!(
                "layer {}: manifest says {expect:?}, {} holds {:?}",
                self.id,
                self.kernel_path.display(),
                t.shape()
            )));
        }
        KernelTensor::new(t, self.spec()?)
    }

    pub fn load(&self, base_dir: &Path) -> Result<NetworkLayer> {
        let mut layer = NetworkLayer::new(self.id.clone(), self.load_kernel(base_dir)?);
        layer.ranks = self.ranks.as_deref().map(HotcakeRanks::from_flat).transpose()?;
        layer.branches = self.branches.clone();
        layer.input_size = self.input_size.map(|[h, w]| (h, w));
        Ok(layer)
    }
}
