//! On-disk formats: the `TNSR` tensor container, layer manifests and the
//! per-layer stage directories written by `decompose`.

mod manifest;
mod stages;
mod tensor_file;

use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub use manifest::{LayerEntry, Manifest, ManifestConfig};
pub use stages::{read_decomposed, write_decomposed, StageManifest, LAYER_FILE};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensor, write_tensor, Dtype, MAGIC, VERSION};

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
