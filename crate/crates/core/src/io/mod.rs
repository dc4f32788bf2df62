//! File formats: PNM images, histogram cubes, label maps with palettes,
//! classifier artifacts, model configuration files and run manifests.

mod artifacts;
pub mod config;
mod manifest;
mod pnm;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use artifacts::{
    decode_classifier, decode_cube, encode_classifier, encode_cube, read_classifier, read_cube,
    read_label_map, read_palette, write_classifier, write_cube, write_label_map, write_level_stack,
    Palette, CLASSIFIER_MAGIC, CUBE_MAGIC,
};
pub use config::{BlobNode, GridNode, MapEntry, ModelConfig, ModelNode, ShapeEntry, SourceNode};
pub use manifest::{sha256_hex, FileRecord, RunManifest};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pnm};

use crate::error::Result;

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}
