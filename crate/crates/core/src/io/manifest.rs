use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&fs::read(path)?),
        })
    }

    fn name(&self) -> &str {
        Path::new(&self.path)
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or(&self.path)
    }
}

/// Provenance record written next to every output.
///
/// `manifest_hash` covers the command, tool version, seed, config hash and
/// the file names and digests of inputs and outputs. Directories and wall
/// time are recorded but left out of the hash, so reruns into a fresh
/// directory hash identically exactly when their outputs are identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_time_ms: u64,
    pub manifest_hash: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash: None,
            inputs: vec![],
            outputs: vec![],
            wall_time_ms: 0,
            manifest_hash: String::new(),
        }
    }

    pub fn with_config(mut self, config_text: &str) -> Self {
        self.config_hash = Some(sha256_hex(config_text.as_bytes()));
        self
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn compute_hash(&self) -> String {
        let mut text = format!(
            "command={}\nversion={}\nseed={}\nconfig={}\n",
            self.command,
            self.version,
            self.seed,
            self.config_hash.as_deref().unwrap_or("-")
        );
        for (kind, list) in [("in", &self.inputs), ("out", &self.outputs)] {
            for f in list {
                text.push_str(&format!("{kind}={}:{}\n", f.name(), f.sha256));
            }
        }
        sha256_hex(text.as_bytes())
    }

    pub fn finalize(mut self, wall_time_ms: u64) -> Self {
        self.wall_time_ms = wall_time_ms;
        self.manifest_hash = self.compute_hash();
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_toml()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_ignores_directories_and_wall_time() {
        let mut a = RunManifest::new("classify", 3);
        a.outputs.push(FileRecord {
            path: "/tmp/one/labels.pgm".into(),
            sha256: "00".into(),
        });
        let mut b = a.clone();
        b.outputs[0].path = "/elsewhere/labels.pgm".into();
        assert_eq!(a.clone().finalize(5).manifest_hash, b.finalize(900).manifest_hash);
        a.seed = 4;
        assert_ne!(a.compute_hash(), RunManifest::new("classify", 3).compute_hash());
    }
}
