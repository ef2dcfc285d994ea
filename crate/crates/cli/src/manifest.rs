//! Run manifests: what was run, with which inputs, and hashes of what it
//! wrote.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Invocation;
use crate::failure::Failure;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    pub seed: Option<u64>,
    pub outputs: Vec<OutputFile>,
    pub wall_clock_s: f64,
    pub created_unix_s: u64,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Hashes each named file in `dir`.
pub fn describe_outputs(dir: &Path, names: &[String]) -> Result<Vec<OutputFile>, Failure> {
    names
        .iter()
        .map(|n| {
            let (sha256, bytes) = sha256_file(&dir.join(n))?;
            Ok(OutputFile {
                path: n.clone(),
                sha256,
                bytes,
            })
        })
        .collect()
}

/// Writes to a temporary sibling, then renames over the target.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Failure::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_NAME), text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }
}
