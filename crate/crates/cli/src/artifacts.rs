//! Artifact placement and the run manifest.
//!
//! Every command honors one rule: outputs land at the path the user named,
//! resolved against `UQBENCH_OUT_ROOT` when that is set and the path is
//! relative. A `run` additionally records every file it wrote — with
//! SHA-256 digests — in `manifest.json`, so reruns can be checked for
//! bit-identical artifacts by comparing manifests alone.

use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable providing the default root for relative output
/// paths (default: the working directory).
pub const OUT_ROOT_ENV: &str = "UQBENCH_OUT_ROOT";

/// Resolves a user-supplied output path against the output root.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// Creates the parent directory of `path` if it has one.
pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(())
}

/// Streams a file through SHA-256, returning the lowercase hex digest.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file =
        std::fs::File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// SHA-256 of an in-memory blob (used for the config text).
pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One artifact of a run: path relative to the run directory plus size
/// and digest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// The reproducibility record of a `run`: the seed, the digest of the
/// config text that drove it, and every written artifact. Deliberately
/// free of timestamps and absolute paths so identical runs produce
/// identical manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub artifacts: Vec<ManifestEntry>,
}

impl Manifest {
    /// Collects digests for `files` (all inside `dir`), sorted by relative
    /// path for a stable serialization.
    pub fn collect(dir: &Path, seed: u64, config_sha256: String, files: &[PathBuf]) -> Result<Self> {
        let mut artifacts = Vec::with_capacity(files.len());
        for file in files {
            let rel = file
                .strip_prefix(dir)
                .with_context(|| format!("{} is outside {}", file.display(), dir.display()))?;
            artifacts.push(ManifestEntry {
                path: rel_to_slash(rel),
                bytes: std::fs::metadata(file)?.len(),
                sha256: sha256_file(file)?,
            });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self {
            schema_version: 1,
            seed,
            config_sha256,
            artifacts,
        })
    }

    /// Writes `manifest.json` into the run directory and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Portable (forward-slash) form of a relative path.
fn rel_to_slash(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
