//! Run manifests written beside every output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct FileEntry {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: Vec<String>,
    seed: u64,
    config: &'a Value,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    version: &'static str,
    created_unix: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Every regular file under `path` (or `path` itself), sorted.
fn files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut out = Vec::new();
        for entry in fs::read_dir(path).with_context(|| format!("listing {}", path.display()))? {
            let p = entry?.path();
            if p.is_file() && !is_manifest(&p) {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn is_manifest(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with("manifest.json"))
}

fn entries(paths: &[&Path]) -> Result<Vec<FileEntry>> {
    let mut out = Vec::new();
    for p in paths {
        for f in files(p)? {
            out.push(FileEntry {
                sha256: sha256_file(&f)?,
                path: f,
            });
        }
    }
    Ok(out)
}

/// `DIR/manifest.json` for a directory output, `FILE.manifest.json` otherwise.
pub fn manifest_path(primary: &Path) -> PathBuf {
    if primary.is_dir() {
        primary.join("manifest.json")
    } else {
        let mut name = primary.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        primary.with_file_name(name)
    }
}

/// Writes the manifest for one run next to `outputs[0]`.
pub fn write(
    command: &str,
    seed: u64,
    config: &Value,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<PathBuf> {
    let manifest = Manifest {
        command,
        argv: std::env::args().collect(),
        seed,
        config,
        inputs: entries(inputs)?,
        outputs: entries(outputs)?,
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    let path = manifest_path(outputs[0]);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
