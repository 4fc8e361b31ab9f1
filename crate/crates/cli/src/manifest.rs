//! `<out>.manifest.json`: what produced an output, from which inputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct InputDigest {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a C,
    inputs: Vec<InputDigest>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a file, or of a directory's sorted `(relative path, digest)`
/// listing.
pub fn digest(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for f in &files {
            let rel = f.strip_prefix(path).unwrap_or(f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(digest(f)?.as_bytes());
            h.update(b"\n");
        }
        Ok(hex(&h.finalize()))
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Writes the manifest beside `out`. Contains no timestamps, so reruns with
/// the same inputs produce the same bytes.
pub fn write<C: Serialize>(
    out: &Path,
    subcommand: &str,
    config: &C,
    inputs: &[&Path],
) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(InputDigest {
                path: p.to_path_buf(),
                sha256: digest(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = Manifest {
        tool: "worldplan",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config,
        inputs,
    };
    let path = manifest_path(out);
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}
