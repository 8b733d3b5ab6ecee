//! Run-directory handling: config snapshots, spec hashes and manifests.
//!
//! A run directory is stamped with the FNV hash of its resolved
//! configuration. Re-running with the same configuration rewrites the same
//! bytes; pointing a different configuration at a populated directory is
//! refused instead of silently overwriting it.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::UsageError;

pub fn fnv_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn manifest_text(snapshot: &str, seed: u64) -> String {
    format!(
        "spec_hash = {:016x}\nartifact_version = {}\nseed = {}\n[config]\n{}\n",
        fnv_hash(snapshot),
        env!("CARGO_PKG_VERSION"),
        seed,
        snapshot
    )
}

/// Create (or re-enter) the run directory and write its manifest.
pub fn prepare_out_dir(out: &Path, snapshot: &str, seed: u64) -> Result<()> {
    let manifest = manifest_text(snapshot, seed);
    let manifest_path = out.join("manifest.txt");
    if manifest_path.exists() {
        let existing = fs::read_to_string(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?;
        let existing_hash = existing.lines().next().unwrap_or_default();
        let new_hash = manifest.lines().next().unwrap_or_default();
        if existing_hash != new_hash {
            bail!(UsageError(format!(
                "{} already holds a run with a different configuration ({existing_hash} vs {new_hash}); \
                 choose a fresh --out directory",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(&manifest_path, manifest)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(())
}

pub fn write_file(out: &Path, name: &str, content: &str) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
