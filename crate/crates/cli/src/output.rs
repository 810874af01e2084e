//! Report writers: manifest, CSV run log, JSON documents and field dumps.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use fotinv_core::optimize::IterRecord;

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub version: &'a str,
    pub warm_start: bool,
    pub noise: f64,
}

pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    config_bytes: &[u8],
    seed: u64,
    warm_start: bool,
    noise: f64,
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        config_sha256: sha256_hex(config_bytes),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        warm_start,
        noise,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Config(format!("serialisation: {e}")))?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    Ok(())
}

/// One row per logged iteration: iter, p, step, per-patch misfits,
/// regulariser, total and the projected stationarity residual.
pub fn write_run_csv(path: &Path, records: &[IterRecord], n: usize) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("iter,p,step");
    for i in 1..=n {
        out.push_str(&format!(",misfit_{i}"));
    }
    out.push_str(",regulariser,total,residual\n");
    for r in records {
        out.push_str(&format!("{},{},{:.17e}", r.iter, r.p, r.step));
        for m in &r.misfits {
            out.push_str(&format!(",{m:.17e}"));
        }
        out.push_str(&format!(
            ",{:.17e},{:.17e},{:.17e}\n",
            r.regulariser, r.total, r.residual
        ));
    }
    write_text(path, &out)
}

pub fn ensure_out_dirs(out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir.join("fields"))?;
    Ok(())
}
