//! Content hashes of run artifacts and the `run.json` record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const RUN_RECORD: &str = "run.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let ft = entry.file_type().map_err(|e| Error::io(&path, e))?;
        if ft.is_dir() {
            walk(root, &path, out)?;
        } else if ft.is_file() {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// SHA-256 of every file below `root` except the run record, keyed by
/// `/`-separated relative path.
pub fn artifact_hashes(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    if root.is_dir() {
        walk(root, root, &mut files)?;
    }
    let mut out = BTreeMap::new();
    for rel in files {
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if key == RUN_RECORD {
            continue;
        }
        out.insert(key, hash_file(&root.join(&rel))?);
    }
    Ok(out)
}

/// Provenance written after every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub seed: u64,
    pub config: RunConfig,
    pub artifacts: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<RunRecord> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::data(format!("bad run record: {e}")))
    }
}

pub fn write_run_record(cfg: &RunConfig, stage: &str) -> Result<RunRecord> {
    let rec = RunRecord {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        stage: stage.to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        artifacts: artifact_hashes(&cfg.out)?,
    };
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let path = cfg.out.join(RUN_RECORD);
    let bytes = serde_json::to_vec_pretty(&rec).map_err(|e| Error::data(e.to_string()))?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(rec)
}
