//! Run manifests: what a command read, which settings and seeds it used,
//! and digests of everything it wrote. No timestamps or host details, so a
//! rerun with the same inputs writes the same manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io(path))?))
}

/// Digest over every file below `dir`, in sorted relative-path order.
pub fn tree_sha256(dir: &Path) -> Result<String> {
    fn walk(root: &Path, dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(io(dir))? {
            let path = entry.map_err(io(dir))?.path();
            if path.is_dir() {
                walk(root, &path, files)?;
            } else {
                files.push(path.strip_prefix(root).expect("below root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let path = dir.join(&rel);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&path).map_err(io(&path))?);
    }
    Ok(format!("{:x}", h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective settings after flags, config and defaults are merged.
    pub settings: serde_json::Value,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    /// Input label → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the output directory → sha256.
    pub outputs: BTreeMap<String, String>,
    pub status: String,
}

impl RunManifest {
    pub fn new(command: &str, settings: &impl Serialize) -> Self {
        let settings = serde_json::to_value(settings).expect("settings serialize");
        let canonical = serde_json::to_string(&settings).expect("value serializes");
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(canonical.as_bytes()),
            settings,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            status: "ok".into(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value);
    }

    pub fn input_file(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.insert(label.into(), file_sha256(path)?);
        Ok(())
    }

    pub fn input_tree(&mut self, label: &str, dir: &Path) -> Result<()> {
        self.inputs.insert(label.into(), tree_sha256(dir)?);
        Ok(())
    }

    /// Records a file already written below `out`.
    pub fn output(&mut self, out: &Path, rel: &Path) -> Result<()> {
        let key = rel.to_string_lossy().replace('\\', "/");
        self.outputs.insert(key, file_sha256(&out.join(rel))?);
        Ok(())
    }

    /// Writes `bytes` to `out/rel` and records it.
    pub fn write(&mut self, out: &Path, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<()> {
        let rel = rel.as_ref();
        let path = out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io(dir))?;
        }
        fs::write(&path, bytes).map_err(io(&path))?;
        self.output(out, rel)
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(io(out))?;
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(io(&path))
    }
}
