//! Provenance record written beside the outputs of every command.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input path -> hex sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

/// Hex sha256 of a file's bytes; a directory hashes its sorted file names and contents.
pub fn sha256_path(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        entries.sort();
        for entry in entries.iter().filter(|p| p.is_file()) {
            hasher.update(entry.file_name().unwrap_or_default().as_encoded_bytes());
            hasher.update(fs::read(entry)?);
        }
    } else {
        hasher.update(fs::read(path)?);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// `out.jsonl` -> `out.jsonl.manifest.json`; a directory gets `run.manifest.json` inside.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("run.manifest.json")
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_at: Utc::now(),
            finished_at: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Stamps the finish time and writes the manifest beside `primary_output`.
    pub fn finish(mut self, primary_output: &Path) -> io::Result<PathBuf> {
        self.finished_at = Some(Utc::now());
        let path = manifest_path_for(primary_output);
        let json = serde_json::to_vec_pretty(&self).map_err(io::Error::other)?;
        fs::write(&path, json)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lands_beside_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("gen.jsonl");
        fs::write(&out, "{}\n").unwrap();
        let mut m = RunManifest::start("generate", 13, serde_json::json!({"setting": "fine_tuned"}));
        m.input(&out).unwrap();
        m.output(&out);
        let path = m.finish(&out).unwrap();
        assert_eq!(path, dir.path().join("gen.jsonl.manifest.json"));
        let back: RunManifest = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
        assert_eq!(back.seed, 13);
        assert!(back.finished_at.is_some());
        assert_eq!(manifest_path_for(dir.path()), dir.path().join("run.manifest.json"));
    }
}
