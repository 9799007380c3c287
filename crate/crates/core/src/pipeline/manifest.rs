use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

/// One stage of a `run`, pointing at that stage's manifest by hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLink {
    pub stage: String,
    pub status: StageStatus,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub global_seed: u64,
    pub stage_seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub elapsed_seconds: f64,
    /// Artifact path (relative to the workdir when inside it) to sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
    pub timings: BTreeMap<String, f64>,
    pub config: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chain: Vec<ChainLink>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::json(path, e))
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Tracks what a running stage reads and writes.
pub(crate) struct StageContext {
    workdir: PathBuf,
    started: DateTime<Utc>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
    pub timings: BTreeMap<String, f64>,
}

impl StageContext {
    pub fn new(workdir: &Path) -> Self {
        StageContext {
            workdir: workdir.to_path_buf(),
            started: Utc::now(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.workdir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, PipelineError> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        self.inputs.insert(self.label(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> Result<String, PipelineError> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes)
            .map_err(|_| PipelineError::Artifact(format!("{} is not UTF-8", path.display())))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(
        &mut self,
        path: &Path,
    ) -> Result<T, PipelineError> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::json(path, e))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))?;
        self.outputs.insert(self.label(path), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(
        &mut self,
        path: &Path,
        value: &T,
    ) -> Result<(), PipelineError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| PipelineError::json(path, e))?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    pub fn count(&mut self, key: &str, value: usize) {
        self.counts.insert(key.to_string(), value as u64);
    }

    pub fn finish(
        self,
        stage: &str,
        global_seed: u64,
        stage_seed: u64,
        config: BTreeMap<String, String>,
        error: Option<String>,
    ) -> RunManifest {
        let finished = Utc::now();
        RunManifest {
            stage: stage.to_string(),
            status: if error.is_some() {
                StageStatus::Failed
            } else {
                StageStatus::Ok
            },
            error,
            global_seed,
            stage_seed,
            started_at: timestamp(self.started),
            finished_at: timestamp(finished),
            elapsed_seconds: (finished - self.started).num_milliseconds() as f64 / 1000.0,
            inputs: self.inputs,
            outputs: self.outputs,
            counts: self.counts,
            timings: self.timings,
            config,
            chain: Vec::new(),
        }
    }
}
