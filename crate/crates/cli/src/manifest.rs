use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use fedhet::data::DataSource;
use fedhet::orchestrator::{ExperimentConfig, PARTITION_FILE, TEST_FILE, TRAIN_FILE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// What was run, on which inputs, and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Digest of the command, the configuration (without transport settings)
    /// and the dataset bytes.
    pub input_hash: String,
    pub artifacts: Vec<Artifact>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn feed_file(h: &mut Sha256, path: &Path) -> CliResult<()> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(&bytes);
    Ok(())
}

/// Transport settings do not change results and are left out.
pub fn input_hash(command: &str, cfg: &ExperimentConfig) -> CliResult<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    let mut c = serde_json::to_value(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(obj) = c.as_object_mut() {
        obj.remove("transport");
    }
    h.update(c.to_string().as_bytes());
    match (&cfg.prepared_dir, &cfg.data) {
        (Some(dir), _) => {
            for name in [TRAIN_FILE, TEST_FILE, PARTITION_FILE] {
                feed_file(&mut h, &dir.join(name))?;
            }
        }
        (None, DataSource::StrokeCsv { path }) => feed_file(&mut h, path)?,
        // Generated data is fully described by the configuration.
        (None, _) => {}
    }
    Ok(format!("sha256:{:x}", h.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, input_hash: String, started_at: String) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            input_hash,
            artifacts: Vec::new(),
            started_at,
            finished_at: String::new(),
        }
    }

    pub fn add(&mut self, path: &Path) -> CliResult<()> {
        let sha256 = sha256_file(path)?;
        self.artifacts.push(Artifact {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&mut self, path: &Path) -> CliResult<()> {
        self.finished_at = now();
        let mut json = serde_json::to_vec_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        json.push(b'\n');
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, json).map_err(|e| io_error(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_error(path, e))
    }

    pub fn read(path: &Path) -> Option<Self> {
        let bytes = fs::read(path).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// True when this manifest was produced from `input_hash` and all of its
    /// artifacts are still present with the recorded content.
    pub fn is_current(&self, input_hash: &str) -> bool {
        self.input_hash == input_hash
            && !self.artifacts.is_empty()
            && self
                .artifacts
                .iter()
                .all(|a| sha256_file(&a.path).is_ok_and(|h| h == a.sha256))
    }
}
