use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Written beside every output as `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_ms: u128,
    pub elapsed_ms: f64,
}

pub struct Recorder {
    command: &'static str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl Recorder {
    pub fn start<T: Serialize>(command: &'static str, config: &T, seed: Option<u64>) -> Self {
        Self {
            command,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let mut file = File::open(path).with_context(|| format!("{}", path.display()))?;
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 64 * 1024];
        let mut bytes = 0u64;
        loop {
            let n = file.read(&mut buf).with_context(|| format!("{}", path.display()))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(hasher.finalize()),
            bytes,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write `<first output>.manifest.json`.
    pub fn finish(self) -> Result<()> {
        let Some(primary) = self.outputs.first().cloned() else {
            return Ok(());
        };
        let manifest = RunManifest {
            tool: "ccat",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_ms: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            elapsed_ms: self.clock.elapsed().as_secs_f64() * 1e3,
        };
        let mut path = primary.into_os_string();
        path.push(".manifest.json");
        ccat::io::write_json(PathBuf::from(path), &manifest)?;
        Ok(())
    }
}
