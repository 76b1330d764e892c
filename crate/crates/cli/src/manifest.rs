//! Output staging and the per-run manifest.
//!
//! Outputs are buffered, then written together with a manifest holding
//! content digests of every input and output. The manifest has no
//! timestamps, so identical runs produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    tool_version: &'static str,
    core_version: &'static str,
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seed: Option<u64>,
    inputs: &'a [FileDigest],
    outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Run {
    command: String,
    out_dir: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<(String, Vec<u8>)>,
}

impl Run {
    pub fn new(command: impl Into<String>, out_dir: &Path) -> Self {
        Run { command: command.into(), out_dir: out_dir.to_path_buf(), inputs: Vec::new(), outputs: Vec::new() }
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        if !path.exists() {
            return Err(CliError::Config(format!("input {} does not exist", path.display())));
        }
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(bytes)
    }

    pub fn read_input_string(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = self.read_input(path)?;
        String::from_utf8(bytes).map_err(|e| CliError::io(path, e))
    }

    pub fn output(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((name.into(), bytes.into()));
    }

    /// Writes every staged output plus `manifest.<command>.json`, returning
    /// the written paths.
    pub fn finish(self, config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        let mut written = Vec::new();
        let mut digests = Vec::new();
        for (name, bytes) in &self.outputs {
            let path = self.out_dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            digests.push(FileDigest { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
            written.push(path);
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            core_version: veritrace_core::VERSION,
            command: &self.command,
            config_sha256: config.digest(),
            config,
            seed: config.corruption.seed.or(config.dataset.synthetic_seed),
            inputs: &self.inputs,
            outputs: digests,
        };
        let path = self.out_dir.join(format!("manifest.{}.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}
