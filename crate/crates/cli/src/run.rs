//! Output directory bookkeeping and the run manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use cpwl_geometry::net::{write_checkpoint, Checkpoint};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration; exit code 2.
    Config(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<cpwl_geometry::Error> for CliError {
    fn from(e: cpwl_geometry::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Prefixes a library validation failure with the config key it concerns.
pub fn check_key(key: &str, r: cpwl_geometry::Result<()>) -> CliResult<()> {
    r.map_err(|e| CliError::Config(format!("{key}: {e}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    tool_version: &'a str,
    seed: u64,
    config_sha256: String,
    inputs: &'a [FileHash],
    outputs: &'a [FileHash],
}

/// One command invocation: where inputs are resolved, where outputs go, and
/// what has been read and written so far.
pub struct Run {
    pub command: &'static str,
    pub seed: u64,
    pub workers: usize,
    out: PathBuf,
    base: PathBuf,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Run {
    pub fn new(command: &'static str, seed: u64, workers: usize, out: PathBuf, base: PathBuf) -> Self {
        Run {
            command,
            seed,
            workers,
            out,
            base,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Path relative to the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Reads an input file and records its hash under the name it was given.
    pub fn read_input(&mut self, p: &Path) -> CliResult<Vec<u8>> {
        let full = self.resolve(p);
        let bytes = std::fs::read(&full).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", full.display())))?;
        self.inputs.push(FileHash {
            path: p.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn read_checkpoint(&mut self, p: &Path) -> CliResult<Checkpoint> {
        let bytes = self.read_input(p)?;
        Ok(Checkpoint::from_bytes(&bytes)?)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(self.out.join(name), bytes)?;
        self.outputs.push(FileHash {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_checkpoint(&mut self, name: &str, ckpt: &Checkpoint) -> CliResult<()> {
        let path = self.out.join(name);
        write_checkpoint(&path, ckpt)?;
        let bytes = std::fs::read(&path)?;
        self.outputs.push(FileHash {
            path: name.into(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Renders a table through a writer callback into `name`.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> cpwl_geometry::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// Writes the resolved config and then the manifest, which lists every
    /// file written before it.
    pub fn finish(mut self, resolved_config: &str) -> CliResult<()> {
        self.write_bytes(RESOLVED_CONFIG_FILE, resolved_config.as_bytes())?;
        let manifest = Manifest {
            schema_version: 1,
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config_sha256: sha256_hex(resolved_config.as_bytes()),
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.out.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

/// Seed of the `i`-th independent sample of a run.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}
