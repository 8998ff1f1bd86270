use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use seat_core::fingerprint::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub wall_clock_secs: f64,
}

/// Collects a subcommand's inputs and outputs, refusing to clobber existing
/// files unless forced.
pub struct Recorder {
    dir: PathBuf,
    force: bool,
    started: Instant,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

impl Recorder {
    pub fn new(dir: &Path, force: bool) -> Self {
        Self {
            dir: dir.to_path_buf(),
            force,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Fails before any work is done if one of `names` would be overwritten.
    pub fn claim<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<()> {
        if self.force {
            return Ok(());
        }
        for name in names {
            let p = self.dir.join(name);
            if p.exists() {
                return Err(CliError::Exists(p));
            }
        }
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                self.inputs.push(hash_file(&p)?);
            }
        } else {
            self.inputs.push(hash_file(path)?);
        }
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let path = self.dir.join(name);
        if path.exists() && !self.force {
            return Err(CliError::Exists(path));
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Writes `<subcommand>.manifest.json` next to the outputs.
    pub fn finish(mut self, subcommand: &str, config_hash: &str, seed: Option<u64>) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        self.write(&manifest_name(subcommand), &bytes)?;
        Ok(manifest)
    }
}

pub fn manifest_name(subcommand: &str) -> String {
    format!("{subcommand}.manifest.json")
}
