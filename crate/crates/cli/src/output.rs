//! Report output: every command computes its full report set in memory and
//! only then touches the filesystem, so failures leave no partial outputs.
//! The resolved-config sidecar is the one file carrying a timestamp; report
//! bodies are byte-identical across reruns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rectify_core::{Error, Result};

pub struct OutputSet {
    files: Vec<(String, String)>,
}

impl OutputSet {
    pub fn new() -> Self {
        OutputSet { files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }

    /// Write everything, creating the directory first.
    pub fn write_all(self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for (name, content) in self.files {
            let path = dir.join(&name);
            std::fs::write(&path, content).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

/// Provenance sidecar: the fully resolved configuration of a run.
#[derive(Serialize)]
pub struct Sidecar<T: Serialize> {
    pub command: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    /// Unix seconds; the only field that differs between identical reruns.
    pub timestamp_unix: u64,
    pub inputs: BTreeMap<String, String>,
    pub config: T,
}

impl<T: Serialize> Sidecar<T> {
    pub fn new(command: &str, seed: u64, out_dir: &Path, workers: Option<usize>, config: T) -> Self {
        Sidecar {
            command: command.to_string(),
            seed,
            out_dir: out_dir.to_path_buf(),
            workers,
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            inputs: BTreeMap::new(),
            config,
        }
    }

    pub fn with_input(mut self, key: &str, path: &Path) -> Self {
        self.inputs.insert(key.to_string(), path.display().to_string());
        self
    }

    pub fn render(&self) -> String {
        rectify_core::report::to_json(self)
    }
}
