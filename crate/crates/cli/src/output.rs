//! Output directory layout: CSV files plus a `meta.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const META_FILE: &str = "meta.json";

/// Sidecar describing how the files next to it were produced. Holds no
/// timestamps so that reruns are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<String>,
    /// Command-specific summary.
    pub summary: serde_json::Value,
}

impl Meta {
    pub fn new(command: &'static str, seed: u64, config_sha256: &str) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: config_sha256.to_owned(),
            files: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<fs::File>> {
        let path = self.path(name);
        self.written.push(name.to_owned());
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_owned());
        Ok(())
    }

    /// Writes the sidecar listing every file produced so far.
    pub fn finish(self, mut meta: Meta) -> Result<()> {
        meta.files = self.written.clone();
        let mut out = self;
        out.json(META_FILE, &meta)
    }
}

/// Formats an optional float for a CSV cell; empty when absent.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
