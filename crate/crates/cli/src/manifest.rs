//! `manifest.txt`: one per output directory.
//!
//! Plain `key=value` lines grouped under `[section]` headers. Everything
//! outside `[timing]` is a function of the inputs and flags, so reruns
//! differ only in that section.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.txt";

pub struct Manifest {
    command: String,
    config: Vec<(String, String)>,
    inputs: Vec<(String, String)>,
    results: Vec<(String, String)>,
    timing: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: Vec::new(),
            inputs: Vec::new(),
            results: Vec::new(),
            timing: Vec::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    /// Echoes a `key=value` config text line by line.
    pub fn config_text(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.config(k.trim(), v.trim());
            }
        }
        self
    }

    pub fn input(&mut self, label: &str, bytes: &[u8]) -> &mut Self {
        self.inputs.push((label.to_string(), sha256_hex(bytes)));
        self
    }

    pub fn result(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.results.push((key.to_string(), value.to_string()));
        self
    }

    pub fn timing(&mut self, key: &str, seconds: f64) -> &mut Self {
        self.timing.push((key.to_string(), format!("{seconds:.9}")));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool=otassign {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command={}", self.command);
        for (name, entries) in [
            ("config", &self.config),
            ("inputs", &self.inputs),
            ("results", &self.results),
            ("timing", &self.timing),
        ] {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k}={v}");
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// The directory that receives the manifest for an output file.
pub fn dir_of(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
