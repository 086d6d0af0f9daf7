use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// Output directory; every file is written to a temporary sibling and renamed
/// into place.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.path(name);
        let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", target.display()));
        let mut tmp = NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` last.
    pub fn finish<T: Serialize>(mut self, subcommand: &str, spec: &Path, options: &T, seed: Option<u64>, timing: serde_json::Value) -> Result<(), CliError> {
        let manifest = Manifest {
            subcommand,
            spec: spec.display().to_string(),
            options: serde_json::to_value(options).map_err(|e| CliError::Io(e.to_string()))?,
            out_dir: self.dir.display().to_string(),
            version: env!("MERTON_VERSION"),
            seed,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.written.clone(),
            timing,
            argv: std::env::args().collect(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    spec: String,
    options: serde_json::Value,
    out_dir: String,
    version: &'static str,
    seed: Option<u64>,
    wall_time_seconds: f64,
    outputs: Vec<String>,
    /// Run-dependent measurements (solve times); kept out of the other outputs.
    timing: serde_json::Value,
    argv: Vec<String>,
}

pub fn num(x: f64) -> String {
    x.to_string()
}
