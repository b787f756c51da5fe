//! Run directories and CSV/JSON outputs with metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct RunDir {
    pub path: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    file: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    version: &'static str,
    columns: Vec<String>,
    rows: usize,
}

impl RunDir {
    /// Creates `<output_dir>/<hash>-<timestamp>` or the explicit directory, never reusing one.
    pub fn create(cfg: &ExperimentConfig, command: &str, explicit: Option<&Path>) -> Result<Self, CliError> {
        let hash = cfg.hash();
        let path = match explicit {
            Some(p) => {
                if p.exists() && fs::read_dir(p)?.next().is_some() {
                    return Err(CliError::Io(format!("run directory {} exists and is not empty", p.display())));
                }
                p.to_path_buf()
            }
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
                let base = cfg.output_dir.join(format!("{hash}-{stamp}"));
                let mut p = base.clone();
                let mut k = 1;
                while p.exists() {
                    p = PathBuf::from(format!("{}-{k}", base.display()));
                    k += 1;
                }
                p
            }
        };
        fs::create_dir_all(&path)?;
        fs::write(path.join("config.toml"), cfg.resolved_toml())?;
        Ok(RunDir { path, config_hash: hash, seed: cfg.seed, command: command.to_string() })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes rows with a header plus a `<stem>.json` sidecar.
    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T], columns: &[&str]) -> Result<(), CliError> {
        let path = self.file(name);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        w.write_record(columns)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.write_sidecar(name, columns, rows.len())
    }

    pub fn write_sidecar(&self, name: &str, columns: &[&str], rows: usize) -> Result<(), CliError> {
        let side = Sidecar {
            file: name,
            command: &self.command,
            config_hash: &self.config_hash,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        };
        let stem = name.trim_end_matches(".csv");
        fs::write(self.file(&format!("{stem}.meta.json")), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        fs::write(self.file(name), serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }
}
