use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::error::CliError;

/// 17 significant digits, round-trip safe.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("cannot write {}: {e}", path.display()))
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_error(&path, e))?;
        w.write_record(header).map_err(|e| io_error(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| io_error(&path, e))?;
        }
        w.flush().map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| io_error(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    /// Timing and run information, kept apart from the deterministic outputs.
    pub fn metadata(&self, command: &str, elapsed: Duration, extra: serde_json::Value) -> Result<PathBuf, CliError> {
        let meta = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "threads": rayon::current_num_threads(),
            "elapsed_seconds": elapsed.as_secs_f64(),
            "details": extra,
        });
        self.json(&format!("{command}.meta.json"), &meta)
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
