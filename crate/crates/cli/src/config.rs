use std::path::{Path, PathBuf};

use nrb_core::online::OnlineConfig;
use nrb_core::NucleiConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

const PAPER_PRESET: &str = include_str!("../presets/paper.cfg");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Interval {
    pub fn points(&self) -> Vec<f64> {
        let n = self.count;
        (0..n)
            .map(|i| if i + 1 == n { self.hi } else { self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64 })
            .collect()
    }

    fn validate(&self, field: &str) -> Result<(), CliError> {
        if self.count < 2 {
            return Err(CliError::config(format!("{field}.count must be at least 2, got {}", self.count)));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(CliError::config(format!("{field} must satisfy lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSet {
    pub name: String,
    #[serde(flatten)]
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapConfig {
    pub query: f64,
    pub lambda1: (f64, f64),
    pub lambda2: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthsConfig {
    /// Single-Slater family: positions in `[-half_width, half_width]`.
    pub half_width: f64,
    pub charge: f64,
    pub parameters: usize,
    pub spatial_step: f64,
    pub quantiles: usize,
    /// Symmetric dimer family: half-distances in `[0, dimer_half_width]`.
    pub dimer_half_width: f64,
    pub kernel_points: usize,
    pub kernel_eigenvalues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub charges: Vec<f64>,
    pub training: Interval,
    pub tests: Vec<TestSet>,
    pub basis_size: usize,
    /// Basis sizes swept by `online`; empty means 2 up to the basis size.
    #[serde(default)]
    pub online_sizes: Vec<usize>,
    #[serde(default)]
    pub online: OnlineConfig,
    /// Parameters for `solve`; empty means the training points.
    #[serde(default)]
    pub solve: Vec<f64>,
    pub heatmap: HeatmapConfig,
    pub widths: WidthsConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn paper() -> Self {
        Self::parse(PAPER_PRESET, "paper preset").expect("bundled preset is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("{origin}: {e}")))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == CONFIG_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(CliError::Schema(format!(
                    "{origin}: config schema version {v}, expected {CONFIG_SCHEMA_VERSION}"
                )))
            }
            None => return Err(CliError::config(format!("{origin}: missing field `schema_version`"))),
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| CliError::config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.charges.is_empty() || self.charges.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
            return Err(CliError::config("charges must be a nonempty list of positive numbers"));
        }
        self.training.validate("training")?;
        for (i, t) in self.tests.iter().enumerate() {
            t.interval.validate(&format!("tests[{i}]"))?;
        }
        if self.basis_size < 2 || self.basis_size > self.training.count {
            return Err(CliError::config(format!(
                "basis_size must lie in [2, training.count = {}], got {}",
                self.training.count, self.basis_size
            )));
        }
        if let Some(n) = self.online_sizes.iter().find(|&&n| n == 0 || n > self.basis_size) {
            return Err(CliError::config(format!("online_sizes entry {n} outside [1, basis_size]")));
        }
        self.online.validate().map_err(|e| CliError::config(format!("online: {e}")))?;
        if self.heatmap.points < 2 {
            return Err(CliError::config("heatmap.points must be at least 2"));
        }
        let w = &self.widths;
        if !(w.half_width > 0.0 && w.charge > 0.0 && w.spatial_step > 0.0 && w.dimer_half_width > 0.0) {
            return Err(CliError::config("widths lengths, charge and step must be positive"));
        }
        if w.parameters < 2 || w.quantiles < 64 || w.kernel_points < 2 || !w.kernel_points.is_multiple_of(2) {
            return Err(CliError::config(
                "widths needs parameters ≥ 2, quantiles ≥ 64 and an even kernel_points",
            ));
        }
        Ok(())
    }

    /// Nuclei for parameter `r`: one nucleus at `r`, or all nuclei evenly
    /// spaced on `[-r, r]`.
    pub fn nuclei(&self, r: f64) -> Result<NucleiConfig, CliError> {
        let m = self.charges.len();
        let positions = if m == 1 {
            vec![r]
        } else {
            (0..m).map(|i| -r + 2.0 * r * i as f64 / (m - 1) as f64).collect()
        };
        NucleiConfig::new(positions, self.charges.clone()).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn online_sizes(&self) -> Vec<usize> {
        if self.online_sizes.is_empty() {
            (2..=self.basis_size).collect()
        } else {
            self.online_sizes.clone()
        }
    }

    pub fn solve_points(&self) -> Vec<f64> {
        if self.solve.is_empty() {
            self.training.points()
        } else {
            self.solve.clone()
        }
    }
}
