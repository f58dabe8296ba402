//! JSON file handed from the offline to the online stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::{HistoryEntry, ReducedBasis, Snapshot};
use crate::slater::{Slater, SlaterMixture};
use crate::transport::MultiMarginalPlan;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub parameter: f64,
    pub zeta: Vec<f64>,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRecord {
    pub shape: Vec<usize>,
    pub indices: Vec<Vec<usize>>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisArtifact {
    pub schema_version: u32,
    pub charges: Vec<f64>,
    pub training_interval: (f64, f64),
    pub snapshots: Vec<SnapshotRecord>,
    pub wstar: CouplingRecord,
    pub a: Vec<f64>,
    pub a_inverse: Vec<f64>,
    pub history: Vec<HistoryEntry>,
}

impl From<&ReducedBasis> for BasisArtifact {
    fn from(b: &ReducedBasis) -> Self {
        BasisArtifact {
            schema_version: SCHEMA_VERSION,
            charges: b.charges.clone(),
            training_interval: b.training_interval,
            snapshots: b
                .snapshots
                .iter()
                .map(|s| SnapshotRecord {
                    parameter: s.parameter,
                    zeta: s.mixture.components().iter().map(Slater::zeta).collect(),
                    positions: s.mixture.positions(),
                    weights: s.mixture.weights().to_vec(),
                })
                .collect(),
            wstar: CouplingRecord {
                shape: b.wstar.shape.clone(),
                indices: b.wstar.nonzeros.iter().map(|(k, _)| k.clone()).collect(),
                values: b.wstar.nonzeros.iter().map(|(_, w)| *w).collect(),
            },
            a: b.a.clone(),
            a_inverse: b.a_inverse.clone(),
            history: b.history.clone(),
        }
    }
}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::SchemaMismatch(msg.into())
}

impl BasisArtifact {
    /// Checks shapes and rebuilds the basis without recomputing `w*` or `A`.
    pub fn into_basis(self) -> Result<ReducedBasis> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(mismatch(format!(
                "artifact has schema version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let n = self.snapshots.len();
        if n == 0 {
            return Err(mismatch("artifact holds no snapshots"));
        }
        let snapshots = self
            .snapshots
            .into_iter()
            .map(|s| {
                if s.zeta.len() != s.positions.len() || s.weights.len() != s.positions.len() {
                    return Err(mismatch("snapshot arrays differ in length"));
                }
                let comps = s
                    .zeta
                    .iter()
                    .zip(&s.positions)
                    .map(|(&z, &r)| Slater::new(z, r))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Snapshot { parameter: s.parameter, mixture: SlaterMixture::new(comps, s.weights)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let shape: Vec<usize> = snapshots.iter().map(|s| s.mixture.components().len()).collect();
        let w = self.wstar;
        if w.shape != shape || w.indices.len() != w.values.len() {
            return Err(mismatch("coupling shape does not match the snapshots"));
        }
        if w.indices.iter().any(|k| k.len() != n || k.iter().zip(&shape).any(|(a, b)| a >= b)) {
            return Err(mismatch("coupling index out of range"));
        }
        if self.a.len() != n * n || self.a_inverse.len() != n * n {
            return Err(mismatch(format!("A and its inverse must hold {} entries", n * n)));
        }
        let marginals = snapshots.iter().map(|s| s.mixture.weights().to_vec()).collect();
        let wstar = MultiMarginalPlan { shape, nonzeros: w.indices.into_iter().zip(w.values).collect(), marginals };
        Ok(ReducedBasis {
            snapshots,
            charges: self.charges,
            training_interval: self.training_interval,
            wstar,
            a: self.a,
            a_inverse: self.a_inverse,
            history: self.history,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("artifact is not valid JSON: {e}")))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(mismatch(format!("artifact has schema version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(mismatch("artifact has no schema_version")),
        }
        serde_json::from_value(value).map_err(|e| mismatch(e.to_string()))
    }
}

pub fn save_basis(basis: &ReducedBasis, path: &Path) -> Result<()> {
    std::fs::write(path, BasisArtifact::from(basis).to_json())
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

pub fn load_basis(path: &Path) -> Result<ReducedBasis> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    BasisArtifact::from_json(&text)?.into_basis()
}
