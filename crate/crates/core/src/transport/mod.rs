//! Optimal transport between Slater mixtures.
//!
//! Mixtures are compared with the mixture Wasserstein distance: a discrete
//! transport problem whose ground cost is the closed-form `W2²` between
//! components. Several mixtures are coupled jointly by a multi-marginal
//! plan, whose support defines the approximate mixture barycenter.

mod lp;
mod multimarginal;
mod vertices;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slater::{w2_squared, SlaterMixture};

pub use lp::{solve_transportation_lp, CostMatrix};
pub use multimarginal::{approx_barycenter, multimarginal_plan, pairwise_cost, MultiMarginalPlan};
pub use vertices::{enumerate_vertices, enumerate_vertices_by_pivoting, DEFAULT_VERTEX_BUDGET};

/// Marginal totals may differ by at most this much.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Coupling between two discrete weight vectors, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
}

impl TransportPlan {
    pub(crate) fn from_parts(entries: Vec<f64>, row_marginal: Vec<f64>, col_marginal: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), row_marginal.len() * col_marginal.len());
        TransportPlan {
            rows: row_marginal.len(),
            cols: col_marginal.len(),
            entries,
            row_marginal,
            col_marginal,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    /// Number of entries strictly above `tol`.
    pub fn support_size(&self, tol: f64) -> usize {
        self.entries.iter().filter(|v| **v > tol).count()
    }

    /// Largest deviation of a row or column sum from its marginal.
    pub fn marginal_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            let s: f64 = (0..self.cols).map(|j| self.get(i, j)).sum();
            worst = worst.max((s - self.row_marginal[i]).abs());
        }
        for j in 0..self.cols {
            let s: f64 = (0..self.rows).map(|i| self.get(i, j)).sum();
            worst = worst.max((s - self.col_marginal[j]).abs());
        }
        worst
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Σ w_ij c_ij`.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        self.entries.iter().zip(cost.values()).map(|(w, c)| w * c).sum()
    }

    pub fn transposed(&self) -> TransportPlan {
        let mut e = vec![0.0; self.entries.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                e[j * self.rows + i] = self.get(i, j);
            }
        }
        TransportPlan::from_parts(e, self.col_marginal.clone(), self.row_marginal.clone())
    }
}

/// Checks that both marginals are nonnegative, finite and share a total.
pub(crate) fn check_marginals(row: &[f64], col: &[f64]) -> Result<()> {
    if row.is_empty() || col.is_empty() {
        return Err(Error::invalid("marginals must be nonempty"));
    }
    if row.iter().chain(col).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("marginals must be nonnegative and finite"));
    }
    let a: f64 = row.iter().sum();
    let b: f64 = col.iter().sum();
    if (a - b).abs() > MARGINAL_TOL * a.max(b).max(1.0) {
        return Err(Error::invalid(format!("marginal totals differ: {a} vs {b}")));
    }
    Ok(())
}

/// `W2²` between every pair of components.
pub fn component_costs(m1: &SlaterMixture, m2: &SlaterMixture) -> CostMatrix {
    let a = m1.components();
    let b = m2.components();
    CostMatrix::from_fn(a.len(), b.len(), |i, j| w2_squared(&a[i], &b[j]))
}

/// Mixture Wasserstein distance and an optimal component coupling.
pub fn mw2(m1: &SlaterMixture, m2: &SlaterMixture) -> Result<(f64, TransportPlan)> {
    let (plan, obj) = solve_transportation_lp(&component_costs(m1, m2), m1.weights(), m2.weights())?;
    Ok((obj.max(0.0).sqrt(), plan))
}
