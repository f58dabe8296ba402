//! Greedy construction of a reduced basis of Slater mixtures.
//!
//! The projection of a target `m` onto the approximate barycenters of a
//! basis is
//!
//! ```text
//! min_{λ ∈ Ω} min_{w ∈ Π(π, w*)} Σ w_{k',k} W2²(m_{k'}, Bar_k(λ)),
//! ```
//!
//! which is a quadratic `λᵀAλ + b_wᵀλ + c` with `A` independent of `w`.
//! After eliminating `λ` the objective is concave in `w`, so the minimum is
//! attained at a vertex of the transportation polytope `Π(π, w*)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slater::{w2_squared, ExtendedWeightDomain, Slater, SlaterMixture, WeightVector};
use crate::transport::{
    approx_barycenter, enumerate_vertices, mw2, multimarginal_plan, MultiMarginalPlan, TransportPlan,
    DEFAULT_VERTEX_BUDGET,
};

/// A solution together with the parameter that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub parameter: f64,
    pub mixture: SlaterMixture,
}

/// One greedy iteration: errors of the basis of size `basis_size` over the
/// training set, and the snapshot chosen next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub basis_size: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub max_error_squared: f64,
    pub mean_error_squared: f64,
    pub selected_index: Option<usize>,
    pub selected_parameter: Option<f64>,
}

/// Selected snapshots plus everything the online stage needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedBasis {
    pub snapshots: Vec<Snapshot>,
    pub charges: Vec<f64>,
    pub training_interval: (f64, f64),
    /// Optimal multi-marginal coupling at uniform weights.
    pub wstar: MultiMarginalPlan,
    /// `A = Σ_k w*_k A_k`, row-major.
    pub a: Vec<f64>,
    /// `A⁻¹`, row-major.
    pub a_inverse: Vec<f64>,
    pub history: Vec<HistoryEntry>,
}

/// Relative threshold on the smallest eigenvalue of `A`.
pub const POSITIVE_DEFINITE_TOL: f64 = 1e-10;

/// Distance from the boundary of `Ω` used when the unconstrained weights
/// fall outside it.
pub const DOMAIN_SHRINK: f64 = 1e-8;

/// `r_k` and `s_k = (1/ζ^i_{k^i})_i` for every nonzero of the coupling.
fn nonzero_features(snapshots: &[SlaterMixture], wstar: &MultiMarginalPlan) -> Vec<(DVector<f64>, DVector<f64>)> {
    wstar
        .nonzeros
        .iter()
        .map(|(k, _)| {
            let comps: Vec<Slater> = k.iter().enumerate().map(|(i, &ki)| snapshots[i].components()[ki]).collect();
            (
                DVector::from_iterator(comps.len(), comps.iter().map(|s| s.position())),
                DVector::from_iterator(comps.len(), comps.iter().map(|s| s.inverse_scale())),
            )
        })
        .collect()
}

impl ReducedBasis {
    /// Builds the basis data for the given snapshots: `w*` at uniform
    /// weights, `A` and its inverse. Fails if `A` is not numerically
    /// positive definite.
    pub fn new(snapshots: Vec<Snapshot>, charges: Vec<f64>, training_interval: (f64, f64)) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::invalid("a reduced basis needs at least one snapshot"));
        }
        let mixtures: Vec<SlaterMixture> = snapshots.iter().map(|s| s.mixture.clone()).collect();
        ExtendedWeightDomain::from_mixtures(&mixtures)?;
        let n = mixtures.len();
        let wstar = multimarginal_plan(&mixtures, &WeightVector::uniform(n))?;
        let mut a = DMatrix::zeros(n, n);
        for ((r, s), (_, w)) in nonzero_features(&mixtures, &wstar).iter().zip(&wstar.nonzeros) {
            a += (r * r.transpose() + 2.0 * s * s.transpose()) * *w;
        }
        a = (&a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(a.clone());
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        if !(min > POSITIVE_DEFINITE_TOL * max) {
            return Err(Error::NotPositiveDefinite { min, max });
        }
        let inv = eig.eigenvectors.clone()
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
            * eig.eigenvectors.transpose();
        let inv = (&inv + inv.transpose()) * 0.5;
        Ok(ReducedBasis {
            snapshots,
            charges,
            training_interval,
            wstar,
            a: row_major(&a),
            a_inverse: row_major(&inv),
            history: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn mixtures(&self) -> Vec<SlaterMixture> {
        self.snapshots.iter().map(|s| s.mixture.clone()).collect()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.parameter).collect()
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_row_slice(n, n, &self.a)
    }

    pub fn a_inverse_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_row_slice(n, n, &self.a_inverse)
    }

    pub fn domain(&self) -> ExtendedWeightDomain {
        ExtendedWeightDomain::from_mixtures(&self.mixtures()).expect("checked on construction")
    }

    /// The basis formed by the first `n` snapshots, with `w*` and `A`
    /// recomputed and the history cut to match.
    pub fn truncated(&self, n: usize) -> Result<ReducedBasis> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!("cannot truncate a basis of {} to {n}", self.len())));
        }
        let mut out = ReducedBasis::new(self.snapshots[..n].to_vec(), self.charges.clone(), self.training_interval)?;
        out.history = self.history.iter().filter(|h| h.basis_size <= n).cloned().collect();
        Ok(out)
    }

    /// Approximate barycenter of the basis at `lambda`.
    pub fn barycenter(&self, lambda: &WeightVector) -> Result<SlaterMixture> {
        approx_barycenter(&self.mixtures(), &self.wstar, lambda)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Quadratic model `λᵀAλ + b_wᵀλ + c` of the projection error, with
/// `b_w = Σ w_{k',k} b_{k',k}` linear in the coupling `w`.
#[derive(Debug, Clone)]
pub struct ProjectionQuadratic {
    pub a: DMatrix<f64>,
    pub a_inverse: DMatrix<f64>,
    /// `A_k` for each nonzero of `w*`.
    pub a_pieces: Vec<DMatrix<f64>>,
    /// `b_{k',k}` for target component `k'` (row) and nonzero `k` (column).
    pub b_pieces: Vec<DVector<f64>>,
    /// `c_{k'}` per target component.
    pub c_pieces: Vec<f64>,
    pub c: f64,
    pub rows: usize,
    pub cols: usize,
}

impl ProjectionQuadratic {
    pub fn b(&self, w: &[f64]) -> DVector<f64> {
        let mut b = DVector::zeros(self.a.nrows());
        for (piece, &wk) in self.b_pieces.iter().zip(w) {
            if wk != 0.0 {
                b.axpy(wk, piece, 1.0);
            }
        }
        b
    }

    pub fn value(&self, lambda: &DVector<f64>, w: &[f64]) -> f64 {
        (lambda.transpose() * &self.a * lambda)[(0, 0)] + self.b(w).dot(lambda) + self.c
    }

    /// `B = [b_{k',k}]` with one column per coupling entry.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.b_pieces)
    }

    /// Hessian in `w` of `-¼ b_wᵀA⁻¹b_w`, that is `-½ BᵀA⁻¹B`.
    pub fn coupling_hessian(&self) -> DMatrix<f64> {
        let b = self.b_matrix();
        -(b.transpose() * &self.a_inverse * b) * 0.5
    }
}

pub fn assemble_projection_qp(target: &SlaterMixture, basis: &ReducedBasis) -> ProjectionQuadratic {
    let mixtures = basis.mixtures();
    let features = nonzero_features(&mixtures, &basis.wstar);
    let a_pieces: Vec<DMatrix<f64>> = features
        .iter()
        .map(|(r, s)| r * r.transpose() + 2.0 * s * s.transpose())
        .collect();
    let mut b_pieces = Vec::with_capacity(target.len() * features.len());
    for t in target.components() {
        for (r, s) in &features {
            b_pieces.push((r * t.position() + s * (2.0 * t.inverse_scale())) * -2.0);
        }
    }
    let c_pieces: Vec<f64> = target
        .components()
        .iter()
        .map(|t| t.position().powi(2) + 2.0 * t.inverse_scale().powi(2))
        .collect();
    let c = c_pieces.iter().zip(target.weights()).map(|(c, p)| c * p).sum();
    ProjectionQuadratic {
        a: basis.a_matrix(),
        a_inverse: basis.a_inverse_matrix(),
        a_pieces,
        b_pieces,
        c_pieces,
        c,
        rows: target.len(),
        cols: features.len(),
    }
}

/// Result of projecting one target onto a basis.
#[derive(Debug, Clone)]
pub struct Projection {
    /// MW2 distance between the target and the projected barycenter.
    pub error: f64,
    pub error_squared: f64,
    pub lambda: WeightVector,
    /// Optimal coupling between target components and barycenter components.
    pub plan: TransportPlan,
    /// Vertices of `Π(π, w*)` examined.
    pub vertices: usize,
    /// Whether the winning weights came from the constrained solve on `Ω`.
    pub constrained: bool,
}

/// `Σ w_{k',k} W2²(m_{k'}, Bar_k(λ))`, evaluated component by component.
fn direct_error(target: &SlaterMixture, bars: &[Slater], w: &[f64]) -> f64 {
    let cols = bars.len();
    let mut e = 0.0;
    for (i, t) in target.components().iter().enumerate() {
        for (j, b) in bars.iter().enumerate() {
            let wij = w[i * cols + j];
            if wij > 0.0 {
                e += wij * w2_squared(t, b);
            }
        }
    }
    e
}

/// Projection of `target` onto the approximate barycenters of `basis`.
///
/// Every vertex `w` of `Π(π, w*)` gets its minimizing `λ_w = -½A⁻¹b_w`; if
/// that lies outside `Ω` the minimizer on the shrunk half-space
/// `Σλ_i/ζ^i ≥ δ` is used instead. The vertex with the smallest directly
/// evaluated error wins, ties going to the first vertex in support order.
pub fn projection_error(target: &SlaterMixture, basis: &ReducedBasis) -> Result<Projection> {
    projection_error_with_budget(target, basis, DEFAULT_VERTEX_BUDGET)
}

pub fn projection_error_with_budget(target: &SlaterMixture, basis: &ReducedBasis, budget: usize) -> Result<Projection> {
    let qp = assemble_projection_qp(target, basis);
    let mixtures = basis.mixtures();
    let g = DVector::from_vec(basis.domain().inverse_scales().to_vec());
    let ainv_g = &qp.a_inverse * &g;
    let g_ainv_g = g.dot(&ainv_g);
    let features = nonzero_features(&mixtures, &basis.wstar);

    let vertices = enumerate_vertices(target.weights(), &basis.wstar.values(), Some(budget))?;
    let mut best: Option<(f64, DVector<f64>, usize, bool)> = None;
    let mut bars = Vec::with_capacity(features.len());
    for (idx, v) in vertices.iter().enumerate() {
        let b = qp.b(v.entries());
        let mut lambda = -(&qp.a_inverse * &b) * 0.5;
        let mut constrained = false;
        if g.dot(&lambda) <= 0.0 {
            let mu = 2.0 * (DOMAIN_SHRINK - g.dot(&lambda)) / g_ainv_g;
            lambda += &ainv_g * (0.5 * mu);
            constrained = true;
        }
        bars.clear();
        for (r, s) in &features {
            bars.push(Slater::new(1.0 / s.dot(&lambda), r.dot(&lambda))?);
        }
        let e = direct_error(target, &bars, v.entries());
        if best.as_ref().is_none_or(|(be, ..)| e < *be) {
            best = Some((e, lambda, idx, constrained));
        }
    }
    let (e, lambda, idx, constrained) = best.ok_or_else(|| Error::Internal("transportation polytope has no vertex".into()))?;
    Ok(Projection {
        error: e.max(0.0).sqrt(),
        error_squared: e.max(0.0),
        lambda: WeightVector::new(lambda.iter().copied().collect()),
        plan: vertices[idx].clone(),
        vertices: vertices.len(),
        constrained,
    })
}

/// Pair of training indices `i < j` maximizing `MW2(m_i, m_j)`.
pub fn farthest_pair(training: &[Snapshot]) -> Result<(usize, usize, f64)> {
    let n = training.len();
    let rows: Vec<Result<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (i, i, f64::NEG_INFINITY);
            for j in i + 1..n {
                let d = mw2(&training[i].mixture, &training[j].mixture)?.0;
                if d > best.2 {
                    best = (i, j, d);
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for r in rows {
        let r = r?;
        if r.2 > best.2 {
            best = r;
        }
    }
    Ok(best)
}

/// Projection errors of every training element, in training order.
pub fn training_errors(training: &[Snapshot], basis: &ReducedBasis) -> Result<Vec<Projection>> {
    training
        .par_iter()
        .map(|s| projection_error(&s.mixture, basis))
        .collect()
}

/// Greedy selection of `n` snapshots from `training`.
///
/// The first two maximize the pairwise MW2 distance; each later one has
/// the largest projection error onto the current basis. Ties go to the
/// lowest training index.
pub fn greedy_select(
    training: &[Snapshot],
    n: usize,
    charges: Vec<f64>,
    training_interval: (f64, f64),
) -> Result<ReducedBasis> {
    if n < 2 || training.len() < n {
        return Err(Error::invalid(format!(
            "greedy selection needs 2 ≤ n ≤ training size, got n = {n} with {} snapshots",
            training.len()
        )));
    }
    let (i, j, _) = farthest_pair(training)?;
    let mut chosen = vec![i, j];
    let mut history = Vec::new();
    loop {
        let snaps: Vec<Snapshot> = chosen.iter().map(|&k| training[k].clone()).collect();
        let mut basis = ReducedBasis::new(snaps, charges.clone(), training_interval)?;
        let errors = training_errors(training, &basis)?;
        let count = errors.len() as f64;
        let mut arg = 0;
        for (k, p) in errors.iter().enumerate() {
            if p.error_squared > errors[arg].error_squared {
                arg = k;
            }
        }
        let done = chosen.len() == n;
        let entry = HistoryEntry {
            basis_size: chosen.len(),
            max_error: errors[arg].error,
            mean_error: errors.iter().map(|p| p.error).sum::<f64>() / count,
            max_error_squared: errors[arg].error_squared,
            mean_error_squared: errors.iter().map(|p| p.error_squared).sum::<f64>() / count,
            selected_index: (!done).then_some(arg),
            selected_parameter: (!done).then_some(training[arg].parameter),
        };
        history.push(entry);
        if done {
            basis.history = history;
            return Ok(basis);
        }
        chosen.push(arg);
    }
}
