//! Multi-marginal couplings of several Slater mixtures and the approximate
//! mixture barycenter built on their support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slater::{slater_barycenter, w2_squared, Slater, SlaterMixture, WeightVector};

/// Sparse coupling tensor `w_k` over multi-indices `k = (k¹, ..., k^N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiMarginalPlan {
    pub shape: Vec<usize>,
    pub nonzeros: Vec<(Vec<usize>, f64)>,
    pub marginals: Vec<Vec<f64>>,
}

impl MultiMarginalPlan {
    pub fn len(&self) -> usize {
        self.nonzeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonzeros.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.nonzeros.iter().map(|(_, w)| *w).collect()
    }

    /// `Σ K^n - N + 1`, the most nonzeros an optimal basic plan can have.
    pub fn sparsity_bound(&self) -> usize {
        self.shape.iter().sum::<usize>() + 1 - self.shape.len()
    }

    pub fn marginal_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (n, pi) in self.marginals.iter().enumerate() {
            let mut sums = vec![0.0; pi.len()];
            for (k, w) in &self.nonzeros {
                sums[k[n]] += w;
            }
            for (s, p) in sums.iter().zip(pi) {
                worst = worst.max((s - p).abs());
            }
        }
        worst
    }

    /// Marginal along axis `n`, summed from the nonzeros.
    pub fn axis_marginal(&self, n: usize) -> Vec<f64> {
        let mut sums = vec![0.0; self.shape[n]];
        for (k, w) in &self.nonzeros {
            sums[k[n]] += w;
        }
        sums
    }
}

/// `½ Σ_i Σ_j λ_i λ_j W2²(s_i, s_j)` for one Slater per marginal.
pub fn pairwise_cost(components: &[Slater], lambda: &[f64]) -> f64 {
    let mut c = 0.0;
    for i in 0..components.len() {
        for j in i + 1..components.len() {
            c += lambda[i] * lambda[j] * w2_squared(&components[i], &components[j]);
        }
    }
    c
}

fn multi_index(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut k = vec![0; shape.len()];
    for n in (0..shape.len()).rev() {
        k[n] = flat % shape[n];
        flat /= shape[n];
    }
    k
}

/// Optimal multi-marginal coupling of `ms` for the pairwise cost at `lambda`.
///
/// The tensor is flattened and the equality system keeps every marginal
/// constraint except the last one of axes `1..N`, which are implied by the
/// rest. The LP is solved by a dense two-phase simplex with Bland's rule,
/// and the final basic solution is recomputed from the basis matrix.
pub fn multimarginal_plan(ms: &[SlaterMixture], lambda: &WeightVector) -> Result<MultiMarginalPlan> {
    if ms.is_empty() || ms.len() != lambda.len() {
        return Err(Error::invalid("need one weight per mixture"));
    }
    let shape: Vec<usize> = ms.iter().map(|m| m.len()).collect();
    let marginals: Vec<Vec<f64>> = ms.iter().map(|m| m.weights().to_vec()).collect();
    let nvar: usize = shape.iter().product();
    if nvar > 1 << 22 {
        return Err(Error::invalid(format!("coupling tensor with {nvar} entries is too large")));
    }
    if ms.len() == 1 {
        let nonzeros = marginals[0]
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, w)| (vec![k], *w))
            .collect();
        return Ok(MultiMarginalPlan { shape, nonzeros, marginals });
    }

    // constraint rows: (axis, component)
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for (n, &k) in shape.iter().enumerate() {
        let keep = if n == 0 { k } else { k - 1 };
        rows.extend((0..keep).map(|c| (n, c)));
    }
    let p = rows.len();
    let mut row_of = vec![vec![None; 0]; shape.len()];
    for (n, &k) in shape.iter().enumerate() {
        row_of[n] = vec![None; k];
    }
    for (r, &(n, c)) in rows.iter().enumerate() {
        row_of[n][c] = Some(r);
    }
    let rhs: Vec<f64> = rows.iter().map(|&(n, c)| marginals[n][c]).collect();

    let lam = lambda.as_slice();
    let mut cost = Vec::with_capacity(nvar);
    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(nvar);
    let mut comps = Vec::with_capacity(shape.len());
    for flat in 0..nvar {
        let k = multi_index(flat, &shape);
        comps.clear();
        comps.extend(k.iter().enumerate().map(|(n, &kn)| ms[n].components()[kn]));
        cost.push(pairwise_cost(&comps, lam));
        columns.push(k.iter().enumerate().filter_map(|(n, &kn)| row_of[n][kn]).collect());
    }

    let basis = dense_simplex(&columns, &cost, &rhs, p)?;

    // x_B = B⁻¹ b from the final basis
    let bmat = DMatrix::from_fn(p, p, |r, c| columns[basis[c]].contains(&r) as u8 as f64);
    let xb = bmat
        .lu()
        .solve(&DVector::from_vec(rhs.clone()))
        .ok_or_else(|| Error::Internal("singular final basis in multi-marginal LP".into()))?;
    let mut nonzeros: Vec<(Vec<usize>, f64)> = basis
        .iter()
        .zip(xb.iter())
        .filter(|(_, v)| **v > 1e-14)
        .map(|(&j, &v)| (multi_index(j, &shape), v))
        .collect();
    if xb.iter().any(|v| *v < -1e-10) {
        return Err(Error::Internal("multi-marginal LP ended infeasible".into()));
    }
    nonzeros.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(MultiMarginalPlan { shape, nonzeros, marginals })
}

/// Two-phase tableau simplex for `min cᵀx, Ax = b, x ≥ 0` with 0/1 columns
/// given by their row sets. Returns the final basis (one column per row).
fn dense_simplex(columns: &[Vec<usize>], cost: &[f64], rhs: &[f64], p: usize) -> Result<Vec<usize>> {
    let nvar = columns.len();
    let width = nvar + p + 1; // structural, artificial, rhs
    let mut t = vec![0.0; p * width];
    for (j, col) in columns.iter().enumerate() {
        for &r in col {
            t[r * width + j] = 1.0;
        }
    }
    for r in 0..p {
        t[r * width + nvar + r] = 1.0;
        t[r * width + width - 1] = rhs[r];
    }
    let mut basis: Vec<usize> = (nvar..nvar + p).collect();
    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
    let max_iter = 100 * (nvar + p) + 10_000;

    let pivot = |t: &mut Vec<f64>, r: usize, e: usize| {
        let pv = t[r * width + e];
        for v in &mut t[r * width..(r + 1) * width] {
            *v /= pv;
        }
        let prow: Vec<f64> = t[r * width..(r + 1) * width].to_vec();
        for q in 0..p {
            if q == r {
                continue;
            }
            let f = t[q * width + e];
            if f != 0.0 {
                for (v, pr) in t[q * width..(q + 1) * width].iter_mut().zip(&prow) {
                    *v -= f * pr;
                }
            }
        }
    };

    let run = |t: &mut Vec<f64>, basis: &mut Vec<usize>, obj: &dyn Fn(usize) -> f64, allowed: usize, tol: f64| -> Result<()> {
        for _ in 0..max_iter {
            // reduced costs d_j = c_j - c_Bᵀ B⁻¹ a_j, with the tableau holding B⁻¹A
            let cb: Vec<f64> = basis.iter().map(|&j| obj(j)).collect();
            let entering = (0..allowed).find(|&j| {
                if basis.contains(&j) {
                    return false;
                }
                let z: f64 = (0..p).map(|r| cb[r] * t[r * width + j]).sum();
                obj(j) - z < -tol
            });
            let Some(e) = entering else { return Ok(()) };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..p {
                let a = t[r * width + e];
                if a > 1e-12 {
                    let ratio = t[r * width + width - 1] / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - 1e-15 || (ratio <= bv + 1e-15 && basis[r] < basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(Error::Internal("multi-marginal LP is unbounded".into()));
            };
            pivot(t, r, e);
            basis[r] = e;
        }
        Err(Error::NoConvergence { what: "multi-marginal simplex", iterations: max_iter })
    };

    // phase one: minimize the artificial sum
    let phase1 = |j: usize| if j >= nvar { 1.0 } else { 0.0 };
    run(&mut t, &mut basis, &phase1, nvar + p, 1e-13)?;
    let infeas: f64 = (0..p).filter(|&r| basis[r] >= nvar).map(|r| t[r * width + width - 1]).sum();
    if infeas > 1e-9 {
        return Err(Error::Internal(format!("multi-marginal LP infeasible (residual {infeas:e})")));
    }
    // drive zero-level artificials out of the basis
    for r in 0..p {
        if basis[r] >= nvar {
            let e = (0..nvar).find(|&j| !basis.contains(&j) && t[r * width + j].abs() > 1e-9);
            match e {
                Some(e) => {
                    pivot(&mut t, r, e);
                    basis[r] = e;
                }
                None => return Err(Error::Internal("redundant constraint in multi-marginal LP".into())),
            }
        }
    }
    let phase2 = |j: usize| if j >= nvar { f64::INFINITY } else { cost[j] };
    run(&mut t, &mut basis, &phase2, nvar, 1e-12 * scale)?;
    Ok(basis)
}

/// Approximate mixture barycenter: one Slater barycenter per nonzero of
/// `wstar`, weighted by its coupling value.
pub fn approx_barycenter(ms: &[SlaterMixture], wstar: &MultiMarginalPlan, lambda: &WeightVector) -> Result<SlaterMixture> {
    if ms.len() != lambda.len() || ms.len() != wstar.shape.len() {
        return Err(Error::invalid("basis, coupling and weights disagree in size"));
    }
    let mut comps = Vec::with_capacity(wstar.len());
    let mut weights = Vec::with_capacity(wstar.len());
    let mut atoms = Vec::with_capacity(ms.len());
    for (k, w) in &wstar.nonzeros {
        atoms.clear();
        atoms.extend(k.iter().enumerate().map(|(n, &kn)| ms[n].components()[kn]));
        comps.push(slater_barycenter(&atoms, lambda)?);
        weights.push(*w);
    }
    SlaterMixture::new(comps, weights)
}
