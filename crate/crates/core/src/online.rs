//! Online stage: minimize the reduced energy over barycentric weights.
//!
//! For weights `λ` the trial state is the approximate barycenter
//! `u = Σ_k w*_k (ζ/2) e^{-ζ|x - r̄_k|}` with `1/ζ = Σ λ_i/ζ^i` and
//! `r̄_k = Σ λ_i r^i_{k^i}`. Its Rayleigh quotient is
//!
//! ```text
//! E(λ) = (ζ²/2 · T - ζ · V) / D
//! D = Σ_k Σ_l w_k w_l (1 + ζ d_kl) e^{-ζ d_kl}
//! T = Σ_k Σ_l w_k w_l (1 - ζ d_kl) e^{-ζ d_kl}
//! V = Σ_m z_m (Σ_k w_k e^{-ζ |r̄_k - r_m|})²
//! ```
//!
//! with `d_kl = |r̄_k - r̄_l|`. The optimizer works on a smoothed variant in
//! which every off-diagonal absolute value is replaced by [`smoothed_abs`].

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::NucleiConfig;
use crate::greedy::ReducedBasis;
use crate::lbfgs::{minimize, LbfgsOptions, Status};
use crate::slater::{ExtendedWeightDomain, SlaterMixture, WeightVector};

/// `|x|` with the kink rounded off on `[-ε, ε]`; C² at `±ε`.
pub fn smoothed_abs(x: f64, eps: f64) -> f64 {
    if x.abs() > eps {
        x.abs()
    } else {
        -(2.0 * eps / PI) * (PI * x / (2.0 * eps)).cos() + eps
    }
}

/// Derivative of [`smoothed_abs`].
pub fn smoothed_sign(x: f64, eps: f64) -> f64 {
    if x.abs() > eps {
        x.signum()
    } else {
        (PI * x / (2.0 * eps)).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    /// Starting points are drawn from `[-B, B]^N`.
    pub box_half_width: f64,
    pub starts: usize,
    /// Smoothing width; `None` uses `1e-4` times the training interval width.
    pub epsilon: Option<f64>,
    /// Constant part of the penalty outside the weight domain.
    pub penalty_c: f64,
    /// Coefficient of the growing part of the penalty.
    pub penalty_c2: f64,
    /// Extra passes from each minimizer, each with the smoothing width
    /// divided by 100.
    pub refinements: usize,
    pub lbfgs: LbfgsOptions,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            box_half_width: 2.0,
            starts: 2000,
            epsilon: None,
            penalty_c: 1e6,
            penalty_c2: 1e6,
            refinements: 2,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.box_half_width > 0.0) {
            return Err(Error::invalid("box half width must be positive"));
        }
        if self.starts == 0 {
            return Err(Error::invalid("at least one start is required"));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(Error::invalid("smoothing width must be positive"));
            }
        }
        if !(self.penalty_c > 0.0 && self.penalty_c2 > 0.0) {
            return Err(Error::invalid("penalty constants must be positive"));
        }
        Ok(())
    }

    pub fn epsilon_for(&self, basis: &ReducedBasis) -> f64 {
        self.epsilon.unwrap_or_else(|| {
            let (lo, hi) = basis.training_interval;
            let w = (hi - lo).abs();
            1e-4 * if w > 0.0 { w } else { 1.0 }
        })
    }
}

/// The reduced energy of one basis for one query configuration.
#[derive(Debug, Clone)]
pub struct ReducedEnergy {
    /// `r^i_{k^i}` for nonzero `k`, row-major `K × N`.
    positions: Vec<f64>,
    weights: Vec<f64>,
    inverse_scales: Vec<f64>,
    nuclei: Vec<f64>,
    charges: Vec<f64>,
    n: usize,
}

/// Value and gradient pieces of one of the pair sums.
struct Terms {
    zeta: f64,
    d: f64,
    t: f64,
    v: f64,
}

impl ReducedEnergy {
    pub fn new(basis: &ReducedBasis, query: &NucleiConfig) -> Self {
        let mixtures = basis.mixtures();
        let n = mixtures.len();
        let mut positions = Vec::with_capacity(basis.wstar.len() * n);
        let mut weights = Vec::with_capacity(basis.wstar.len());
        for (k, w) in &basis.wstar.nonzeros {
            positions.extend(k.iter().enumerate().map(|(i, &ki)| mixtures[i].components()[ki].position()));
            weights.push(*w);
        }
        ReducedEnergy {
            positions,
            weights,
            inverse_scales: basis.domain().inverse_scales().to_vec(),
            nuclei: query.positions().to_vec(),
            charges: query.charges().to_vec(),
            n,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Σ λ_i / ζ^i`.
    pub fn margin(&self, lambda: &[f64]) -> f64 {
        lambda.iter().zip(&self.inverse_scales).map(|(l, s)| l * s).sum()
    }

    fn centers(&self, lambda: &[f64]) -> Vec<f64> {
        self.positions
            .chunks_exact(self.n)
            .map(|r| r.iter().zip(lambda).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Energy without smoothing; a domain error outside `Ω`.
    pub fn energy(&self, lambda: &[f64]) -> Result<f64> {
        let s = self.margin(lambda);
        if !(s > 0.0) {
            return Err(Error::domain(format!("weights outside the domain (Σλ/ζ = {s:e})")));
        }
        let t = self.terms(lambda, None, None);
        Ok((0.5 * t.zeta * t.zeta * t.t - t.zeta * t.v) / t.d)
    }

    /// Smoothed energy; writes the gradient when `grad` is given.
    pub fn smoothed_energy(&self, lambda: &[f64], eps: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        let s = self.margin(lambda);
        if !(s > 0.0) {
            return Err(Error::domain(format!("weights outside the domain (Σλ/ζ = {s:e})")));
        }
        match grad {
            None => {
                let t = self.terms(lambda, Some(eps), None);
                Ok((0.5 * t.zeta * t.zeta * t.t - t.zeta * t.v) / t.d)
            }
            Some(g) => {
                let t = self.terms(lambda, Some(eps), Some(g));
                Ok((0.5 * t.zeta * t.zeta * t.t - t.zeta * t.v) / t.d)
            }
        }
    }

    /// Pair sums, optionally smoothed, and optionally the energy gradient.
    fn terms(&self, lambda: &[f64], eps: Option<f64>, grad: Option<&mut [f64]>) -> Terms {
        let n = self.n;
        let kk = self.weights.len();
        let zeta = 1.0 / self.margin(lambda);
        let centers = self.centers(lambda);
        let abs = |x: f64| eps.map_or(x.abs(), |e| smoothed_abs(x, e));
        let sign = |x: f64| eps.map_or(x.signum(), |e| smoothed_sign(x, e));
        let want_grad = grad.is_some();

        // accumulators: sums and their derivatives in ζ and in λ
        let (mut d, mut t) = (0.0, 0.0);
        let (mut d_z, mut t_z) = (0.0, 0.0);
        let mut d_l = vec![0.0; if want_grad { n } else { 0 }];
        let mut t_l = vec![0.0; if want_grad { n } else { 0 }];
        for k in 0..kk {
            let wk = self.weights[k];
            // diagonal: distance identically zero
            d += wk * wk;
            t += wk * wk;
            for l in k + 1..kk {
                let ww = 2.0 * wk * self.weights[l];
                let diff = centers[k] - centers[l];
                let phi = abs(diff);
                let e = (-zeta * phi).exp();
                let zp = zeta * phi;
                d += ww * (1.0 + zp) * e;
                t += ww * (1.0 - zp) * e;
                if want_grad {
                    d_z += ww * (-zeta * phi * phi * e);
                    t_z += ww * ((-2.0 * phi + zeta * phi * phi) * e);
                    let dphi_coef = sign(diff);
                    let f1_phi = -zeta * zeta * phi * e;
                    let f2_phi = (-2.0 * zeta + zeta * zeta * phi) * e;
                    let rk = &self.positions[k * n..(k + 1) * n];
                    let rl = &self.positions[l * n..(l + 1) * n];
                    for i in 0..n {
                        let dphi = dphi_coef * (rk[i] - rl[i]);
                        d_l[i] += ww * f1_phi * dphi;
                        t_l[i] += ww * f2_phi * dphi;
                    }
                }
            }
        }
        let mut v = 0.0;
        let mut v_z = 0.0;
        let mut v_l = vec![0.0; if want_grad { n } else { 0 }];
        let mut p_l = vec![0.0; if want_grad { n } else { 0 }];
        for (&rm, &zm) in self.nuclei.iter().zip(&self.charges) {
            let mut p = 0.0;
            let mut p_z = 0.0;
            p_l.iter_mut().for_each(|x| *x = 0.0);
            for (k, &ck) in centers.iter().enumerate().take(kk) {
                let diff = ck - rm;
                let psi = abs(diff);
                let e = self.weights[k] * (-zeta * psi).exp();
                p += e;
                if want_grad {
                    p_z += -psi * e;
                    let c = -zeta * e * sign(diff);
                    let rk = &self.positions[k * n..(k + 1) * n];
                    for i in 0..n {
                        p_l[i] += c * rk[i];
                    }
                }
            }
            v += zm * p * p;
            if want_grad {
                v_z += 2.0 * zm * p * p_z;
                for i in 0..n {
                    v_l[i] += 2.0 * zm * p * p_l[i];
                }
            }
        }

        if let Some(g) = grad {
            let num = 0.5 * zeta * zeta * t - zeta * v;
            let energy = num / d;
            for i in 0..n {
                let dzeta = -zeta * zeta * self.inverse_scales[i];
                let dd = d_z * dzeta + d_l[i];
                let dt = t_z * dzeta + t_l[i];
                let dv = v_z * dzeta + v_l[i];
                let dnum = zeta * t * dzeta + 0.5 * zeta * zeta * dt - v * dzeta - zeta * dv;
                g[i] = (dnum - energy * dd) / d;
            }
        }
        Terms { zeta, d, t, v }
    }

    /// Objective seen by the optimizer: smoothed energy on `Ω`, and
    /// `C + C₂ s^10` with `s = Σλ_i/ζ^i ≤ 0` outside it.
    pub fn penalized(&self, lambda: &[f64], eps: f64, c: f64, c2: f64, grad: &mut [f64]) -> f64 {
        let s = self.margin(lambda);
        if s > 0.0 {
            if let Ok(v) = self.smoothed_energy(lambda, eps, Some(grad)) {
                if v.is_finite() && grad.iter().all(|g| g.is_finite()) {
                    return v;
                }
            }
            // ζ overflowed next to the boundary
            grad.iter_mut().for_each(|g| *g = 0.0);
            return c;
        }
        let s9 = s.powi(9);
        for (g, inv) in grad.iter_mut().zip(&self.inverse_scales) {
            *g = 10.0 * c2 * s9 * inv;
        }
        c + c2 * s9 * s
    }
}

/// Deterministic scrambled Sobol points in `[-B, B]^N ∩ Ω`.
///
/// Points are taken in sequence order and kept if they lie in the domain,
/// until `count` are found or `10·count` have been tried.
pub fn low_discrepancy_starts(
    n: usize,
    half_width: f64,
    count: usize,
    domain: &ExtendedWeightDomain,
) -> Result<Vec<WeightVector>> {
    if n == 0 || count == 0 {
        return Err(Error::invalid("need a positive dimension and number of starts"));
    }
    if n != domain.dim() {
        return Err(Error::invalid("start dimension differs from the domain"));
    }
    if n as u32 > sobol_burley::NUM_DIMENSIONS {
        return Err(Error::invalid(format!("at most {} dimensions supported", sobol_burley::NUM_DIMENSIONS)));
    }
    let budget = count.saturating_mul(10);
    if budget > 1 << 16 {
        return Err(Error::invalid("at most 6553 starts are supported"));
    }
    let mut out = Vec::with_capacity(count);
    for idx in 0..budget {
        let p: Vec<f64> = (0..n)
            .map(|d| -half_width + 2.0 * half_width * sobol_burley::sample(idx as u32, d as u32, 0) as f64)
            .collect();
        if domain.margin(&p) > 0.0 {
            out.push(WeightVector::new(p));
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(Error::Domain(format!(
        "only {} of {count} starting points fell in the weight domain after {budget} draws",
        out.len()
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub start: Vec<f64>,
    pub minimizer: Vec<f64>,
    /// Smoothed, penalized objective at the minimizer.
    pub objective: f64,
    /// Unsmoothed energy at the minimizer, if it lies in the domain.
    pub energy: Option<f64>,
    pub status: Status,
    pub iterations: usize,
}

impl StartRecord {
    pub fn converged(&self) -> bool {
        self.status.is_success() && self.energy.is_some_and(f64::is_finite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineResult {
    pub lambda_star: WeightVector,
    pub energy: f64,
    pub mixture: SlaterMixture,
    pub starts_converged: usize,
    pub best_start: usize,
    pub records: Vec<StartRecord>,
}

impl OnlineResult {
    /// Best converged energy among the first `prefix` starts.
    pub fn best_of_prefix(&self, prefix: usize) -> Option<f64> {
        self.records[..prefix.min(self.records.len())]
            .iter()
            .filter(|r| r.converged())
            .filter_map(|r| r.energy)
            .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.min(e))))
    }
}

/// L-BFGS on the penalized objective from `start`, followed by the
/// smoothing refinements.
fn descend(model: &ReducedEnergy, index: usize, start: &[f64], eps: f64, cfg: &OnlineConfig) -> StartRecord {
    let run = |x0: &[f64], e: f64| minimize(|x, g| model.penalized(x, e, cfg.penalty_c, cfg.penalty_c2, g), x0, &cfg.lbfgs);
    let mut m = run(start, eps);
    let mut iterations = m.iterations;
    let mut e = eps;
    for _ in 0..cfg.refinements {
        if !m.status.is_success() || model.margin(&m.x) <= 0.0 {
            break;
        }
        e *= 1e-2;
        let next = run(&m.x, e);
        iterations += next.iterations;
        if !next.status.is_success() {
            break;
        }
        m = next;
    }
    let energy = model.energy(&m.x).ok().filter(|e| e.is_finite());
    StartRecord {
        index,
        start: start.to_vec(),
        minimizer: m.x,
        objective: m.value,
        energy,
        status: m.status,
        iterations,
    }
}

/// Multistart minimization of the reduced energy for one query.
pub fn online_minimize(basis: &ReducedBasis, query: &NucleiConfig, cfg: &OnlineConfig) -> Result<OnlineResult> {
    cfg.validate()?;
    let model = ReducedEnergy::new(basis, query);
    let domain = basis.domain();
    let eps = cfg.epsilon_for(basis);
    let starts = low_discrepancy_starts(basis.len(), cfg.box_half_width, cfg.starts, &domain)?;
    let records: Vec<StartRecord> = starts
        .par_iter()
        .enumerate()
        .map(|(index, start)| descend(&model, index, start.as_slice(), eps, cfg))
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut converged = 0;
    for r in &records {
        if !r.converged() {
            continue;
        }
        converged += 1;
        let e = r.energy.expect("converged records carry an energy");
        if best.is_none_or(|(_, be)| e < be) {
            best = Some((r.index, e));
        }
    }
    let Some((best_start, energy)) = best else {
        return Err(Error::AllStartsFailed { starts: records.len(), statuses: records.iter().map(|r| r.status).collect() });
    };
    let lambda_star = WeightVector::new(records[best_start].minimizer.clone());
    let mixture = basis.barycenter(&lambda_star)?;
    Ok(OnlineResult { lambda_star, energy, mixture, starts_converged: converged, best_start, records })
}

/// Unsmoothed energy on a rectangular grid of weights for a two-element
/// basis. Cells outside the domain hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// Row-major over `(lambda1, lambda2)`.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.lambda2.len() + j]
    }

    /// Cells strictly below all finite neighbours in the 8-neighbourhood,
    /// excluding the grid border.
    pub fn local_minima(&self) -> Vec<(usize, usize)> {
        let (n1, n2) = (self.lambda1.len(), self.lambda2.len());
        let mut out = Vec::new();
        for i in 1..n1.saturating_sub(1) {
            for j in 1..n2.saturating_sub(1) {
                let v = self.get(i, j);
                if !v.is_finite() {
                    continue;
                }
                let mut is_min = true;
                let mut finite_neighbours = 0;
                for di in [-1isize, 0, 1] {
                    for dj in [-1isize, 0, 1] {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let u = self.get((i as isize + di) as usize, (j as isize + dj) as usize);
                        if u.is_finite() {
                            finite_neighbours += 1;
                            if u <= v {
                                is_min = false;
                            }
                        }
                    }
                }
                if is_min && finite_neighbours == 8 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn energy_heatmap(
    basis: &ReducedBasis,
    query: &NucleiConfig,
    range1: (f64, f64),
    range2: (f64, f64),
    points: usize,
) -> Result<Heatmap> {
    if basis.len() != 2 {
        return Err(Error::invalid(format!("heatmap needs a basis of exactly 2 elements, got {}", basis.len())));
    }
    if points < 2 {
        return Err(Error::invalid("heatmap needs at least 2 points per axis"));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
    };
    let lambda1 = axis(range1);
    let lambda2 = axis(range2);
    let model = ReducedEnergy::new(basis, query);
    let values: Vec<f64> = lambda1
        .par_iter()
        .flat_map_iter(|&a| {
            let model = &model;
            lambda2.iter().map(move |&b| model.energy(&[a, b]).unwrap_or(f64::NAN))
        })
        .collect();
    Ok(Heatmap { lambda1, lambda2, values })
}

/// A local minimizer of the reduced energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub lambda: Vec<f64>,
    pub energy: f64,
}

/// Descends from each candidate and merges minimizers closer than
/// `merge_distance` (max norm). Sorted by energy.
pub fn refine_minima(
    basis: &ReducedBasis,
    query: &NucleiConfig,
    candidates: &[Vec<f64>],
    cfg: &OnlineConfig,
    merge_distance: f64,
) -> Result<Vec<LocalMinimum>> {
    cfg.validate()?;
    let model = ReducedEnergy::new(basis, query);
    let eps = cfg.epsilon_for(basis);
    let records: Vec<StartRecord> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| descend(&model, i, c, eps, cfg))
        .collect();
    let mut found: Vec<LocalMinimum> = Vec::new();
    for r in records.into_iter().filter(StartRecord::converged) {
        let energy = r.energy.expect("converged records carry an energy");
        let close = |m: &LocalMinimum| {
            m.lambda.iter().zip(&r.minimizer).all(|(a, b)| (a - b).abs() <= merge_distance)
        };
        match found.iter_mut().find(|m| close(m)) {
            Some(m) if energy < m.energy => *m = LocalMinimum { lambda: r.minimizer, energy },
            Some(_) => {}
            None => found.push(LocalMinimum { lambda: r.minimizer, energy }),
        }
    }
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(found)
}
