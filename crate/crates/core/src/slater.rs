//! Slater distributions, finite Slater mixtures and their one-dimensional
//! Wasserstein geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixture weights whose sum is within this distance of one are
/// renormalized; anything further away is rejected.
pub const WEIGHT_RENORMALIZE_TOL: f64 = 1e-9;

/// The probability density `(ζ/2)·exp(-ζ|x - r|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slater {
    zeta: f64,
    r: f64,
}

impl Slater {
    pub fn new(zeta: f64, r: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::invalid(format!("Slater scale must be positive and finite, got {zeta}")));
        }
        if !r.is_finite() {
            return Err(Error::invalid(format!("Slater position must be finite, got {r}")));
        }
        Ok(Slater { zeta, r })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn position(&self) -> f64 {
        self.r
    }

    /// `1/ζ`, the quantity barycenters combine linearly.
    pub fn inverse_scale(&self) -> f64 {
        1.0 / self.zeta
    }

    pub fn variance(&self) -> f64 {
        2.0 / (self.zeta * self.zeta)
    }

    pub fn density(&self, x: f64) -> f64 {
        0.5 * self.zeta * (-self.zeta * (x - self.r).abs()).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = self.zeta * (x - self.r);
        if t < 0.0 {
            0.5 * t.exp()
        } else {
            1.0 - 0.5 * (-t).exp()
        }
    }

    /// `1 - cdf(x)`, accurate in the right tail.
    pub fn survival(&self, x: f64) -> f64 {
        let t = self.zeta * (x - self.r);
        if t > 0.0 {
            0.5 * (-t).exp()
        } else {
            1.0 - 0.5 * t.exp()
        }
    }

    pub fn icdf(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("icdf argument must lie in (0, 1), got {q}")));
        }
        Ok(if q < 0.5 {
            self.r + (2.0 * q).ln() / self.zeta
        } else {
            self.r - (2.0 * (1.0 - q)).ln() / self.zeta
        })
    }

    /// Quantile for a right-tail probability `p = 1 - q`.
    fn inverse_survival(&self, p: f64) -> f64 {
        if p < 0.5 {
            self.r - (2.0 * p).ln() / self.zeta
        } else {
            self.r + (2.0 * (1.0 - p)).ln() / self.zeta
        }
    }
}

/// Squared 2-Wasserstein distance between two Slater distributions.
pub fn w2_squared(a: &Slater, b: &Slater) -> f64 {
    let dr = a.r - b.r;
    let ds = a.inverse_scale() - b.inverse_scale();
    dr * dr + 2.0 * ds * ds
}

pub fn w2(a: &Slater, b: &Slater) -> f64 {
    w2_squared(a, b).sqrt()
}

/// Barycentric coordinates, possibly negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        WeightVector(values)
    }

    /// The vertex `e_i` of the simplex in dimension `n`.
    pub fn canonical(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        WeightVector(v)
    }

    /// `(1/n, ..., 1/n)`.
    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        WeightVector(v)
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Extended barycentric weights `{λ : Σ λ_i / ζ^i > 0}` for basis elements
/// that each carry one common scale `ζ^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedWeightDomain {
    inverse_scales: Vec<f64>,
}

impl ExtendedWeightDomain {
    pub fn new(inverse_scales: Vec<f64>) -> Result<Self> {
        if inverse_scales.is_empty() {
            return Err(Error::invalid("weight domain needs at least one scale"));
        }
        if inverse_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("inverse scales must be positive and finite"));
        }
        Ok(ExtendedWeightDomain { inverse_scales })
    }

    /// Domain for basis mixtures; each must have a single common scale.
    pub fn from_mixtures(mixtures: &[SlaterMixture]) -> Result<Self> {
        let inv = mixtures
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.common_zeta()
                    .map(|z| 1.0 / z)
                    .ok_or_else(|| Error::invalid(format!("basis mixture {i} has no common scale")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(inv)
    }

    pub fn dim(&self) -> usize {
        self.inverse_scales.len()
    }

    pub fn inverse_scales(&self) -> &[f64] {
        &self.inverse_scales
    }

    /// `Σ λ_i / ζ^i`; positive exactly on the domain.
    pub fn margin(&self, lambda: &[f64]) -> f64 {
        lambda.iter().zip(&self.inverse_scales).map(|(l, s)| l * s).sum()
    }

    pub fn contains(&self, lambda: &WeightVector) -> bool {
        lambda.len() == self.dim() && self.margin(lambda.as_slice()) > 0.0
    }
}

/// Barycenter of Slater distributions: `1/ζ^λ = Σ λ_i/ζ_i`, `r^λ = Σ λ_i r_i`.
///
/// Defined whenever `Σ λ_i/ζ_i > 0`, including weights outside the simplex.
pub fn slater_barycenter(components: &[Slater], lambda: &WeightVector) -> Result<Slater> {
    if components.is_empty() || components.len() != lambda.len() {
        return Err(Error::invalid(format!(
            "barycenter of {} components with {} weights",
            components.len(),
            lambda.len()
        )));
    }
    let mut nonzero = lambda.as_slice().iter().enumerate().filter(|(_, l)| **l != 0.0);
    if let (Some((i, &l)), None) = (nonzero.next(), nonzero.next()) {
        if l == 1.0 {
            return Ok(components[i]);
        }
    }
    let mut inv = 0.0;
    let mut r = 0.0;
    for (s, &l) in components.iter().zip(lambda.as_slice()) {
        inv += l / s.zeta;
        r += l * s.r;
    }
    if !(inv > 0.0) {
        return Err(Error::domain(format!("barycenter weights give Σλ/ζ = {inv:e} ≤ 0")));
    }
    Slater::new(1.0 / inv, r)
}

/// Finite convex combination of Slater distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterMixture {
    components: Vec<Slater>,
    weights: Vec<f64>,
}

impl SlaterMixture {
    pub fn new(components: Vec<Slater>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if components.len() != weights.len() {
            return Err(Error::invalid(format!(
                "mixture has {} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("mixture weights must be nonnegative and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_RENORMALIZE_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(SlaterMixture { components, weights })
    }

    pub fn single(s: Slater) -> Self {
        SlaterMixture { components: vec![s], weights: vec![1.0] }
    }

    /// Mixture of Slaters sharing one scale, as produced by ground states.
    pub fn with_common_scale(zeta: f64, positions: &[f64], weights: Vec<f64>) -> Result<Self> {
        let comps = positions
            .iter()
            .map(|&r| Slater::new(zeta, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps, weights)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Slater] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn positions(&self) -> Vec<f64> {
        self.components.iter().map(|s| s.r).collect()
    }

    /// The shared scale when every component has the same `ζ`.
    pub fn common_zeta(&self) -> Option<f64> {
        let z = self.components[0].zeta;
        self.components.iter().all(|s| s.zeta == z).then_some(z)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * s.density(x))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * s.cdf(x))
            .sum()
    }

    pub fn survival(&self, x: f64) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * s.survival(x))
            .sum()
    }

    /// Quantile function, inverted numerically for more than one component.
    ///
    /// The bracket `[min_k icdf_k(q), max_k icdf_k(q)]` always contains the
    /// answer because the mixture cdf is a convex combination of the
    /// component cdfs. Lower quantiles solve `cdf = q`, upper ones solve
    /// `survival = 1 - q` so both tails keep full relative precision.
    pub fn icdf(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("icdf argument must lie in (0, 1), got {q}")));
        }
        if self.components.len() == 1 {
            return self.components[0].icdf(q);
        }
        let upper = q > 0.5;
        let target = if upper { 1.0 - q } else { q };
        let quantile = |s: &Slater| if upper { s.inverse_survival(target) } else { s.icdf(target).unwrap_or(s.r) };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.components {
            let x = quantile(s);
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if lo == hi {
            return Ok(lo);
        }
        // g increases with x on both branches
        let g = |x: f64| if upper { target - self.survival(x) } else { self.cdf(x) - target };

        let mut x = 0.5 * (lo + hi);
        const MAX_ITER: usize = 200;
        for _ in 0..MAX_ITER {
            let gx = g(x);
            if gx == 0.0 {
                return Ok(x);
            }
            if gx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.density(x);
            let newton = x - gx / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let converged = (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1e-300)
                || hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs());
            x = next;
            if converged {
                return Ok(x);
            }
        }
        if g(x).abs() <= 1e-12 {
            return Ok(x);
        }
        Err(Error::NoConvergence { what: "mixture icdf", iterations: MAX_ITER })
    }

    /// Mixture with identical components merged and sorted by position
    /// then scale.
    pub fn merged(&self) -> SlaterMixture {
        let mut pairs: Vec<(Slater, f64)> = self
            .components
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.r.total_cmp(&b.0.r).then(a.0.zeta.total_cmp(&b.0.zeta)));
        let mut out: Vec<(Slater, f64)> = Vec::with_capacity(pairs.len());
        for (s, w) in pairs {
            match out.last_mut() {
                Some((t, tw)) if t.r == s.r && t.zeta == s.zeta => *tw += w,
                _ => out.push((s, w)),
            }
        }
        let (components, weights) = out.into_iter().unzip();
        SlaterMixture { components, weights }
    }

    /// Nonzero-weight components only.
    pub fn pruned(&self, tol: f64) -> SlaterMixture {
        let (components, weights): (Vec<_>, Vec<_>) = self
            .components
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > tol)
            .map(|(s, w)| (*s, *w))
            .unzip();
        let total: f64 = weights.iter().sum();
        SlaterMixture { components, weights: weights.into_iter().map(|w| w / total).collect() }
    }
}
