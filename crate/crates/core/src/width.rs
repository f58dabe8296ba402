//! Empirical Kolmogorov widths of sampled solution families.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, linear_fit};
use crate::slater::SlaterMixture;

/// Half-width of the spatial truncation, in units of the largest length scale.
const TAIL_LENGTHS: f64 = 40.0;

/// Default window of `δ_n/δ_0` for the slope fit.
pub const SLOPE_WINDOW: (f64, f64) = (1e-6, 1e-1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub npoints: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, npoints: usize) -> Result<Self> {
        if npoints < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("bad uniform grid [{lo}, {hi}] with {npoints} points")));
        }
        Ok(UniformGrid { lo, hi, npoints })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.npoints - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.npoints {
            self.hi
        } else {
            self.lo + j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.npoints).map(|j| self.node(j)).collect()
    }
}

/// Snapshots sampled on a common grid, one row per parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotGrid {
    pub parameters: Vec<f64>,
    pub grid: UniformGrid,
    /// Row-major, `parameters.len() × grid.npoints`.
    pub values: Vec<f64>,
    /// Quadrature weight of every grid node.
    pub weight: f64,
}

impl SnapshotGrid {
    pub fn new(parameters: Vec<f64>, grid: UniformGrid, values: Vec<f64>, weight: f64) -> Result<Self> {
        if parameters.is_empty() {
            return Err(Error::invalid("snapshot grid needs at least one parameter"));
        }
        if values.len() != parameters.len() * grid.npoints {
            return Err(Error::invalid(format!(
                "expected {}×{} values, got {}",
                parameters.len(),
                grid.npoints,
                values.len()
            )));
        }
        if !(weight > 0.0) {
            return Err(Error::invalid("quadrature weight must be positive"));
        }
        Ok(SnapshotGrid { parameters, grid, values, weight })
    }

    pub fn rows(&self) -> usize {
        self.parameters.len()
    }

    pub fn cols(&self) -> usize {
        self.grid.npoints
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols()..(i + 1) * self.cols()]
    }
}

/// Densities on a uniform grid of spacing `step` that covers every
/// component plus 40 of the widest length scales on each side.
///
/// The grid is anchored at the smallest component position, so positions
/// on a lattice of spacing `step` fall on nodes.
pub fn l2_snapshot_grid(parameters: &[f64], family: &[SlaterMixture], step: f64) -> Result<SnapshotGrid> {
    if parameters.len() != family.len() || family.is_empty() {
        return Err(Error::invalid("need one parameter per mixture and at least one mixture"));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    let (mut rmin, mut rmax, mut zmin) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for m in family {
        for s in m.components() {
            rmin = rmin.min(s.position());
            rmax = rmax.max(s.position());
            zmin = zmin.min(s.zeta());
        }
    }
    let pad = (TAIL_LENGTHS / zmin / step).ceil();
    let span = ((rmax - rmin) / step).ceil();
    let npoints = (span + 2.0 * pad) as usize + 1;
    let lo = rmin - pad * step;
    let grid = UniformGrid::new(lo, lo + (npoints - 1) as f64 * step, npoints)?;
    let values: Vec<f64> = family
        .par_iter()
        .flat_map_iter(|m| (0..npoints).map(move |j| m.density(lo + j as f64 * step)))
        .collect();
    SnapshotGrid::new(parameters.to_vec(), grid, values, step)
}

/// Quantile functions at the midpoints `(j - ½)/nq`.
pub fn icdf_snapshot_grid(parameters: &[f64], family: &[SlaterMixture], nq: usize) -> Result<SnapshotGrid> {
    if parameters.len() != family.len() || family.is_empty() {
        return Err(Error::invalid("need one parameter per mixture and at least one mixture"));
    }
    if nq < 64 {
        return Err(Error::invalid(format!("quantile grid needs at least 64 nodes, got {nq}")));
    }
    let h = 1.0 / nq as f64;
    let grid = UniformGrid::new(0.5 * h, 1.0 - 0.5 * h, nq)?;
    let rows: Vec<Vec<f64>> = family
        .par_iter()
        .map(|m| (0..nq).map(|j| m.icdf((j as f64 + 0.5) * h)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    SnapshotGrid::new(parameters.to_vec(), grid, rows.concat(), h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthCurve {
    pub n: Vec<usize>,
    pub delta: Vec<f64>,
    /// Least-squares slope of `log δ_n` against `log n` inside the window.
    pub slope: Option<f64>,
    pub window: (f64, f64),
    /// First and last `n` used by the fit.
    pub fit_range: Option<(usize, usize)>,
    pub sample_size: usize,
}

impl WidthCurve {
    pub fn relative(&self, n: usize) -> f64 {
        self.delta[n] / self.delta[0]
    }

    /// Refit the slope on another window of `δ_n/δ_0`.
    pub fn with_window(mut self, window: (f64, f64)) -> Self {
        let (slope, range) = fit_slope(&self.delta, window);
        self.slope = slope;
        self.fit_range = range;
        self.window = window;
        self
    }
}

fn fit_slope(delta: &[f64], (lo, hi): (f64, f64)) -> (Option<f64>, Option<(usize, usize)>) {
    let d0 = delta[0];
    let picked: Vec<usize> = (1..delta.len())
        .filter(|&n| {
            let rel = delta[n] / d0;
            rel >= lo && rel <= hi
        })
        .collect();
    let x: Vec<f64> = picked.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = picked.iter().map(|&n| delta[n].ln()).collect();
    match linear_fit(&x, &y) {
        Some((slope, _)) => (Some(slope), Some((picked[0], *picked.last().unwrap()))),
        None => (None, None),
    }
}

/// `δ_n = (Σ_{k>n} σ_k)^{1/2}` from the singular values of the weighted
/// snapshot matrix, with uniform weights over the sampled parameters.
pub fn pod_width_curve(snap: &SnapshotGrid) -> Result<WidthCurve> {
    if snap.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("snapshot matrix has non-finite entries"));
    }
    let scale = (snap.weight / snap.rows() as f64).sqrt();
    let m = DMatrix::from_row_slice(snap.rows(), snap.cols(), &snap.values) * scale;
    let mut sigma: Vec<f64> = m.singular_values().iter().map(|s| s * s).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let mut tail = vec![0.0; sigma.len() + 1];
    for k in (0..sigma.len()).rev() {
        tail[k] = tail[k + 1] + sigma[k];
    }
    let delta: Vec<f64> = tail.iter().map(|t| t.sqrt()).collect();
    if !(delta[0] > 0.0) {
        return Err(Error::invalid("snapshot family is identically zero"));
    }
    let (slope, fit_range) = fit_slope(&delta, SLOPE_WINDOW);
    Ok(WidthCurve {
        n: (0..delta.len()).collect(),
        delta,
        slope,
        window: SLOPE_WINDOW,
        fit_range,
        sample_size: snap.rows(),
    })
}

/// Zeros governing the spectrum of `K(x, y) = ∫_{-R}^{R} u_r(x) u_r(y) dr`
/// on `[-R, R]`, where `u_r` is the single Slater with charge `z` at `r`.
///
/// `a_l` solves `x sin(Rx) = z cos(Rx)` (even modes) and `b_l` solves
/// `x cos(Rx) = -z sin(Rx)` (odd modes).
#[derive(Debug, Clone, PartialEq)]
pub struct TkSpectrum {
    pub half_width: f64,
    pub charge: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl TkSpectrum {
    /// Interleaved `4z⁴/(2a_l²+z³)²`, `4z⁴/(2b_l²+z³)²`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let z = self.charge;
        self.interleave(|x| 4.0 * z.powi(4) / (2.0 * x * x + z.powi(3)).powi(2))
    }

    /// Interleaved `z⁴/(a_l²+z²)²`, `z⁴/(b_l²+z²)²`: the squared eigenvalues
    /// of the Laplace kernel `(z/2)e^{-z|x-y|}` on `[-R, R]`.
    pub fn kernel_eigenvalues(&self) -> Vec<f64> {
        let z = self.charge;
        self.interleave(|x| (z * z / (x * x + z * z)).powi(2))
    }

    fn interleave(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.a.iter().zip(&self.b).flat_map(|(&a, &b)| [f(a), f(b)]).collect()
    }
}

/// First `count` zeros of each family, by bisection on their brackets.
pub fn analytic_tk_spectrum(half_width: f64, charge: f64, count: usize) -> Result<TkSpectrum> {
    if !(half_width > 0.0 && charge > 0.0) {
        return Err(Error::invalid("half width and charge must be positive"));
    }
    let (r, z) = (half_width, charge);
    let even = |x: f64| x * (r * x).sin() - z * (r * x).cos();
    let odd = |x: f64| x * (r * x).cos() + z * (r * x).sin();
    let mut a = Vec::with_capacity(count);
    let mut b = Vec::with_capacity(count);
    for l in 1..=count {
        let base = (l - 1) as f64 * PI / r;
        a.push(bisect(even, base, base + PI / (2.0 * r), 1e-13).map_err(|e| Error::Internal(e.to_string()))?);
        b.push(bisect(odd, base + PI / (2.0 * r), base + PI / r, 1e-13).map_err(|e| Error::Internal(e.to_string()))?);
    }
    Ok(TkSpectrum { half_width, charge, a, b })
}

/// `∫_{-R}^{R} u_r(x) u_r(y) dr` for single Slaters of charge `z`.
pub fn tk_kernel(half_width: f64, charge: f64, x: f64, y: f64) -> f64 {
    let (r, z) = (half_width, charge);
    let (a, b) = (x.min(y), x.max(y));
    let left = (-z * (a + b)).exp() * ((2.0 * z * a).exp() - (-2.0 * z * r).exp()) / (2.0 * z);
    let mid = (b - a) * (-z * (b - a)).exp();
    let right = (z * (a + b)).exp() * ((-2.0 * z * b).exp() - (-2.0 * z * r).exp()) / (2.0 * z);
    0.25 * z * z * (left + mid + right)
}

/// Largest `count` eigenvalues of the midpoint Nyström discretization of
/// [`tk_kernel`] on `[-R, R]` with `npoints` nodes, in decreasing order.
pub fn discrete_kernel_spectrum(half_width: f64, charge: f64, npoints: usize, count: usize) -> Result<Vec<f64>> {
    if npoints < 2 || !npoints.is_multiple_of(2) {
        return Err(Error::invalid("kernel grid needs an even number of nodes"));
    }
    let h = 2.0 * half_width / npoints as f64;
    let half = npoints / 2;
    // nodes x_j = (j + ½)h on the right half; even and odd blocks decouple
    let x: Vec<f64> = (0..half).map(|j| (j as f64 + 0.5) * h).collect();
    let block = |sign: f64| {
        DMatrix::from_fn(half, half, |i, j| {
            h * (tk_kernel(half_width, charge, x[i], x[j]) + sign * tk_kernel(half_width, charge, x[i], -x[j]))
        })
    };
    let mut eig: Vec<f64> = [1.0, -1.0]
        .par_iter()
        .map(|&s| block(s).symmetric_eigenvalues().iter().copied().collect::<Vec<f64>>())
        .flatten()
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.truncate(count);
    Ok(eig)
}
