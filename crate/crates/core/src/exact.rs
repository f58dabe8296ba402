//! Exact ground states of the one-dimensional operator `-½∂ₓ² - Σ z_m δ(x - r_m)`.
//!
//! The ground state is the Slater mixture `Σ π_m (ζ/2) e^{-ζ|x - r_m|}`
//! with energy `-ζ²/2`. The matching conditions at each nucleus read
//! `ζ π_m = z_m Σ_k π_k e^{-ζ|r_m - r_k|}`, so `π` is the Perron vector of
//! `B(ζ) = (1/ζ) diag(z) E(ζ)` and `ζ` is where its Perron value is one.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{brent, lambert_w0};
use crate::slater::SlaterMixture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleiConfig {
    positions: Vec<f64>,
    charges: Vec<f64>,
}

impl NucleiConfig {
    pub fn new(positions: Vec<f64>, charges: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("at least one nucleus is required"));
        }
        if positions.len() != charges.len() {
            return Err(Error::invalid(format!(
                "{} positions but {} charges",
                positions.len(),
                charges.len()
            )));
        }
        if positions.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("positions must be finite"));
        }
        if charges.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
            return Err(Error::invalid("charges must be positive and finite"));
        }
        Ok(NucleiConfig { positions, charges })
    }

    /// Two nuclei at `±r` with a common charge `z`.
    pub fn symmetric_dimer(r: f64, z: f64) -> Result<Self> {
        Self::new(vec![-r, r], vec![z, z])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn charges(&self) -> &[f64] {
        &self.charges
    }

    pub fn translated(&self, t: f64) -> Self {
        NucleiConfig {
            positions: self.positions.iter().map(|r| r + t).collect(),
            charges: self.charges.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub zeta: f64,
    pub pi: Vec<f64>,
    pub energy: f64,
    pub config: NucleiConfig,
}

impl GroundState {
    fn new(zeta: f64, pi: Vec<f64>, config: NucleiConfig) -> Self {
        GroundState { zeta, energy: -0.5 * zeta * zeta, pi, config }
    }

    /// The ground-state density as a Slater mixture.
    pub fn mixture(&self) -> SlaterMixture {
        SlaterMixture::with_common_scale(self.zeta, self.config.positions(), self.pi.clone())
            .expect("ground state always forms a valid mixture")
    }

    /// `max_m |ζ π_m - z_m Σ_k π_k e^{-ζ|r_m - r_k|}|`.
    pub fn jump_residual(&self) -> f64 {
        let r = self.config.positions();
        let z = self.config.charges();
        (0..r.len())
            .map(|m| {
                let s: f64 = (0..r.len())
                    .map(|k| self.pi[k] * (-self.zeta * (r[m] - r[k]).abs()).exp())
                    .sum();
                (self.zeta * self.pi[m] - z[m] * s).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Closed-form ground state of two nuclei at `±r` with charge `z`.
pub fn solve_symmetric_dimer(r: f64, z: f64) -> Result<GroundState> {
    if !(r > 0.0 && r.is_finite() && z > 0.0 && z.is_finite()) {
        return Err(Error::invalid(format!("symmetric dimer needs r, z > 0, got r={r}, z={z}")));
    }
    let x = 2.0 * z * r * (-2.0 * z * r).exp();
    let mut zeta = z + lambert_w0(x)? / (2.0 * r);
    // Newton on g(ζ) = ζ - z(1 + e^{-2ζr}) removes the cancellation in W(x)/2r
    for _ in 0..4 {
        let e = (-2.0 * zeta * r).exp();
        let g = zeta - z * (1.0 + e);
        let dg = 1.0 + 2.0 * z * r * e;
        let next = zeta - g / dg;
        if next == zeta {
            break;
        }
        zeta = next;
    }
    let config = NucleiConfig::symmetric_dimer(r, z)?;
    Ok(GroundState::new(zeta, vec![0.5, 0.5], config))
}

/// Perron value and L1-normalized Perron vector of `B(ζ)`.
///
/// `B` is similar to the symmetric `S = (1/ζ) D^{½} E D^{½}`, so the pair
/// comes from a symmetric eigendecomposition and `π ∝ D^{½} v`.
pub fn perron_pair(config: &NucleiConfig, zeta: f64) -> (f64, Vec<f64>) {
    let r = config.positions();
    let sq: Vec<f64> = config.charges().iter().map(|z| z.sqrt()).collect();
    let m = r.len();
    let s = DMatrix::from_fn(m, m, |i, j| sq[i] * sq[j] * (-zeta * (r[i] - r[j]).abs()).exp() / zeta);
    let eig = SymmetricEigen::new(s);
    let (imax, rho) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let v = eig.eigenvectors.column(imax);
    let mut pi: Vec<f64> = (0..m).map(|i| sq[i] * v[i].abs()).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    (rho, pi)
}

/// Ground state for an arbitrary configuration.
pub fn solve_ground_state(config: &NucleiConfig) -> Result<GroundState> {
    let z = config.charges();
    if config.len() == 1 {
        return Ok(GroundState::new(z[0], vec![1.0], config.clone()));
    }
    let zmax = z.iter().copied().fold(0.0, f64::max);
    let zsum: f64 = z.iter().sum();
    let lo = zmax * (1.0 - 1e-12);
    let hi = zsum * (1.0 + 1e-12);
    let f = |zeta: f64| perron_pair(config, zeta).0 - 1.0;
    let zeta = if f(hi) >= 0.0 {
        // coincident nuclei: the upper end is the root
        hi.min(zsum).max(lo)
    } else {
        brent(f, lo, hi, 1e-15 * zsum, 200)?
    };
    let (_, pi) = perron_pair(config, zeta);
    Ok(GroundState::new(zeta, pi, config.clone()))
}

/// Finite-difference ground state on `[-half_width, half_width]`.
#[derive(Debug, Clone)]
pub struct GridGroundState {
    pub energy: f64,
    pub nodes: Vec<f64>,
    /// Positive, normalized so that `h Σ u = 1`.
    pub values: Vec<f64>,
    pub spacing: f64,
}

/// Lowest eigenpair of `-½D² - Σ (z_m/h) e_{j(m)}` on a uniform grid with
/// homogeneous Dirichlet ends, each delta placed on its nearest node.
///
/// The eigenvalue is isolated by Sturm-sequence bisection and the vector
/// by inverse iteration shifted just below it.
pub fn grid_eigensolver(config: &NucleiConfig, half_width: f64, npoints: usize) -> Result<GridGroundState> {
    if npoints < 3 {
        return Err(Error::invalid("grid needs at least 3 interior points"));
    }
    if !(half_width > 0.0) {
        return Err(Error::invalid("half width must be positive"));
    }
    let n = npoints;
    let h = 2.0 * half_width / (n + 1) as f64;
    let nodes: Vec<f64> = (1..=n).map(|i| -half_width + i as f64 * h).collect();
    let mut diag = vec![1.0 / (h * h); n];
    for (&r, &z) in config.positions().iter().zip(config.charges()) {
        let j = ((r + half_width) / h).round() as isize - 1;
        if j < 0 || j >= n as isize {
            return Err(Error::invalid(format!("nucleus at {r} lies outside the grid")));
        }
        diag[j as usize] -= z / h;
    }
    let off = -0.5 / (h * h);

    // number of eigenvalues below σ
    let count_below = |sigma: f64| -> usize {
        let mut c = 0;
        let mut d = diag[0] - sigma;
        if d < 0.0 {
            c += 1;
        }
        for &di in &diag[1..] {
            let prev = if d == 0.0 { f64::EPSILON * off.abs() } else { d };
            d = di - sigma - off * off / prev;
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    let mut lo = diag.iter().copied().fold(f64::INFINITY, f64::min) - 2.0 * off.abs();
    let mut hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0 * off.abs();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let energy = 0.5 * (lo + hi);

    // T - σI is positive definite for σ below the spectrum, so the Thomas
    // algorithm needs no pivoting
    let sigma = energy - 1e-9 * energy.abs().max(1.0);
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut b = diag[0] - sigma;
        c[0] = off / b;
        d[0] = rhs[0] / b;
        for i in 1..n {
            b = diag[i] - sigma - off * c[i - 1];
            c[i] = off / b;
            d[i] = (rhs[i] - off * d[i - 1]) / b;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    };
    let mut u = vec![1.0; n];
    const MAX_ITER: usize = 100;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let mut next = solve(&u);
        let norm: f64 = next.iter().map(|v| v.abs()).sum::<f64>() * h;
        next.iter_mut().for_each(|v| *v /= norm);
        let change: f64 = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next.iter().copied().fold(0.0, f64::max);
        u = next;
        if change <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { what: "inverse iteration", iterations: MAX_ITER });
    }
    if u.iter().any(|v| *v < -1e-12) {
        return Err(Error::Internal("ground-state vector changed sign".into()));
    }
    u.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(GridGroundState { energy, nodes, values: u, spacing: h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::bisect;
    use proptest::prelude::*;

    struct Lcg(u64);

    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }

        fn range(&mut self, a: f64, b: f64) -> f64 {
            a + (b - a) * self.next()
        }
    }

    fn random_configs(count: usize) -> Vec<NucleiConfig> {
        let mut rng = Lcg(17);
        (0..count)
            .map(|i| {
                let m = 1 + i % 4;
                let pos = (0..m).map(|_| rng.range(-3.0, 3.0)).collect();
                let z = (0..m).map(|_| rng.range(0.2, 3.0)).collect();
                NucleiConfig::new(pos, z).unwrap()
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(NucleiConfig::new(vec![], vec![]).is_err());
        assert!(NucleiConfig::new(vec![0.0], vec![0.0]).is_err());
        assert!(NucleiConfig::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn dimer_fixed_point_and_bisection() {
        let gs = solve_symmetric_dimer(1.0, 1.0).unwrap();
        let g = |zeta: f64| zeta - (1.0 + (-2.0 * zeta).exp());
        assert!(g(gs.zeta).abs() <= 1e-12);
        let b = bisect(g, 1.0, 2.0, 0.0).unwrap();
        assert!((gs.zeta - b).abs() <= 1e-12);
        assert_eq!(gs.energy, -0.5 * gs.zeta * gs.zeta);
    }

    #[test]
    fn dimer_separated_limit() {
        let gs = solve_symmetric_dimer(50.0, 1.0).unwrap();
        assert!((gs.zeta - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn single_nucleus() {
        let c = NucleiConfig::new(vec![0.7], vec![1.3]).unwrap();
        let gs = solve_ground_state(&c).unwrap();
        assert_eq!(gs.zeta, 1.3);
        assert_eq!(gs.pi, vec![1.0]);
    }

    #[test]
    fn coincident_nuclei_merge_charges() {
        let c = NucleiConfig::new(vec![0.5, 0.5, 0.5], vec![0.3, 0.9, 1.1]).unwrap();
        let gs = solve_ground_state(&c).unwrap();
        assert!((gs.zeta - 2.3).abs() <= 1e-11, "{}", gs.zeta);
        assert!(gs.jump_residual() <= 1e-10);
    }

    #[test]
    fn general_solver_matches_dimer_closed_form() {
        let c = NucleiConfig::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let gs = solve_ground_state(&c).unwrap();
        let cf = solve_symmetric_dimer(1.0, 1.0).unwrap();
        assert!((gs.zeta - cf.zeta).abs() <= 1e-11);
        for (a, b) in gs.pi.iter().zip(&cf.pi) {
            assert!((a - b).abs() <= 1e-11);
        }
    }

    #[test]
    fn random_configs_satisfy_matching_conditions() {
        for c in random_configs(100) {
            let gs = solve_ground_state(&c).unwrap();
            assert!(gs.jump_residual() <= 1e-10, "{c:?}: {}", gs.jump_residual());
            assert!((gs.pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(gs.pi.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn perron_value_brackets_one() {
        for c in random_configs(100) {
            let zmax = c.charges().iter().copied().fold(0.0, f64::max);
            let zsum: f64 = c.charges().iter().sum();
            let at_max = perron_pair(&c, zmax).0;
            let at_sum = perron_pair(&c, zsum).0;
            assert!(at_max >= 1.0 - 1e-12, "{at_max}");
            assert!(at_sum <= 1.0 + 1e-12, "{at_sum}");
            let mut prev = f64::INFINITY;
            for k in 0..=20 {
                let zeta = 0.5 * zmax + k as f64 * (zsum - 0.5 * zmax) / 20.0;
                let rho = perron_pair(&c, zeta).0;
                assert!(rho < prev);
                prev = rho;
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        // dyadic shifts keep every pairwise distance bit-identical
        for c in random_configs(20) {
            let pos: Vec<f64> = c.positions().iter().map(|r| (r * 64.0).round() / 64.0).collect();
            let c = NucleiConfig::new(pos, c.charges().to_vec()).unwrap();
            let a = solve_ground_state(&c).unwrap();
            let b = solve_ground_state(&c.translated(0.375)).unwrap();
            assert_eq!(a.zeta, b.zeta);
            assert_eq!(a.pi, b.pi);
            for (ra, rb) in a.mixture().positions().iter().zip(b.mixture().positions()) {
                assert_eq!(ra + 0.375, rb);
            }
        }
    }

    #[test]
    fn grid_converges_at_least_first_order() {
        // a nucleus off the nodes pays the O(h) placement error; on a node
        // the scheme is second order
        for (r, grids) in [(0.0, [2001, 4001, 8001]), (0.3, [2000, 4000, 8000])] {
            let c = NucleiConfig::new(vec![r], vec![1.0]).unwrap();
            let errs: Vec<f64> = grids
                .iter()
                .map(|&n| (grid_eigensolver(&c, 30.0, n).unwrap().energy + 0.5).abs())
                .collect();
            let order1 = (errs[0] / errs[1]).log2();
            let order2 = (errs[1] / errs[2]).log2();
            assert!(order1 > 0.9 && order2 > 0.9, "r = {r}: {errs:?}");
        }
    }

    #[test]
    fn grid_matches_dimer_after_extrapolation() {
        let c = NucleiConfig::symmetric_dimer(1.0, 1.0).unwrap();
        let exact = solve_symmetric_dimer(1.0, 1.0).unwrap();
        // grids chosen so both nuclei sit exactly on nodes
        let e1 = grid_eigensolver(&c, 32.0, 4095).unwrap().energy;
        let e2 = grid_eigensolver(&c, 32.0, 8191).unwrap().energy;
        let richardson = 2.0 * e2 - e1;
        assert!((richardson - exact.energy).abs() < 1e-4, "{richardson} vs {}", exact.energy);
        assert!((e2 - exact.energy).abs() < (e1 - exact.energy).abs());
    }

    #[test]
    fn grid_vector_approaches_exact_density() {
        let c = NucleiConfig::new(vec![-0.5, 1.0], vec![1.0, 0.7]).unwrap();
        let exact = solve_ground_state(&c).unwrap().mixture();
        let dist = |n: usize| {
            let g = grid_eigensolver(&c, 32.0, n).unwrap();
            g.nodes
                .iter()
                .zip(&g.values)
                .map(|(x, u)| (u - exact.density(*x)).powi(2))
                .sum::<f64>()
                .sqrt()
                * g.spacing.sqrt()
        };
        let d1 = dist(2047);
        let d2 = dist(8191);
        assert!(d2 < 0.5 * d1 && d2 < 1e-2, "{d1} {d2}");
    }

    proptest! {
        #[test]
        fn dimer_fixed_point_residual(r in 0.1f64..5.0, z in 0.1f64..5.0) {
            let gs = solve_symmetric_dimer(r, z).unwrap();
            prop_assert!((gs.zeta - z * (1.0 + (-2.0 * gs.zeta * r).exp())).abs() <= 1e-12);
        }
    }
}
