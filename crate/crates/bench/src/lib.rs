//! Shared fixtures for the benchmarks.

use nrb_core::exact::{solve_ground_state, NucleiConfig};
use nrb_core::greedy::{ReducedBasis, Snapshot};

/// Ground state of two nuclei at `±r` with charges `(0.8, 1.1)`.
pub fn snapshot(r: f64) -> Snapshot {
    let config = NucleiConfig::new(vec![-r, r], vec![0.8, 1.1]).expect("valid configuration");
    let gs = solve_ground_state(&config).expect("ground state");
    Snapshot { parameter: r, mixture: gs.mixture() }
}

/// Basis of `n` snapshots equispaced on `[0.5, 3]`.
pub fn basis(n: usize) -> ReducedBasis {
    let snaps = (0..n)
        .map(|i| snapshot(0.5 + 2.5 * i as f64 / (n - 1) as f64))
        .collect();
    ReducedBasis::new(snaps, vec![0.8, 1.1], (0.5, 3.0)).expect("positive definite basis")
}
