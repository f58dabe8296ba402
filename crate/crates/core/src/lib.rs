//! Nonlinear reduced basis method for a one-dimensional Schrödinger
//! eigenvalue problem with attractive Dirac potentials.
//!
//! Ground states of `-½u'' - Σ z_m δ(x - r_m) u = E u` are mixtures of
//! Slater distributions `(ζ/2)exp(-ζ|x - r|)`. The crate provides:
//!
//! - [`slater`]: Slater distributions and mixtures, their cdf/icdf, the
//!   closed-form 2-Wasserstein distance and barycenters with extended weights.
//! - [`exact`]: exact ground states for arbitrary nuclei, the Lambert-W
//!   closed form for the symmetric dimer, and a finite-difference oracle.
//! - [`transport`]: the mixture Wasserstein distance, multi-marginal plans,
//!   approximate mixture barycenters and transportation-polytope vertices.
//! - [`greedy`]: greedy snapshot selection with the concave vertex search.
//! - [`online`]: multistart quasi-Newton minimization of the reduced energy.
//! - [`width`]: empirical Kolmogorov widths in L2 and icdf coordinates.
//! - [`artifact`]: the reduced-basis file written offline and read online.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod error;
pub mod exact;
pub mod greedy;
pub mod lbfgs;
pub mod numeric;
pub mod online;
pub mod slater;
pub mod transport;
pub mod width;

pub use error::{Error, Result};
pub use exact::{GroundState, NucleiConfig};
pub use greedy::{ReducedBasis, Snapshot};
pub use online::{OnlineConfig, OnlineResult};
pub use slater::{ExtendedWeightDomain, Slater, SlaterMixture, WeightVector};
pub use transport::{MultiMarginalPlan, TransportPlan};
