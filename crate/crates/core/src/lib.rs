//! Temporal fitness networks driven by latent VAR(1) dynamics.
//!
//! Nodes carry latent fitnesses that evolve as a first-order vector
//! autoregression; snapshots are drawn independently through a logistic link
//! on fitness sums. The crate covers:
//!
//! - simulation of the latent process and of network snapshots ([`var_dynamics`],
//!   [`sampling`]),
//! - logistic-normal integrals and expected densities under Gaussian fitnesses
//!   ([`gaussian_logistic`]),
//! - impulse response functions of network metrics to node-level shocks,
//!   closed-form in the homogeneous mean-field case and Monte Carlo in general
//!   ([`irf`]),
//! - recovery of the latent dynamics from observed snapshots via per-snapshot
//!   maximum likelihood and Kalman filtering ([`estimation`]),
//! - ingestion of interbank-style transaction logs and a synthetic substitute
//!   generator ([`ingest`]).
//!
//! All operations are pure given an explicit seed; parallel paths derive
//! per-item seeds so results do not depend on worker count.

pub mod error;
pub mod estimation;
pub mod gaussian_logistic;
pub mod ingest;
pub mod io;
pub mod irf;
pub mod linalg;
pub mod sampling;
pub mod seeds;
pub mod types;
pub mod var_dynamics;

pub use error::{Error, Result};
pub use types::{
    AdjacencySnapshot, FitnessSeries, FitnessState, GaussianMoments, MeanFieldParams, ShockSpec,
    TemporalNetwork, VarParams,
};
