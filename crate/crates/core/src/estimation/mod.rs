//! Estimation of the latent dynamics from observed snapshots.

mod benchmark;
mod kalman;
mod kfssi;
mod mle;
mod nssi;

pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkReport, MethodErrors};
pub use kalman::kalman_filter;
pub use kfssi::{kfssi_fit, KfssiFit};
pub use mle::{mle_snapshot, mle_series, SnapshotMle, THETA_MAX};
pub use nssi::{nssi_fit, FitMode, FittedVar};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::types::{MeanFieldParams, VarParams};

/// Latent-dynamics parametrization: free VAR or constrained mean-field.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentParams {
    Full(VarParams),
    MeanField(MeanFieldParams),
}

impl LatentParams {
    pub fn dim(&self) -> usize {
        match self {
            LatentParams::Full(p) => p.dim(),
            LatentParams::MeanField(p) => p.n,
        }
    }

    pub fn to_var_params(&self) -> Result<VarParams> {
        match self {
            LatentParams::Full(p) => Ok(p.clone()),
            LatentParams::MeanField(p) => p.to_var_params(),
        }
    }
}

/// Observation bias, diagonal observation noise, and latent VAR of the
/// state-space model for per-snapshot MLE observations.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceParams {
    pub gamma: DVector<f64>,
    /// Diagonal of the observation noise covariance R.
    pub obs_noise_diag: DVector<f64>,
    pub latent: LatentParams,
}

impl StateSpaceParams {
    pub fn new(gamma: DVector<f64>, obs_noise_diag: DVector<f64>, latent: LatentParams) -> Result<Self> {
        let d = latent.dim();
        if gamma.len() != d || obs_noise_diag.len() != d {
            return Err(Error::Dimension {
                what: "state-space observation parameters",
                expected: d,
                found: gamma.len(),
            });
        }
        if obs_noise_diag.iter().any(|&r| r <= 0.0) {
            return Err(Error::validation("observation noise must be positive"));
        }
        Ok(StateSpaceParams {
            gamma,
            obs_noise_diag,
            latent,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}
