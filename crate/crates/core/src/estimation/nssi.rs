//! Naive single-snapshot inference: fit the VAR(1) directly on per-snapshot
//! MLE fitnesses by least squares.
//!
//! Full mode regresses each coordinate on an intercept and the full lagged
//! vector; mean-field mode pools all coordinates under the equality
//! constraints (common a, b, mu) with regressors (1, own lag, sum of other
//! lags). The noise variance comes from degrees-of-freedom-adjusted
//! residuals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{FitnessSeries, MeanFieldParams, VarParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Full,
    MeanField,
}

#[derive(Debug, Clone)]
pub enum FittedVar {
    Full(VarParams),
    MeanField(MeanFieldParams),
}

impl FittedVar {
    pub fn to_var_params(&self) -> Result<VarParams> {
        match self {
            FittedVar::Full(p) => Ok(p.clone()),
            FittedVar::MeanField(p) => p.to_var_params(),
        }
    }
}

/// Coordinates whose lagged column is (numerically) constant; the usual
/// culprit behind a singular design on saturated series.
fn degenerate_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut out = Vec::new();
    for c in 0..x.ncols() {
        let col = x.column(c);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        if var < 1e-14 {
            out.push(c);
        }
    }
    out
}

fn fit_full(series: &FitnessSeries) -> Result<VarParams> {
    let t_len = series.len();
    let d = series.dim();
    let rows = t_len - 1;
    let theta = series.to_matrix();

    // design: [1, theta_{t-1}]
    let mut x = DMatrix::zeros(rows, d + 1);
    let mut y = DMatrix::zeros(rows, d);
    for r in 0..rows {
        x[(r, 0)] = 1.0;
        for c in 0..d {
            x[(r, 1 + c)] = theta[(r, c)];
            y[(r, c)] = theta[(r + 1, c)];
        }
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let lu = xtx.clone().lu();
    let beta = match lu.solve(&xty) {
        Some(b) => b,
        None => {
            let mut coords = degenerate_columns(&theta);
            coords.dedup();
            return Err(Error::SingularDesign { coordinates: coords });
        }
    };

    let mu = beta.row(0).transpose();
    let b = beta.rows(1, d).transpose();
    let resid = &y - &x * &beta;
    let dof = rows.saturating_sub(d + 1).max(1) as f64;
    let sigma = linalg::symmetrize(&(resid.transpose() * &resid / dof));
    // floor tiny negative eigenvalues born of the normal equations
    let eig = sigma.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let sigma = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    VarParams::new(mu, b, linalg::symmetrize(&sigma))
}

fn fit_meanfield(series: &FitnessSeries) -> Result<MeanFieldParams> {
    let t_len = series.len();
    let d = series.dim();
    let theta = series.to_matrix();
    let rows = (t_len - 1) * d;

    let mut x = DMatrix::zeros(rows, 3);
    let mut y = DVector::zeros(rows);
    let mut r = 0;
    for t in 1..t_len {
        let lag_sum: f64 = (0..d).map(|j| theta[(t - 1, j)]).sum();
        for i in 0..d {
            x[(r, 0)] = 1.0;
            x[(r, 1)] = theta[(t - 1, i)];
            x[(r, 2)] = lag_sum - theta[(t - 1, i)];
            y[r] = theta[(t, i)];
            r += 1;
        }
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let beta = xtx.clone().lu().solve(&xty).ok_or_else(|| {
        let coords = degenerate_columns(&theta);
        Error::SingularDesign { coordinates: coords }
    })?;
    let resid = &y - &x * &beta;
    let dof = rows.saturating_sub(3).max(1) as f64;
    let sigma2 = (resid.dot(&resid) / dof).max(0.0);
    MeanFieldParams::new(beta[1], beta[2], beta[0], sigma2, d)
}

/// Fits a VAR(1) to an observed (or estimated) fitness series.
pub fn nssi_fit(theta_hats: &FitnessSeries, mode: FitMode) -> Result<FittedVar> {
    if theta_hats.len() < 3 {
        return Err(Error::validation("VAR fit needs at least 3 snapshots"));
    }
    match mode {
        FitMode::Full => Ok(FittedVar::Full(fit_full(theta_hats)?)),
        FitMode::MeanField => Ok(FittedVar::MeanField(fit_meanfield(theta_hats)?)),
    }
}
