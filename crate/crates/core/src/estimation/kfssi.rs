//! Kalman-filter single-snapshot inference: treat per-snapshot MLE outputs
//! as biased noisy observations of the latent fitnesses and estimate the
//! state-space model.
//!
//! Mean-field mode maximizes the prediction-error log-likelihood over
//! `(a, b, mu, sigma^2, gamma, r)` (scalar bias, isotropic observation
//! noise) with a derivative-free Nelder-Mead search started from the N-SSI
//! estimate plus jittered restarts. Full mode runs EM: Kalman smoother
//! E-step, closed-form regression M-step. The full-B regression is heavily
//! over-parameterized at interbank scale (hundreds of coefficients from a
//! few dozen transitions), so the M-step solve carries a trace-scaled ridge;
//! without it the transition estimates blow up by an order of magnitude and
//! carry no sign information.
//!
//! Estimates whose spectral radius reaches the stationarity boundary are
//! projected back to radius 0.999 and flagged.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kalman::{filter_pass, smoother_pass};
use super::nssi::{nssi_fit, FitMode, FittedVar};
use super::{LatentParams, StateSpaceParams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seeds;
use crate::types::{FitnessSeries, FitnessState, MeanFieldParams, VarParams};

const BOUNDARY_RADIUS: f64 = 0.999;
const NM_RESTARTS: usize = 5;
const NM_MAX_EVALS: usize = 800;
const NM_FTOL: f64 = 1e-8;
const EM_MAX_ITERS: usize = 300;
const EM_TOL: f64 = 1e-6;
/// Trace-scaled ridge weight for the full-mode M-step regression.
const EM_RIDGE_REL: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct KfssiFit {
    pub params: StateSpaceParams,
    /// Filtered latent means at each observation time.
    pub filtered: FitnessSeries,
    pub loglik: f64,
    /// Set when the estimate hit the stationarity boundary and was projected.
    pub boundary_warning: bool,
}

/// Fits the state-space model to an MLE fitness series and returns the
/// fitted parameters together with the filtered latent means.
pub fn kfssi_fit(theta_hats: &FitnessSeries, mode: FitMode, seed: u64) -> Result<KfssiFit> {
    match mode {
        FitMode::MeanField => fit_meanfield(theta_hats, seed),
        FitMode::Full => fit_full_em(theta_hats),
    }
}

// ---------------------------------------------------------------------------
// mean-field mode: Nelder-Mead over (a, b, mu, ln sigma2, gamma, ln r)
// ---------------------------------------------------------------------------

fn meanfield_ssp(x: &[f64], n: usize) -> Result<StateSpaceParams> {
    let mf = MeanFieldParams::new(x[0], x[1], x[2], x[3].exp(), n)?;
    StateSpaceParams::new(
        DVector::from_element(n, x[4]),
        DVector::from_element(n, x[5].exp().max(1e-12)),
        LatentParams::MeanField(mf),
    )
}

fn meanfield_negloglik(x: &[f64], obs: &FitnessSeries) -> f64 {
    let n = obs.dim();
    let lam = x[0] + x[1] * (n as f64 - 1.0);
    if lam.abs() >= BOUNDARY_RADIUS || (x[0] - x[1]).abs() >= BOUNDARY_RADIUS {
        return f64::INFINITY;
    }
    if !(x[3].is_finite() && x[5].is_finite()) || x[3] < -40.0 || x[5] < -40.0 {
        return f64::INFINITY;
    }
    let ssp = match meanfield_ssp(x, n) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY,
    };
    match filter_pass(&ssp, obs) {
        Ok(pass) if pass.loglik.is_finite() => -pass.loglik,
        _ => f64::INFINITY,
    }
}

/// Projects (a, b) inside the stationarity region, scaling both so the
/// spectral radius max(|a + b(n-1)|, |a - b|) lands at the boundary value.
fn project_stationary(a: f64, b: f64, n: usize) -> (f64, f64, bool) {
    let rho = (a + b * (n as f64 - 1.0)).abs().max((a - b).abs());
    if rho < BOUNDARY_RADIUS {
        (a, b, false)
    } else {
        let s = BOUNDARY_RADIUS / rho * (1.0 - 1e-9);
        (a * s, b * s, true)
    }
}

fn fit_meanfield(obs: &FitnessSeries, seed: u64) -> Result<KfssiFit> {
    let n = obs.dim();
    // N-SSI initialization, projected into the stationary region
    let init = match nssi_fit(obs, FitMode::MeanField)? {
        FittedVar::MeanField(p) => p,
        _ => unreachable!(),
    };
    let (a0, b0, _) = project_stationary(init.a, init.b, n);
    let s20 = init.sigma2.max(1e-4);
    let x0 = [
        a0,
        b0,
        init.mu,
        (0.5 * s20).ln(),
        0.0,
        s20.max(1e-3).ln(),
    ];

    let objective = |x: &[f64]| meanfield_negloglik(x, obs);
    let mut rng = seeds::rng_from_seed(seed);
    let jitter_scale = [0.05, 0.01, 0.05, 0.3, 0.05, 0.3];

    let mut best_x = x0;
    let mut best_f = f64::INFINITY;
    for restart in 0..=NM_RESTARTS {
        let start: Vec<f64> = if restart == 0 {
            x0.to_vec()
        } else {
            x0.iter()
                .zip(&jitter_scale)
                .map(|(v, s)| v + s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let (x, f) = nelder_mead(&objective, &start, NM_MAX_EVALS, NM_FTOL);
        if f < best_f {
            best_f = f;
            best_x = [x[0], x[1], x[2], x[3], x[4], x[5]];
        }
    }
    if !best_f.is_finite() {
        return Err(Error::numerical(
            "mean-field likelihood search found no admissible parameters",
        ));
    }

    let (a, b, boundary_warning) = project_stationary(best_x[0], best_x[1], n);
    let final_x = [a, b, best_x[2], best_x[3], best_x[4], best_x[5]];
    let ssp = meanfield_ssp(&final_x, n)?;
    let pass = filter_pass(&ssp, obs)?;
    let filtered = filtered_series(&pass.filtered_mean, obs.is_directed())?;
    Ok(KfssiFit {
        params: ssp,
        filtered,
        loglik: pass.loglik,
        boundary_warning,
    })
}

fn filtered_series(means: &[DVector<f64>], directed: bool) -> Result<FitnessSeries> {
    FitnessSeries::new(
        means
            .iter()
            .map(|m| FitnessState::from_vector(directed, m.clone()))
            .collect::<Result<Vec<_>>>()?,
    )
}

// ---------------------------------------------------------------------------
// full mode: EM with ridge-stabilized M-step
// ---------------------------------------------------------------------------

fn project_b_matrix(b: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let rho = linalg::spectral_radius(b)?;
    if rho < BOUNDARY_RADIUS {
        Ok((b.clone(), false))
    } else {
        Ok((b * (BOUNDARY_RADIUS / rho * (1.0 - 1e-9)), true))
    }
}

fn psd_floor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = linalg::symmetrize(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    linalg::symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

fn fit_full_em(obs: &FitnessSeries) -> Result<KfssiFit> {
    let d = obs.dim();
    let t_len = obs.len();
    if t_len < 5 {
        return Err(Error::validation("full-mode KF-SSI needs at least 5 snapshots"));
    }

    // init from the naive VAR fit
    let init = match nssi_fit(obs, FitMode::Full)? {
        FittedVar::Full(p) => p,
        _ => unreachable!(),
    };
    let (mut b, mut hit_boundary) = project_b_matrix(&init.b)?;
    let mut mu = init.mu.clone();
    let mut sigma = psd_floor(&init.sigma, 1e-4);
    let mut gamma = DVector::zeros(d);
    let mut r_diag = DVector::from_element(d, 0.5);

    let mut prev_ll = f64::NEG_INFINITY;
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let (bp, hit) = project_b_matrix(&b)?;
        b = bp;
        hit_boundary |= hit;
        let var = VarParams::new(mu.clone(), b.clone(), sigma.clone())?;
        let ssp = StateSpaceParams::new(gamma.clone(), r_diag.clone(), LatentParams::Full(var))?;
        let sm = smoother_pass(&ssp, obs)?;
        last_ll = sm.loglik;

        // E-step sums for the lag regression theta_t = [mu B] [1; theta_{t-1}]
        let mut s_xx = DMatrix::zeros(d + 1, d + 1);
        let mut s_yx = DMatrix::zeros(d, d + 1);
        let mut s_yy = DMatrix::zeros(d, d);
        for t in 1..t_len {
            let m_prev = &sm.mean[t - 1];
            let m_cur = &sm.mean[t];
            s_xx[(0, 0)] += 1.0;
            for i in 0..d {
                s_xx[(0, 1 + i)] += m_prev[i];
                s_xx[(1 + i, 0)] += m_prev[i];
            }
            let exx = &sm.cov[t - 1] + m_prev * m_prev.transpose();
            let mut xx_block = s_xx.view_mut((1, 1), (d, d));
            xx_block += &exx;
            for i in 0..d {
                s_yx[(i, 0)] += m_cur[i];
            }
            let eyx = &sm.cross_cov[t] + m_cur * m_prev.transpose();
            let mut yx_block = s_yx.view_mut((0, 1), (d, d));
            yx_block += &eyx;
            s_yy += &sm.cov[t] + m_cur * m_cur.transpose();
        }

        // ridge on the state block keeps the over-parameterized solve sane
        let ridge = EM_RIDGE_REL * s_xx.view((1, 1), (d, d)).trace() / d as f64;
        let mut s_xx_r = s_xx.clone();
        for i in 0..d {
            s_xx_r[(1 + i, 1 + i)] += ridge;
        }
        let coeff = s_xx_r
            .clone()
            .lu()
            .solve(&s_yx.transpose())
            .ok_or_else(|| Error::numerical("singular E-step design in EM"))?
            .transpose();
        mu = coeff.column(0).into_owned();
        b = coeff.columns(1, d).into_owned();

        let tm1 = (t_len - 1) as f64;
        let quad = &s_yy - &coeff * s_yx.transpose() - &s_yx * coeff.transpose()
            + &coeff * &s_xx * coeff.transpose();
        sigma = psd_floor(&(quad / tm1), 1e-8);

        // observation equation updates
        let mut g = DVector::zeros(d);
        for (t, state) in obs.states.iter().enumerate() {
            g += state.theta() - &sm.mean[t];
        }
        gamma = g / t_len as f64;
        let mut r_new = DVector::zeros(d);
        for (t, state) in obs.states.iter().enumerate() {
            let resid = state.theta() - &gamma - &sm.mean[t];
            for i in 0..d {
                r_new[i] += resid[i] * resid[i] + sm.cov[t][(i, i)];
            }
        }
        r_diag = (r_new / t_len as f64).map(|v| v.max(1e-6));

        if (last_ll - prev_ll).abs() < EM_TOL * (1.0 + prev_ll.abs()) {
            break;
        }
        prev_ll = last_ll;
    }

    let (b_final, hit) = project_b_matrix(&b)?;
    hit_boundary |= hit;
    let var = VarParams::new(mu, b_final, sigma)?;
    let ssp = StateSpaceParams::new(gamma, r_diag, LatentParams::Full(var))?;
    let pass = filter_pass(&ssp, obs)?;
    let filtered = filtered_series(&pass.filtered_mean, obs.is_directed())?;
    Ok(KfssiFit {
        params: ssp,
        filtered,
        loglik: pass.loglik,
        boundary_warning: hit_boundary,
    })
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

/// Plain Nelder-Mead with the standard coefficients. Infinite objective
/// values are admissible (rejected regions); the simplex contracts away
/// from them.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    max_evals: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;

    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let fx0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        let step = if x[i].abs() > 0.1 { 0.1 * x[i].abs() } else { 0.05 };
        x[i] += step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    loop {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if evals >= max_evals || (worst - best).abs() < ftol * (1.0 + best.abs()) {
            break;
        }

        // centroid of all but worst
        let mut centroid = vec![0.0; dim];
        for v in simplex.iter().take(dim) {
            for (c, xi) in centroid.iter_mut().zip(&v.0) {
                *c += xi / dim as f64;
            }
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[dim].0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let f_reflect = eval(&reflect, &mut evals);

        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&reflect)
                .map(|(c, r)| c + gamma * (r - c))
                .collect();
            let f_expand = eval(&expand, &mut evals);
            simplex[dim] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
        } else if f_reflect < simplex[dim - 1].1 {
            simplex[dim] = (reflect, f_reflect);
        } else {
            let contract: Vec<f64> = if f_reflect < simplex[dim].1 {
                centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + rho * (r - c))
                    .collect()
            } else {
                centroid
                    .iter()
                    .zip(&simplex[dim].0)
                    .map(|(c, w)| c + rho * (w - c))
                    .collect()
            };
            let f_contract = eval(&contract, &mut evals);
            if f_contract < simplex[dim].1.min(f_reflect) {
                simplex[dim] = (contract, f_contract);
            } else {
                // shrink toward the best vertex
                let best_x = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for (xi, bi) in v.0.iter_mut().zip(&best_x) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                    v.1 = eval(&v.0.clone(), &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex[0].clone().into()
}
