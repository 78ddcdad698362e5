//! Kalman filtering and smoothing for the MLE-observation state space
//!
//! ```text
//! theta_t = mu + B theta_{t-1} + w_t,      w_t ~ N(0, Sigma)
//! Theta_t = gamma + theta_t + v_t,         v_t ~ N(0, R), R diagonal
//! ```
//!
//! The observation matrix is the identity, so the filter is the textbook
//! predict/update recursion with `S = P_pred + R`. The state is initialized
//! at the stationary law (mean `(I-B)^{-1} mu`, covariance from the
//! discrete Lyapunov equation); since the stationary law is a fixed point of
//! the prediction step, the first observation is assimilated against it
//! directly. The log-likelihood comes from the prediction error
//! decomposition. Covariance updates use the Joseph form.

use nalgebra::{DMatrix, DVector};

use super::StateSpaceParams;
use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{FitnessSeries, GaussianMoments};

pub(crate) struct FilterPass {
    pub filtered_mean: Vec<DVector<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    pub predicted_mean: Vec<DVector<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub loglik: f64,
}

pub(crate) fn filter_pass(ssp: &StateSpaceParams, obs: &FitnessSeries) -> Result<FilterPass> {
    let d = ssp.dim();
    if obs.dim() != d {
        return Err(Error::Dimension {
            what: "kalman observations",
            expected: d,
            found: obs.dim(),
        });
    }
    let var = ssp.latent.to_var_params()?;
    let t_len = obs.len();
    let r = DMatrix::from_diagonal(&ssp.obs_noise_diag);
    let eye = DMatrix::identity(d, d);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    let mut mean = var.stationary_mean()?;
    let mut cov = var.stationary_cov()?;

    let mut out = FilterPass {
        filtered_mean: Vec::with_capacity(t_len),
        filtered_cov: Vec::with_capacity(t_len),
        predicted_mean: Vec::with_capacity(t_len),
        predicted_cov: Vec::with_capacity(t_len),
        loglik: 0.0,
    };

    for (t, state) in obs.states.iter().enumerate() {
        if t > 0 {
            mean = &var.mu + &var.b * &mean;
            cov = linalg::symmetrize(&(&var.b * &cov * var.b.transpose() + &var.sigma));
        }
        out.predicted_mean.push(mean.clone());
        out.predicted_cov.push(cov.clone());

        let s = linalg::symmetrize(&(&cov + &r));
        let chol = s.clone().cholesky().ok_or_else(|| {
            Error::numerical(format!(
                "innovation covariance not positive definite at time {t}"
            ))
        })?;
        let innovation = state.theta() - &ssp.gamma - &mean;
        let s_inv_innov = chol.solve(&innovation);
        let log_det = 2.0 * chol.l().diagonal().map(|x| x.ln()).sum();
        out.loglik +=
            -0.5 * (d as f64 * ln_2pi + log_det + innovation.dot(&s_inv_innov));

        // K = P S^{-1}; Joseph-form covariance update
        let gain = chol.solve(&cov.transpose()).transpose();
        mean += &gain * &innovation;
        let i_minus_k = &eye - &gain;
        cov = linalg::symmetrize(
            &(&i_minus_k * &cov * i_minus_k.transpose() + &gain * &r * gain.transpose()),
        );
        out.filtered_mean.push(mean.clone());
        out.filtered_cov.push(cov.clone());
    }
    Ok(out)
}

/// Filtered means/covariances at each time (conditioning on observations up
/// to and including t) and the prediction-error-decomposition log-likelihood.
pub fn kalman_filter(
    ssp: &StateSpaceParams,
    observations: &FitnessSeries,
) -> Result<(Vec<GaussianMoments>, f64)> {
    let pass = filter_pass(ssp, observations)?;
    let moments = pass
        .filtered_mean
        .iter()
        .zip(&pass.filtered_cov)
        .map(|(m, c)| GaussianMoments::new(m.clone(), c.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((moments, pass.loglik))
}

pub(crate) struct SmootherPass {
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    /// `Cov(theta_t, theta_{t-1} | all observations)` for t >= 1.
    pub cross_cov: Vec<DMatrix<f64>>,
    pub loglik: f64,
}

/// Rauch-Tung-Striebel smoother on top of a filter pass. Internal: the
/// smoother only feeds the EM updates, it is not a user-facing product.
pub(crate) fn smoother_pass(
    ssp: &StateSpaceParams,
    obs: &FitnessSeries,
) -> Result<SmootherPass> {
    let pass = filter_pass(ssp, obs)?;
    let var = ssp.latent.to_var_params()?;
    let t_len = obs.len();
    let d = ssp.dim();

    let mut mean = pass.filtered_mean.clone();
    let mut cov = pass.filtered_cov.clone();
    let mut cross = vec![DMatrix::zeros(d, d); t_len];

    for t in (0..t_len - 1).rev() {
        // J_t = P_t B' (P_pred_{t+1})^{-1}, via solve on the symmetric predicted cov
        let p_pred = &pass.predicted_cov[t + 1];
        let lu = p_pred.clone().lu();
        let rhs = (&pass.filtered_cov[t] * var.b.transpose()).transpose();
        let j_t = lu
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("singular predicted covariance in smoother"))?
            .transpose();
        let mean_diff = &mean[t + 1] - &pass.predicted_mean[t + 1];
        mean[t] = &pass.filtered_mean[t] + &j_t * mean_diff;
        let cov_diff = &cov[t + 1] - p_pred;
        cov[t] = linalg::symmetrize(
            &(&pass.filtered_cov[t] + &j_t * cov_diff * j_t.transpose()),
        );
        cross[t + 1] = &cov[t + 1] * j_t.transpose();
    }

    Ok(SmootherPass {
        mean,
        cov,
        cross_cov: cross,
        loglik: pass.loglik,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::LatentParams;
    use crate::types::{FitnessState, MeanFieldParams, VarParams};
    use approx::assert_abs_diff_eq;

    fn simple_ssp(n: usize, r: f64) -> StateSpaceParams {
        let mf = MeanFieldParams::new(0.5, 0.05, -0.1, 0.09, n).unwrap();
        StateSpaceParams::new(
            DVector::zeros(n),
            DVector::from_element(n, r),
            LatentParams::MeanField(mf),
        )
        .unwrap()
    }

    fn obs_series(n: usize, t_len: usize, seed: u64) -> FitnessSeries {
        let mf = MeanFieldParams::new(0.5, 0.05, -0.1, 0.09, n).unwrap();
        let vp = mf.to_var_params().unwrap();
        let theta0 = FitnessState::undirected(DVector::zeros(n)).unwrap();
        crate::var_dynamics::simulate_var(&vp, &theta0, t_len, seed).unwrap()
    }

    #[test]
    fn near_noiseless_observation_recovers_observations() {
        let n = 4;
        let ssp = simple_ssp(n, 1e-12);
        let obs = obs_series(n, 30, 3);
        let (filtered, _) = kalman_filter(&ssp, &obs).unwrap();
        for (f, o) in filtered.iter().zip(&obs.states) {
            assert!((&f.mean - o.theta()).amax() < 1e-4);
        }
    }

    #[test]
    fn degenerate_latent_pins_filtered_mean_at_intercept() {
        // Sigma -> 0, B = 0: latent is the constant mu; with large R the
        // filtered mean stays at mu regardless of observations.
        let n = 3;
        let vp = VarParams::new(
            DVector::from_element(n, 0.7),
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n) * 1e-14,
        )
        .unwrap();
        let ssp = StateSpaceParams::new(
            DVector::zeros(n),
            DVector::from_element(n, 1e6),
            LatentParams::Full(vp),
        )
        .unwrap();
        let obs = obs_series(n, 20, 9);
        let (filtered, _) = kalman_filter(&ssp, &obs).unwrap();
        for f in &filtered {
            assert!((&f.mean - DVector::from_element(n, 0.7)).amax() < 1e-3);
        }
    }

    /// Brute-force joint-Gaussian conditioning oracle: builds the joint
    /// normal of (theta_{1:T}, Theta_{1:T}) started from the stationary law
    /// and conditions exactly.
    fn joint_gaussian_oracle(
        ssp: &StateSpaceParams,
        obs: &FitnessSeries,
    ) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>, f64) {
        let var = ssp.latent.to_var_params().unwrap();
        let d = ssp.dim();
        let t_len = obs.len();
        let dim = d * t_len;

        // joint law of theta_{1:T}
        let stat_mean = var.stationary_mean().unwrap();
        let stat_cov = var.stationary_cov().unwrap();
        let mut mean = DVector::zeros(dim);
        for t in 0..t_len {
            mean.rows_mut(t * d, d).copy_from(&stat_mean);
        }
        // Cov(theta_s, theta_t) = B^{s-t} P_stat for s >= t
        let mut cov = DMatrix::zeros(dim, dim);
        for t in 0..t_len {
            let mut block = stat_cov.clone();
            cov.view_mut((t * d, t * d), (d, d)).copy_from(&block);
            for s in (t + 1)..t_len {
                block = &var.b * block;
                cov.view_mut((s * d, t * d), (d, d)).copy_from(&block);
                cov.view_mut((t * d, s * d), (d, d))
                    .copy_from(&block.transpose());
            }
        }
        // observations: Theta = gamma + theta + v
        let mut obs_mean = mean.clone();
        for t in 0..t_len {
            for i in 0..d {
                obs_mean[t * d + i] += ssp.gamma[i];
            }
        }
        let mut r_full = DMatrix::zeros(dim, dim);
        for t in 0..t_len {
            for i in 0..d {
                r_full[(t * d + i, t * d + i)] = ssp.obs_noise_diag[i];
            }
        }
        let obs_cov = &cov + &r_full;
        let cross = cov.clone(); // Cov(theta_block, Theta_block)

        let mut y = DVector::zeros(dim);
        for (t, s) in obs.states.iter().enumerate() {
            y.rows_mut(t * d, d).copy_from(s.theta());
        }

        // filtered moments at each time: condition theta_t on Theta_{1:t}
        let mut means_out = Vec::new();
        let mut covs_out = Vec::new();
        for t in 0..t_len {
            let k = (t + 1) * d;
            let s_tt = obs_cov.view((0, 0), (k, k)).into_owned();
            let c_xt = cross.view((t * d, 0), (d, k)).into_owned();
            let lu = s_tt.lu();
            let innov = y.rows(0, k) - obs_mean.rows(0, k);
            let w = lu.solve(&innov).unwrap();
            let m = mean.rows(t * d, d) + &c_xt * w;
            let sol = lu.solve(&c_xt.transpose()).unwrap();
            let c = cov.view((t * d, t * d), (d, d)) - &c_xt * sol;
            means_out.push(m);
            covs_out.push(c);
        }

        // log-likelihood of the full observation vector
        let chol = obs_cov.clone().cholesky().unwrap();
        let innov = &y - &obs_mean;
        let solved = chol.solve(&innov);
        let log_det = 2.0 * chol.l().diagonal().map(|x| x.ln()).sum();
        let ll = -0.5
            * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + innov.dot(&solved));
        (means_out, covs_out, ll)
    }

    #[test]
    fn filter_matches_joint_gaussian_oracle() {
        for (n, t_len, seed) in [(2usize, 3usize, 5u64), (3, 4, 8)] {
            let mf = MeanFieldParams::new(0.5, 0.05, -0.1, 0.09, n).unwrap();
            let ssp = StateSpaceParams::new(
                DVector::from_element(n, 0.2),
                DVector::from_element(n, 0.3),
                LatentParams::MeanField(mf),
            )
            .unwrap();
            let obs = obs_series(n, t_len, seed);
            let (filtered, ll) = kalman_filter(&ssp, &obs).unwrap();
            let (om, oc, oll) = joint_gaussian_oracle(&ssp, &obs);
            assert_abs_diff_eq!(ll, oll, epsilon = 1e-10);
            for t in 0..t_len {
                assert!(
                    (&filtered[t].mean - &om[t]).amax() < 1e-10,
                    "mean mismatch at t={t}"
                );
                assert!(
                    (&filtered[t].cov - &oc[t]).amax() < 1e-10,
                    "cov mismatch at t={t}"
                );
            }
        }
    }

    #[test]
    fn smoother_last_point_equals_filter() {
        let n = 3;
        let ssp = simple_ssp(n, 0.2);
        let obs = obs_series(n, 12, 21);
        let pass = filter_pass(&ssp, &obs).unwrap();
        let smooth = smoother_pass(&ssp, &obs).unwrap();
        let last = obs.len() - 1;
        assert!((&smooth.mean[last] - &pass.filtered_mean[last]).amax() < 1e-12);
        assert!((&smooth.cov[last] - &pass.filtered_cov[last]).amax() < 1e-12);
    }

    #[test]
    fn smoother_matches_full_conditioning_oracle() {
        // smoothed mean at every t conditions on ALL observations
        let n = 2;
        let t_len = 4;
        let ssp = StateSpaceParams::new(
            DVector::from_element(n, -0.1),
            DVector::from_element(n, 0.4),
            LatentParams::MeanField(MeanFieldParams::new(0.5, 0.05, -0.1, 0.09, n).unwrap()),
        )
        .unwrap();
        let obs = obs_series(n, t_len, 13);
        let smooth = smoother_pass(&ssp, &obs).unwrap();

        // oracle: condition each theta_t on the full observation block
        let var = ssp.latent.to_var_params().unwrap();
        let d = n;
        let dim = d * t_len;
        let stat_mean = var.stationary_mean().unwrap();
        let stat_cov = var.stationary_cov().unwrap();
        let mut mean = DVector::zeros(dim);
        for t in 0..t_len {
            mean.rows_mut(t * d, d).copy_from(&stat_mean);
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for t in 0..t_len {
            let mut block = stat_cov.clone();
            cov.view_mut((t * d, t * d), (d, d)).copy_from(&block);
            for s in (t + 1)..t_len {
                block = &var.b * block;
                cov.view_mut((s * d, t * d), (d, d)).copy_from(&block);
                cov.view_mut((t * d, s * d), (d, d))
                    .copy_from(&block.transpose());
            }
        }
        let mut r_full = DMatrix::zeros(dim, dim);
        for t in 0..t_len {
            for i in 0..d {
                r_full[(t * d + i, t * d + i)] = ssp.obs_noise_diag[i];
            }
        }
        let mut y = DVector::zeros(dim);
        let mut obs_mean = mean.clone();
        for (t, s) in obs.states.iter().enumerate() {
            y.rows_mut(t * d, d).copy_from(s.theta());
            for i in 0..d {
                obs_mean[t * d + i] += ssp.gamma[i];
            }
        }
        let obs_cov = &cov + &r_full;
        let lu = obs_cov.lu();
        let w = lu.solve(&(&y - &obs_mean)).unwrap();
        for t in 0..t_len {
            let c_xt = cov.view((t * d, 0), (d, dim)).into_owned();
            let m = mean.rows(t * d, d) + &c_xt * &w;
            assert!(
                (&smooth.mean[t] - &m).amax() < 1e-10,
                "smoothed mean mismatch at t={t}"
            );
        }
    }
}
