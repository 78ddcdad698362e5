//! Latent VAR(1) simulation, conditional moments after a shock, and the
//! closed-form matrix algebra of the homogeneous mean-field model.
//!
//! The mean-field transition matrix `B = (a-b) I + b 1` has eigenvalues
//! `a - b` (multiplicity n-1) and `lambda_1 = a + b(n-1)`, which gives the
//! closed form
//!
//! ```text
//! B^t = (a-b)^t I + (lambda_1^t - (a-b)^t)/n * 1
//! ```
//!
//! and geometric-sum expressions for the conditional mean and covariance a
//! horizon `t` after conditioning. All of those are implemented here next to
//! the general dense recursions they must agree with.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::seeds;
use crate::types::{FitnessSeries, FitnessState, GaussianMoments, MeanFieldParams, VarParams};

/// Geometric sum `1 + x + ... + x^{t-1}`, with the `t` limit at `x = 1`.
pub(crate) fn geometric_sum(x: f64, t: usize) -> f64 {
    if (1.0 - x).abs() < 1e-12 {
        t as f64
    } else {
        (1.0 - x.powi(t as i32)) / (1.0 - x)
    }
}

/// Simulates `theta_t = mu + B theta_{t-1} + w_t` for `t = 1..=T`.
///
/// Returns the `T` post-initial states; deterministic given the seed. The
/// noise uses the symmetric PSD square root of `Sigma`, so semidefinite
/// covariances (including zero) are accepted.
pub fn simulate_var(
    params: &VarParams,
    theta0: &FitnessState,
    t_len: usize,
    seed: u64,
) -> Result<FitnessSeries> {
    if params.dim() != theta0.dim() {
        return Err(Error::Dimension {
            what: "simulate_var initial state",
            expected: params.dim(),
            found: theta0.dim(),
        });
    }
    if t_len == 0 {
        return Err(Error::EmptyResult("simulate_var with T = 0".into()));
    }
    let root = linalg::sym_psd_sqrt(&params.sigma)?;
    let mut rng = seeds::rng_from_seed(seed);
    let d = params.dim();
    let directed = theta0.is_directed();
    let mut cur = theta0.theta().clone();
    let mut states = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        cur = &params.mu + &params.b * cur + &root * z;
        states.push(FitnessState::from_vector(directed, cur.clone())?);
    }
    FitnessSeries::new(states)
}

/// Draws an initial state from the stationary law of the VAR.
pub fn draw_stationary(
    params: &VarParams,
    directed: bool,
    rng: &mut impl Rng,
) -> Result<FitnessState> {
    let mean = params.stationary_mean()?;
    let cov = params.stationary_cov()?;
    let root = linalg::sym_psd_sqrt(&cov)?;
    let d = params.dim();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    FitnessState::from_vector(directed, mean + root * z)
}

/// Conditional mean and covariance of `theta_{tau+h}` given `theta_tau`:
/// mean `(sum_{k<h} B^k) mu + B^h theta_tau`, covariance
/// `sum_{k<h} B^k Sigma (B^k)'`. Horizon 0 returns the point mass.
pub fn conditional_moments(
    params: &VarParams,
    theta_tau: &FitnessState,
    horizon: usize,
) -> Result<GaussianMoments> {
    if params.dim() != theta_tau.dim() {
        return Err(Error::Dimension {
            what: "conditional_moments state",
            expected: params.dim(),
            found: theta_tau.dim(),
        });
    }
    let d = params.dim();
    let mut mean = theta_tau.theta().clone();
    let mut cov = DMatrix::zeros(d, d);
    for _ in 0..horizon {
        mean = &params.mu + &params.b * mean;
        cov = &params.b * cov * params.b.transpose() + &params.sigma;
    }
    GaussianMoments::new(mean, linalg::symmetrize(&cov))
}

/// Closed-form `B^t` of the dense mean-field matrix.
pub fn meanfield_matrix_power(mf: &MeanFieldParams, t: usize) -> DMatrix<f64> {
    let n = mf.n;
    let x = (mf.a - mf.b).powi(t as i32);
    let lam = mf.lambda1().powi(t as i32);
    let off = (lam - x) / n as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { x + off } else { off })
}

/// Homogeneous conditional moments: per-node mean, per-node variance and
/// off-diagonal correlation of `theta_t` given `theta_0 = theta0 * 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldMoments {
    pub mean: f64,
    pub variance: f64,
    pub correlation: f64,
}

pub fn meanfield_conditional_moments(
    mf: &MeanFieldParams,
    theta0: f64,
    t: usize,
) -> Result<MeanFieldMoments> {
    if !mf.is_stationary() {
        return Err(Error::NonStationary {
            spectral_radius: mf.lambda1_averaged().abs(),
        });
    }
    if t == 0 {
        return Ok(MeanFieldMoments {
            mean: theta0,
            variance: 0.0,
            correlation: 0.0,
        });
    }
    let n = mf.n as f64;
    let x = mf.a - mf.b;
    let lam = mf.lambda1();
    // (sum_{k<t} B^k) applied to a homogeneous vector acts through the
    // lambda_1 eigenvalue alone: the all-ones block contributes n * (1/n).
    let gl = geometric_sum(lam, t);
    let mean = mf.mu * gl + theta0 * lam.powi(t as i32);
    let gx2 = geometric_sum(x * x, t);
    let gl2 = geometric_sum(lam * lam, t);
    let variance = mf.sigma2 * (gx2 + (gl2 - gx2) / n);
    let off = mf.sigma2 * (gl2 - gx2) / n;
    let correlation = if variance > 0.0 { off / variance } else { 0.0 };
    Ok(MeanFieldMoments {
        mean,
        variance,
        correlation,
    })
}

/// Conditional means of the shocked node (`mu_1`) and of any other node
/// (`mu_z`) at horizon `t`, when node 1 is shocked by `delta` from the
/// homogeneous state `theta0`. Their difference is `delta (a-b)^t` exactly.
pub fn shocked_means(
    mf: &MeanFieldParams,
    theta0: f64,
    delta: f64,
    t: usize,
) -> Result<(f64, f64)> {
    let base = meanfield_conditional_moments(mf, theta0, t)?.mean;
    let n = mf.n as f64;
    let x = (mf.a - mf.b).powi(t as i32);
    let lam = mf.lambda1().powi(t as i32);
    let mu_z = base + delta * (lam - x) / n;
    let mu_1 = mu_z + delta * x;
    Ok((mu_1, mu_z))
}

/// Dense parametrization of the sparsity-averaged model: off-diagonal
/// elements become `b p`.
pub fn sparse_expected_meanfield(mf: &MeanFieldParams) -> MeanFieldParams {
    MeanFieldParams {
        a: mf.a,
        b: mf.b * mf.p,
        mu: mf.mu,
        sigma2: mf.sigma2,
        n: mf.n,
        p: 1.0,
    }
}

/// One quenched realization of the sparse mean-field transition matrix:
/// off-diagonal entries equal `b` with probability `p`, else 0. The mask is
/// fixed for the whole trajectory.
pub fn sample_sparse_transition(mf: &MeanFieldParams, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = mf.n;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            mf.a
        } else if rng.gen::<f64>() < mf.p {
            mf.b
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn baseline() -> MeanFieldParams {
        MeanFieldParams::new(0.3, 0.01, -0.3, 0.1, 50).unwrap()
    }

    fn dense_power(b: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
        let mut acc = DMatrix::identity(b.nrows(), b.ncols());
        for _ in 0..t {
            acc = &acc * b;
        }
        acc
    }

    #[test]
    fn simulate_noiseless_memoryless() {
        let d = 3;
        let params = VarParams::new(
            DVector::from_vec(vec![0.5, -0.2, 1.0]),
            DMatrix::zeros(d, d),
            DMatrix::zeros(d, d),
        )
        .unwrap();
        let theta0 = FitnessState::undirected(DVector::zeros(d)).unwrap();
        let series = simulate_var(&params, &theta0, 10, 7).unwrap();
        for s in &series.states {
            assert!((s.theta() - &params.mu).amax() < 1e-15);
        }
    }

    #[test]
    fn simulate_fixed_point_at_stationary() {
        let mf = baseline();
        let mut vp = mf.to_var_params().unwrap();
        vp.sigma = DMatrix::zeros(mf.n, mf.n);
        let ths = mf.theta_stationary().unwrap();
        let theta0 = FitnessState::undirected(DVector::from_element(mf.n, ths)).unwrap();
        let series = simulate_var(&vp, &theta0, 20, 1).unwrap();
        for s in &series.states {
            assert!((s.theta() - DVector::from_element(mf.n, ths)).amax() < 1e-12);
        }
    }

    #[test]
    fn simulate_deterministic_given_seed() {
        let mf = baseline();
        let vp = mf.to_var_params().unwrap();
        let theta0 = FitnessState::undirected(DVector::zeros(mf.n)).unwrap();
        let a = simulate_var(&vp, &theta0, 50, 99).unwrap();
        let b = simulate_var(&vp, &theta0, 50, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_moments_horizon_zero_and_one() {
        let mf = baseline();
        let vp = mf.to_var_params().unwrap();
        let theta0 = FitnessState::undirected(DVector::from_element(mf.n, 0.4)).unwrap();
        let m0 = conditional_moments(&vp, &theta0, 0).unwrap();
        assert_eq!(m0.mean, *theta0.theta());
        assert_eq!(m0.cov.amax(), 0.0);
        let m1 = conditional_moments(&vp, &theta0, 1).unwrap();
        let want = &vp.mu + &vp.b * theta0.theta();
        assert!((m1.mean - want).amax() < 1e-14);
        assert!((&m1.cov - &vp.sigma).amax() < 1e-14);
    }

    #[test]
    fn conditional_moments_long_horizon_reaches_stationary() {
        let mf = baseline();
        let vp = mf.to_var_params().unwrap();
        let theta0 = FitnessState::undirected(DVector::from_element(mf.n, 2.0)).unwrap();
        let m = conditional_moments(&vp, &theta0, 500).unwrap();
        let stat_mean = vp.stationary_mean().unwrap();
        assert!((m.mean - stat_mean).amax() < 1e-6);
        // 2000-term series oracle for the stationary covariance
        let mut series_cov = DMatrix::zeros(mf.n, mf.n);
        let mut bk = DMatrix::identity(mf.n, mf.n);
        for _ in 0..2000 {
            series_cov += &bk * &vp.sigma * bk.transpose();
            bk = &bk * &vp.b;
        }
        assert!((m.cov - series_cov).amax() < 1e-6);
    }

    #[test]
    fn conditional_moments_fixed_point_of_mean() {
        let mf = baseline();
        let vp = mf.to_var_params().unwrap();
        let stat = vp.stationary_mean().unwrap();
        let theta = FitnessState::undirected(stat.clone()).unwrap();
        for h in [1, 3, 10, 50] {
            let m = conditional_moments(&vp, &theta, h).unwrap();
            assert!((&m.mean - &stat).amax() < 1e-10, "h={h}");
        }
    }

    #[test]
    fn matrix_power_trivial_cases() {
        let mf = baseline();
        let p0 = meanfield_matrix_power(&mf, 0);
        assert!((p0 - DMatrix::<f64>::identity(mf.n, mf.n)).amax() < 1e-15);
        let p1 = meanfield_matrix_power(&mf, 1);
        let b = mf.to_var_params().unwrap().b;
        assert!((p1 - b).amax() < 1e-15);
    }

    #[test]
    fn matrix_power_matches_dense_oracle() {
        let mf = baseline();
        let b = mf.to_var_params().unwrap().b;
        for t in [2usize, 5, 20] {
            let closed = meanfield_matrix_power(&mf, t);
            let dense = dense_power(&b, t);
            assert!((closed - dense).amax() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn matrix_power_semigroup() {
        let mf = baseline();
        for (s, t) in [(1usize, 2usize), (3, 4), (7, 8)] {
            let lhs = meanfield_matrix_power(&mf, s + t);
            let rhs = meanfield_matrix_power(&mf, s) * meanfield_matrix_power(&mf, t);
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn matrix_power_row_sums_are_lambda_powers() {
        let mf = baseline();
        for t in [1usize, 3, 9] {
            let p = meanfield_matrix_power(&mf, t);
            let lam_t = mf.lambda1().powi(t as i32);
            for i in 0..mf.n {
                let row_sum: f64 = p.row(i).iter().sum();
                assert_abs_diff_eq!(row_sum, lam_t, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn meanfield_moments_one_step() {
        let mf = baseline();
        let th0 = 0.7;
        let m = meanfield_conditional_moments(&mf, th0, 1).unwrap();
        assert_abs_diff_eq!(m.mean, mf.mu + mf.lambda1() * th0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.variance, mf.sigma2, epsilon = 1e-12);
        assert_abs_diff_eq!(m.correlation, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn meanfield_moments_match_general_formula() {
        let mf = baseline();
        let vp = mf.to_var_params().unwrap();
        let th0 = -0.4;
        let state = FitnessState::undirected(DVector::from_element(mf.n, th0)).unwrap();
        for t in [2usize, 7, 20] {
            let closed = meanfield_conditional_moments(&mf, th0, t).unwrap();
            let general = conditional_moments(&vp, &state, t).unwrap();
            assert_abs_diff_eq!(closed.mean, general.mean[0], epsilon = 1e-10);
            assert_abs_diff_eq!(closed.variance, general.cov[(0, 0)], epsilon = 1e-10);
            assert_abs_diff_eq!(
                closed.correlation,
                general.cov[(0, 1)] / general.cov[(0, 0)],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn meanfield_moments_long_horizon_lyapunov_oracle() {
        let mf = baseline();
        let m = meanfield_conditional_moments(&mf, 0.0, 4000).unwrap();
        let vp = mf.to_var_params().unwrap();
        let mut series_cov = DMatrix::zeros(mf.n, mf.n);
        let mut bk = DMatrix::identity(mf.n, mf.n);
        for _ in 0..2000 {
            series_cov += &bk * &vp.sigma * bk.transpose();
            bk = &bk * &vp.b;
        }
        assert_abs_diff_eq!(m.variance, series_cov[(0, 0)], epsilon = 1e-8);
        assert_abs_diff_eq!(
            m.correlation,
            series_cov[(0, 1)] / series_cov[(0, 0)],
            epsilon = 1e-8
        );
    }

    #[test]
    fn shocked_means_no_shock_collapses() {
        let mf = baseline();
        let (m1, mz) = shocked_means(&mf, 0.3, 0.0, 5).unwrap();
        let base = meanfield_conditional_moments(&mf, 0.3, 5).unwrap().mean;
        assert_abs_diff_eq!(m1, base, epsilon = 1e-14);
        assert_abs_diff_eq!(mz, base, epsilon = 1e-14);
    }

    #[test]
    fn shocked_means_difference_is_delta_ab_power() {
        let mf = baseline();
        let delta = -10.0;
        for t in 1..=20 {
            let (m1, mz) = shocked_means(&mf, -1.0, delta, t).unwrap();
            assert_abs_diff_eq!(m1 - mz, delta * (mf.a - mf.b).powi(t as i32), epsilon = 1e-12);
        }
        let (m1, mz) = shocked_means(&mf, 0.0, -10.0, 1).unwrap();
        assert_abs_diff_eq!(m1 - mz, -10.0 * 0.29, epsilon = 1e-12);
    }

    #[test]
    fn shocked_means_match_matrix_oracle() {
        let mf = baseline();
        let vp = mf.to_var_params().unwrap();
        let (th0, delta) = (0.25, -10.0);
        let base_state = FitnessState::undirected(DVector::from_element(mf.n, th0)).unwrap();
        for t in 1..=20 {
            let (m1, mz) = shocked_means(&mf, th0, delta, t).unwrap();
            let mut shock = DVector::zeros(mf.n);
            shock[0] = delta;
            let mean_t = conditional_moments(&vp, &base_state, t).unwrap().mean;
            let shift = dense_power(&vp.b, t) * shock;
            assert_abs_diff_eq!(m1, mean_t[0] + shift[0], epsilon = 1e-10);
            assert_abs_diff_eq!(mz, mean_t[1] + shift[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn sparse_expected_reductions() {
        let mf = MeanFieldParams::with_sparsity(0.3, 0.01, 0.1, 0.1, 50, 1.0).unwrap();
        assert_eq!(sparse_expected_meanfield(&mf), mf);

        let diag = MeanFieldParams::with_sparsity(0.3, 0.01, 0.1, 0.1, 50, 0.0).unwrap();
        let d = sparse_expected_meanfield(&diag);
        assert_abs_diff_eq!(d.lambda1(), 0.3, epsilon = 1e-15);

        let half = MeanFieldParams::with_sparsity(0.3, 0.01, 0.1, 0.1, 50, 0.5).unwrap();
        let h = sparse_expected_meanfield(&half);
        assert_abs_diff_eq!(h.b, 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(h.lambda1(), 0.3 + 0.005 * 49.0, epsilon = 1e-12);
    }

    #[test]
    fn quenched_sparse_mask_climbs_to_dense() {
        let mf = MeanFieldParams::with_sparsity(0.3, 0.01, 0.0, 0.1, 20, 1.0).unwrap();
        let mut rng = crate::seeds::rng_from_seed(3);
        let b = sample_sparse_transition(&mf, &mut rng);
        let dense = mf.to_var_params().unwrap().b;
        assert!((b - dense).amax() < 1e-15);
    }
}
