//! Impulse response functions of network metrics to node-level shocks.
//!
//! On the latent vector the response is linear, `B^t * delta`. On a network
//! metric it is the difference of two Gaussian-mixture expectations with the
//! same covariance and means shifted by `B^t * delta`; the homogeneous
//! mean-field density case collapses to three logistic-normal integrals. The
//! general case is estimated by Monte Carlo with common random numbers
//! across the shocked and unshocked branches, which makes a zero shock give
//! exactly zero response.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian_logistic::{logistic_normal_approx2, logistic_normal_exact};
use crate::linalg;
use crate::sampling::{mean_and_stderr, sample_network_with, Metric};
use crate::seeds;
use crate::types::{FitnessState, MeanFieldParams, ShockSpec, VarParams};
use crate::var_dynamics::{meanfield_conditional_moments, meanfield_matrix_power, shocked_means};

/// Latent response `B^t * delta` by repeated multiplication.
pub fn irf_theta(b: &DMatrix<f64>, delta: &DVector<f64>, t: usize) -> Result<DVector<f64>> {
    if b.nrows() != b.ncols() || b.nrows() != delta.len() {
        return Err(Error::Dimension {
            what: "irf_theta shock",
            expected: b.nrows(),
            found: delta.len(),
        });
    }
    let mut v = delta.clone();
    for _ in 0..t {
        v = b * v;
    }
    Ok(v)
}

/// Latent response in the mean-field model via the closed-form matrix power.
pub fn irf_theta_meanfield(
    mf: &MeanFieldParams,
    delta: &DVector<f64>,
    t: usize,
) -> Result<DVector<f64>> {
    if delta.len() != mf.n {
        return Err(Error::Dimension {
            what: "mean-field shock",
            expected: mf.n,
            found: delta.len(),
        });
    }
    Ok(meanfield_matrix_power(mf, t) * delta)
}

/// Closed-form density IRF of the homogeneous mean-field model when node 1
/// is shocked by `delta` from the uniform state `theta0`:
///
/// ```text
/// (2/n) I(mu1 + muz, v) + ((n-2)/n) I(2 muz, v) - I(2 mu_t, v),
/// v = 2 sigma_t^2 (1 + rho_t)
/// ```
///
/// `exact_integral` selects exact quadrature or the second-order
/// approximation. Defined for post-shock horizons `t >= 1`; the
/// instantaneous effect is t = 1.
pub fn irf_density_meanfield(
    mf: &MeanFieldParams,
    theta0: f64,
    delta: f64,
    t: usize,
    exact_integral: bool,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::domain(
            "density IRF is defined for horizons t >= 1".to_string(),
        ));
    }
    let moments = meanfield_conditional_moments(mf, theta0, t)?;
    let (mu1, muz) = shocked_means(mf, theta0, delta, t)?;
    let v = 2.0 * moments.variance * (1.0 + moments.correlation);
    let integral = |m: f64| -> Result<f64> {
        if exact_integral {
            logistic_normal_exact(m, v)
        } else {
            logistic_normal_approx2(m, v)
        }
    };
    let n = mf.n as f64;
    Ok((2.0 / n) * integral(mu1 + muz)?
        + ((n - 2.0) / n) * integral(2.0 * muz)?
        - integral(2.0 * moments.mean)?)
}

/// Time-indexed IRF values for one metric, with Monte Carlo errors and
/// percentile bands across replicate paths when estimated by sampling.
#[derive(Debug, Clone, Serialize)]
pub struct IrfSeries {
    pub metric: String,
    /// Horizons t = 1..=horizon.
    pub horizons: Vec<usize>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub p10: Option<Vec<f64>>,
    pub p90: Option<Vec<f64>>,
}

impl IrfSeries {
    pub fn analytic(metric: impl Into<String>, horizons: Vec<usize>, values: Vec<f64>) -> Self {
        IrfSeries {
            metric: metric.into(),
            horizons,
            values,
            stderr: None,
            p10: None,
            p90: None,
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Monte Carlo IRF of a metric under a general VAR, by the difference of the
/// shocked and unshocked conditional expectations.
///
/// For each horizon the two branches share the conditional covariance and
/// the same Gaussian draws (common random numbers), with the shocked mean
/// displaced by `B^t * delta`; custom metrics additionally share the edge
/// uniforms. Per-sample differences yield the estimate, its standard error,
/// and 10th/90th percentile bands across replicates.
pub fn irf_metric_mc(
    params: &VarParams,
    theta_tau: &FitnessState,
    shock: &ShockSpec,
    metric: &Metric,
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<IrfSeries> {
    let d = params.dim();
    if theta_tau.dim() != d {
        return Err(Error::Dimension {
            what: "irf state",
            expected: d,
            found: theta_tau.dim(),
        });
    }
    if shock.delta.len() != d {
        return Err(Error::Dimension {
            what: "irf shock",
            expected: d,
            found: shock.delta.len(),
        });
    }
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    if n_samples < 2 {
        return Err(Error::validation("need at least 2 Monte Carlo samples"));
    }

    let directed = theta_tau.is_directed();
    let mut mean = theta_tau.theta().clone();
    let mut cov = DMatrix::zeros(d, d);
    let mut shift = shock.delta.clone();

    let mut horizons = Vec::with_capacity(horizon);
    let mut values = Vec::with_capacity(horizon);
    let mut stderrs = Vec::with_capacity(horizon);
    let mut p10s = Vec::with_capacity(horizon);
    let mut p90s = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        mean = &params.mu + &params.b * &mean;
        cov = &params.b * &cov * params.b.transpose() + &params.sigma;
        cov = linalg::symmetrize(&cov);
        shift = &params.b * &shift;
        let root = linalg::sym_psd_sqrt(&cov)?;

        let t_seed = seeds::derive_seed(seed, t as u64);
        let mut diffs: Vec<f64> = (0..n_samples)
            .into_par_iter()
            .map(|j| {
                let mut rng = seeds::stream_rng(t_seed, 2 * j as u64);
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let base = &mean + &root * z;
                let theta_u = FitnessState::from_vector(directed, base.clone())
                    .expect("finite gaussian draw");
                let theta_s = FitnessState::from_vector(directed, base + &shift)
                    .expect("finite gaussian draw");
                match (metric.conditional_mean(&theta_s), metric.conditional_mean(&theta_u)) {
                    (Some(fs), Some(fu)) => fs - fu,
                    _ => {
                        // same edge uniforms on both branches
                        let edge_seed = seeds::derive_seed(t_seed, 2 * j as u64 + 1);
                        let mut rng_s = seeds::rng_from_seed(edge_seed);
                        let mut rng_u = seeds::rng_from_seed(edge_seed);
                        metric.evaluate(&sample_network_with(&theta_s, 0, &mut rng_s))
                            - metric.evaluate(&sample_network_with(&theta_u, 0, &mut rng_u))
                    }
                }
            })
            .collect();

        let (est, se) = mean_and_stderr(&diffs);
        diffs.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
        horizons.push(t);
        values.push(est);
        stderrs.push(se);
        p10s.push(percentile(&diffs, 0.10));
        p90s.push(percentile(&diffs, 0.90));
    }

    Ok(IrfSeries {
        metric: metric.name().to_string(),
        horizons,
        values,
        stderr: Some(stderrs),
        p10: Some(p10s),
        p90: Some(p90s),
    })
}

/// The comparative-statics studies around the dense mean-field baseline
/// (n = 50, a = 0.3, b = 0.01, sigma2 = 0.1, theta0 at equilibrium,
/// delta = -10 on node 1; mu crossed over {-0.3, 0, 0.3}).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Delta,
    LambdaViaA,
    LambdaViaB,
    AbFixedLambda,
    Sigma2,
    Theta0,
    Sigma2Thresholds,
}

impl Study {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "delta" => Ok(Study::Delta),
            "lambda_via_a" => Ok(Study::LambdaViaA),
            "lambda_via_b" => Ok(Study::LambdaViaB),
            "ab_fixed_lambda" => Ok(Study::AbFixedLambda),
            "sigma2" => Ok(Study::Sigma2),
            "theta0" => Ok(Study::Theta0),
            "sigma2_thresholds" => Ok(Study::Sigma2Thresholds),
            other => Err(Error::UnknownStudy(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Study::Delta => "delta",
            Study::LambdaViaA => "lambda_via_a",
            Study::LambdaViaB => "lambda_via_b",
            Study::AbFixedLambda => "ab_fixed_lambda",
            Study::Sigma2 => "sigma2",
            Study::Theta0 => "theta0",
            Study::Sigma2Thresholds => "sigma2_thresholds",
        }
    }

    pub fn all() -> &'static [Study] {
        &[
            Study::Delta,
            Study::LambdaViaA,
            Study::LambdaViaB,
            Study::AbFixedLambda,
            Study::Sigma2,
            Study::Theta0,
            Study::Sigma2Thresholds,
        ]
    }
}

/// Versioned sweep defaults; regenerating figure data is one call.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub study: Study,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub sigma2: f64,
    pub mu_values: Vec<f64>,
    pub delta: f64,
    pub horizon: usize,
    pub exact_integral: bool,
}

impl SweepSpec {
    pub fn baseline(study: Study) -> Self {
        SweepSpec {
            study,
            n: 50,
            a: 0.3,
            b: 0.01,
            sigma2: 0.1,
            mu_values: vec![-0.3, 0.0, 0.3],
            delta: -10.0,
            horizon: 40,
            exact_integral: false,
        }
    }
}

/// One row of the long-format comparative-statics table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub study: &'static str,
    pub mu: f64,
    pub param: &'static str,
    pub value: f64,
    pub theta0: f64,
    pub delta: f64,
    pub t: usize,
    pub irf: Option<f64>,
    pub status: &'static str,
}

/// Thresholds of the variance-regime flip of the t = 1 IRF.
#[derive(Debug, Clone, Serialize)]
pub struct Sigma2Thresholds {
    pub mu_lower: Option<f64>,
    pub mu_upper: Option<f64>,
    pub sigma2_low: f64,
    pub sigma2_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    pub thresholds: Option<Sigma2Thresholds>,
}

const STATUS_OK: &str = "ok";
const STATUS_SKIPPED: &str = "skipped_nonstationary";

fn push_curve(
    rows: &mut Vec<SweepRow>,
    spec: &SweepSpec,
    study: Study,
    mu: f64,
    param: &'static str,
    value: f64,
    mf: Result<MeanFieldParams>,
    theta0: Option<f64>,
    delta: f64,
) -> Result<()> {
    let mf = match mf {
        Ok(mf) if mf.is_stationary() => mf,
        _ => {
            // report the whole non-stationary curve as skipped rows
            for t in 1..=spec.horizon {
                rows.push(SweepRow {
                    study: study.name(),
                    mu,
                    param,
                    value,
                    theta0: f64::NAN,
                    delta,
                    t,
                    irf: None,
                    status: STATUS_SKIPPED,
                });
            }
            return Ok(());
        }
    };
    let th0 = match theta0 {
        Some(v) => v,
        None => mf.theta_stationary()?,
    };
    for t in 1..=spec.horizon {
        let irf = irf_density_meanfield(&mf, th0, delta, t, spec.exact_integral)?;
        rows.push(SweepRow {
            study: study.name(),
            mu,
            param,
            value,
            theta0: th0,
            delta,
            t,
            irf: Some(irf),
            status: STATUS_OK,
        });
    }
    Ok(())
}

/// Runs one comparative-statics study, producing every curve of the
/// corresponding figure as a long-format table.
pub fn comparative_statics(spec: &SweepSpec) -> Result<SweepTable> {
    let mut rows = Vec::new();
    let mut thresholds = None;
    let s = spec.study;
    for &mu in &spec.mu_values {
        let base = |a: f64, b: f64, sigma2: f64| MeanFieldParams::new(a, b, mu, sigma2, spec.n);
        match s {
            Study::Delta => {
                for &delta in &[-20.0, -10.0, 10.0] {
                    push_curve(
                        &mut rows,
                        spec,
                        s,
                        mu,
                        "delta",
                        delta,
                        base(spec.a, spec.b, spec.sigma2),
                        None,
                        delta,
                    )?;
                }
            }
            Study::LambdaViaA => {
                for &a in &[0.2, 0.3, 0.4] {
                    push_curve(
                        &mut rows,
                        spec,
                        s,
                        mu,
                        "a",
                        a,
                        base(a, spec.b, spec.sigma2),
                        None,
                        spec.delta,
                    )?;
                }
            }
            Study::LambdaViaB => {
                for &b in &[7.9592e-3, 0.01, 1.2041e-2] {
                    push_curve(
                        &mut rows,
                        spec,
                        s,
                        mu,
                        "b",
                        b,
                        base(spec.a, b, spec.sigma2),
                        None,
                        spec.delta,
                    )?;
                }
            }
            Study::AbFixedLambda => {
                for &(a, b) in &[(0.05, 1.5102e-2), (0.3, 0.01), (0.75, 8.1633e-4)] {
                    push_curve(
                        &mut rows,
                        spec,
                        s,
                        mu,
                        "a",
                        a,
                        base(a, b, spec.sigma2),
                        None,
                        spec.delta,
                    )?;
                }
            }
            Study::Sigma2 => {
                for &s2 in &[0.01, 0.1, 0.5] {
                    push_curve(
                        &mut rows,
                        spec,
                        s,
                        mu,
                        "sigma2",
                        s2,
                        base(spec.a, spec.b, s2),
                        None,
                        spec.delta,
                    )?;
                }
            }
            Study::Theta0 => {
                for &th0 in &[-0.75, 0.0, 0.75] {
                    push_curve(
                        &mut rows,
                        spec,
                        s,
                        mu,
                        "theta0",
                        th0,
                        base(spec.a, spec.b, spec.sigma2),
                        Some(th0),
                        spec.delta,
                    )?;
                }
            }
            Study::Sigma2Thresholds => {} // handled below on a mu grid
        }
    }

    if s == Study::Sigma2Thresholds {
        let (s2_lo, s2_hi) = (0.01, 0.5);
        let mut mu = -2.5;
        while mu <= 2.5 + 1e-12 {
            for &s2 in &[s2_lo, 0.1, s2_hi] {
                let mf = MeanFieldParams::new(spec.a, spec.b, mu, s2, spec.n)?;
                let th0 = mf.theta_stationary()?;
                let irf = irf_density_meanfield(&mf, th0, spec.delta, 1, spec.exact_integral)?;
                rows.push(SweepRow {
                    study: s.name(),
                    mu,
                    param: "sigma2",
                    value: s2,
                    theta0: th0,
                    delta: spec.delta,
                    t: 1,
                    irf: Some(irf),
                    status: STATUS_OK,
                });
            }
            mu += 0.05;
        }
        thresholds = Some(locate_sigma2_thresholds(spec, s2_lo, s2_hi)?);
    }

    Ok(SweepTable {
        spec: spec.clone(),
        rows,
        thresholds,
    })
}

/// Sign of `IRF(1; sigma2_hi) - IRF(1; sigma2_lo)` as a function of mu.
fn variance_gap(spec: &SweepSpec, mu: f64, s2_lo: f64, s2_hi: f64) -> Result<f64> {
    let irf_at = |s2: f64| -> Result<f64> {
        let mf = MeanFieldParams::new(spec.a, spec.b, mu, s2, spec.n)?;
        let th0 = mf.theta_stationary()?;
        irf_density_meanfield(&mf, th0, spec.delta, 1, spec.exact_integral)
    };
    Ok(irf_at(s2_hi)? - irf_at(s2_lo)?)
}

/// Locates the two sign changes of the variance effect on the immediate
/// IRF: scanning outward from mu = 0, bisect the first flip on each side.
fn locate_sigma2_thresholds(
    spec: &SweepSpec,
    s2_lo: f64,
    s2_hi: f64,
) -> Result<Sigma2Thresholds> {
    let center_sign = variance_gap(spec, 0.0, s2_lo, s2_hi)?.signum();
    let find = |dir: f64| -> Result<Option<f64>> {
        let step = 0.05 * dir;
        let mut prev = 0.0;
        let mut mu = step;
        while mu.abs() <= 3.0 {
            let g = variance_gap(spec, mu, s2_lo, s2_hi)?;
            if g.signum() != center_sign {
                // bisect in [prev, mu]
                let (mut lo, mut hi) = (prev, mu);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if variance_gap(spec, mid, s2_lo, s2_hi)?.signum() == center_sign {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Some(0.5 * (lo + hi)));
            }
            prev = mu;
            mu += step;
        }
        Ok(None)
    };
    Ok(Sigma2Thresholds {
        mu_lower: find(-1.0)?,
        mu_upper: find(1.0)?,
        sigma2_low: s2_lo,
        sigma2_high: s2_hi,
    })
}
