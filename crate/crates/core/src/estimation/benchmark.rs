//! The simulation benchmark comparing N-SSI against KF-SSI.
//!
//! Protocol per replicate: draw latent fitnesses from the mean-field VAR,
//! generate undirected snapshots, run the per-snapshot MLE, then fit the
//! static parameters both ways: directly on the MLE series (N-SSI) and via
//! the state-space likelihood (KF-SSI). Errors are mean absolute relative
//! errors per parameter, plus the mean absolute error of the fitness paths
//! (MLE series for N-SSI, filtered means for KF-SSI). Replicates whose MLE
//! fails on every snapshot are dropped and counted.
//!
//! Default parameters follow the published simulation study with the
//! off-diagonal coefficient spread across the n-1 interactions
//! (`b = 0.07/9`), which keeps the generating model stationary.

use rayon::prelude::*;
use serde::Serialize;

use super::kfssi::kfssi_fit;
use super::mle::mle_series;
use super::nssi::{nssi_fit, FitMode, FittedVar};
use super::LatentParams;
use crate::error::{Error, Result};
use crate::sampling::sample_network_with;
use crate::seeds;
use crate::types::{FitnessSeries, MeanFieldParams, TemporalNetwork};
use crate::var_dynamics::{draw_stationary, simulate_var};

/// Paper-scale reference errors (theta, a, b, mu, sigma2), reported
/// alongside desk-scale runs; matched directionally, never numerically.
pub const PAPER_REFERENCE_NSSI: [f64; 5] = [0.57, 0.605, 0.009, 0.311, 0.375];
pub const PAPER_REFERENCE_KFSSI: [f64; 5] = [0.404, 0.124, 0.023, 0.118, 0.144];

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkConfig {
    pub n: usize,
    pub t_len: usize,
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    /// Noise standard deviation (sigma, not sigma squared).
    pub sigma: f64,
    pub n_sim: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            n: 10,
            t_len: 100,
            a: 0.7,
            b: 0.07 / 9.0,
            mu: -0.07,
            sigma: 0.2,
            n_sim: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MethodErrors {
    pub theta_mae_abs: f64,
    pub theta_mae_rel: f64,
    pub re_a: f64,
    pub re_b: f64,
    pub re_mu: f64,
    pub re_sigma2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub seed: u64,
    pub nssi: MethodErrors,
    pub kfssi: MethodErrors,
    /// Per-replicate errors, in replicate order, for win-rate analyses.
    pub replicates: Vec<(MethodErrors, MethodErrors)>,
    pub dropped: usize,
}

fn relative(est: f64, truth: f64) -> f64 {
    ((est - truth) / truth).abs()
}

fn fitness_errors(estimate: &FitnessSeries, truth: &FitnessSeries) -> (f64, f64) {
    let mut abs = 0.0;
    let mut rel = 0.0;
    let mut count = 0usize;
    for (e, t) in estimate.states.iter().zip(&truth.states) {
        for i in 0..t.dim() {
            let err = (e.theta()[i] - t.theta()[i]).abs();
            abs += err;
            rel += err / t.theta()[i].abs().max(1e-3);
            count += 1;
        }
    }
    (abs / count as f64, rel / count as f64)
}

fn run_replicate(
    config: &BenchmarkConfig,
    mf: &MeanFieldParams,
    seed: u64,
) -> Result<(MethodErrors, MethodErrors)> {
    let vp = mf.to_var_params()?;
    let mut rng = seeds::rng_from_seed(seed);
    let theta0 = draw_stationary(&vp, false, &mut rng)?;
    let truth = simulate_var(&vp, &theta0, config.t_len, seeds::derive_seed(seed, 1))?;

    let snaps: Vec<_> = truth
        .states
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let mut r = seeds::stream_rng(seed, 1000 + t as u64);
            let mut snap = sample_network_with(s, t, &mut r);
            snap.set_timestamp(t);
            snap
        })
        .collect();
    let labels = (0..config.n).map(|i| format!("n{i}")).collect();
    let net = TemporalNetwork::new(snaps, labels)?;

    let (theta_hats, fits) = mle_series(&net)?;
    if fits.iter().all(|f| f.clipped_nodes.len() == config.n) {
        return Err(Error::EmptyResult("MLE failed on every snapshot".into()));
    }

    let sigma2_true = config.sigma * config.sigma;
    let nssi = match nssi_fit(&theta_hats, FitMode::MeanField)? {
        FittedVar::MeanField(p) => p,
        _ => unreachable!(),
    };
    let (n_abs, n_rel) = fitness_errors(&theta_hats, &truth);
    let nssi_errors = MethodErrors {
        theta_mae_abs: n_abs,
        theta_mae_rel: n_rel,
        re_a: relative(nssi.a, config.a),
        re_b: relative(nssi.b, config.b),
        re_mu: relative(nssi.mu, config.mu),
        re_sigma2: relative(nssi.sigma2, sigma2_true),
    };

    let kf = kfssi_fit(&theta_hats, FitMode::MeanField, seeds::derive_seed(seed, 2))?;
    let fitted = match &kf.params.latent {
        LatentParams::MeanField(p) => *p,
        _ => unreachable!(),
    };
    let (k_abs, k_rel) = fitness_errors(&kf.filtered, &truth);
    let kfssi_errors = MethodErrors {
        theta_mae_abs: k_abs,
        theta_mae_rel: k_rel,
        re_a: relative(fitted.a, config.a),
        re_b: relative(fitted.b, config.b),
        re_mu: relative(fitted.mu, config.mu),
        re_sigma2: relative(fitted.sigma2, sigma2_true),
    };

    Ok((nssi_errors, kfssi_errors))
}

fn mean_errors(rows: &[MethodErrors]) -> MethodErrors {
    let n = rows.len() as f64;
    let sum = |f: fn(&MethodErrors) -> f64| rows.iter().map(f).sum::<f64>() / n;
    MethodErrors {
        theta_mae_abs: sum(|r| r.theta_mae_abs),
        theta_mae_rel: sum(|r| r.theta_mae_rel),
        re_a: sum(|r| r.re_a),
        re_b: sum(|r| r.re_b),
        re_mu: sum(|r| r.re_mu),
        re_sigma2: sum(|r| r.re_sigma2),
    }
}

/// Runs the full benchmark protocol; replicates execute in parallel with
/// derived seeds, so the report is deterministic for a given master seed.
pub fn run_benchmark(config: &BenchmarkConfig, seed: u64) -> Result<BenchmarkReport> {
    let mf = MeanFieldParams::new(
        config.a,
        config.b,
        config.mu,
        config.sigma * config.sigma,
        config.n,
    )?;
    if !mf.is_stationary() {
        return Err(Error::NonStationary {
            spectral_radius: mf.lambda1().abs(),
        });
    }
    if config.n_sim == 0 {
        return Err(Error::validation("benchmark needs at least one replicate"));
    }

    let results: Vec<Result<(MethodErrors, MethodErrors)>> = (0..config.n_sim)
        .into_par_iter()
        .map(|sim| run_replicate(config, &mf, seeds::derive_seed(seed, sim as u64)))
        .collect();

    let mut replicates = Vec::new();
    let mut dropped = 0usize;
    for r in results {
        match r {
            Ok(pair) => replicates.push(pair),
            Err(_) => dropped += 1,
        }
    }
    if replicates.is_empty() {
        return Err(Error::EmptyResult("every benchmark replicate failed".into()));
    }

    let nssi = mean_errors(&replicates.iter().map(|r| r.0).collect::<Vec<_>>());
    let kfssi = mean_errors(&replicates.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(BenchmarkReport {
        config: config.clone(),
        seed,
        nssi,
        kfssi,
        replicates,
        dropped,
    })
}
