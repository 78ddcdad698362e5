//! Network generation from fitness states and Monte Carlo expectations of
//! network metrics.
//!
//! Arcs are independent Bernoulli draws through the logistic link on fitness
//! sums. For metrics that are linear in the adjacency entries (density, mean
//! degree) the conditional expectation given the fitness state is available
//! in closed form, so the Monte Carlo layer over networks can be
//! Rao-Blackwellized away; that is the default, with the edge-sampled
//! estimator kept available.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian_logistic::sigmoid;
use crate::linalg;
use crate::seeds;
use crate::types::{AdjacencySnapshot, FitnessState, GaussianMoments};

/// Probability of the arc i -> j given the two fitness contributions.
pub fn link_probability(theta_out_i: f64, theta_in_j: f64) -> f64 {
    sigmoid(theta_out_i + theta_in_j)
}

/// Samples one snapshot given a fitness state. Undirected pairs are drawn
/// once (i < j) and mirrored; directed snapshots draw every ordered pair.
pub fn sample_network_with(
    state: &FitnessState,
    timestamp: usize,
    rng: &mut impl Rng,
) -> AdjacencySnapshot {
    let n = state.n();
    let mut snap = AdjacencySnapshot::empty(n, state.is_directed(), timestamp);
    if state.is_directed() {
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen::<f64>() < sigmoid(state.arc_logit(i, j)) {
                    snap.add_arc(i, j).expect("valid arc");
                }
            }
        }
    } else {
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < sigmoid(state.arc_logit(i, j)) {
                    snap.add_arc(i, j).expect("valid arc");
                }
            }
        }
    }
    snap
}

/// Seeded convenience wrapper around [`sample_network_with`].
pub fn sample_network(state: &FitnessState, timestamp: usize, seed: u64) -> AdjacencySnapshot {
    let mut rng = seeds::rng_from_seed(seed);
    sample_network_with(state, timestamp, &mut rng)
}

/// Proportion of existing arcs over the n(n-1) ordered pairs. Undirected
/// edges count in both orientations.
pub fn density(a: &AdjacencySnapshot) -> Result<f64> {
    let n = a.n();
    if n < 2 {
        return Err(Error::domain("density needs at least two nodes"));
    }
    Ok(a.arc_count() as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Node degrees: row/column sums of the adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Degrees {
    Undirected(Vec<usize>),
    Directed {
        d_in: Vec<usize>,
        d_out: Vec<usize>,
    },
}

pub fn degrees(a: &AdjacencySnapshot) -> Degrees {
    let n = a.n();
    if a.directed() {
        let mut d_in = vec![0usize; n];
        let mut d_out = vec![0usize; n];
        for i in 0..n {
            for j in 0..n {
                if a.get(i, j) == 1 {
                    d_out[i] += 1;
                    d_in[j] += 1;
                }
            }
        }
        Degrees::Directed { d_in, d_out }
    } else {
        let mut d = vec![0usize; n];
        for i in 0..n {
            for j in 0..n {
                if a.get(i, j) == 1 {
                    d[i] += 1;
                }
            }
        }
        Degrees::Undirected(d)
    }
}

type MetricFn = Arc<dyn Fn(&AdjacencySnapshot) -> f64 + Send + Sync>;

#[derive(Clone)]
enum MetricKind {
    Density,
    MeanDegree,
    Custom(MetricFn),
}

/// A named scalar function of a snapshot. Density and mean degree ship
/// built-in with exact conditional expectations; anything else plugs in as a
/// custom function evaluated on sampled networks.
#[derive(Clone)]
pub struct Metric {
    name: String,
    kind: MetricKind,
}

impl std::fmt::Debug for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Metric").field("name", &self.name).finish()
    }
}

impl Metric {
    pub fn density() -> Self {
        Metric {
            name: "density".into(),
            kind: MetricKind::Density,
        }
    }

    /// Mean degree: average out-degree for directed snapshots, average
    /// degree for undirected ones.
    pub fn mean_degree() -> Self {
        Metric {
            name: "mean_degree".into(),
            kind: MetricKind::MeanDegree,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(&AdjacencySnapshot) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Metric {
            name: name.into(),
            kind: MetricKind::Custom(Arc::new(f)),
        }
    }

    /// Looks up a built-in metric by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "density" => Ok(Metric::density()),
            "mean_degree" => Ok(Metric::mean_degree()),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn evaluate(&self, a: &AdjacencySnapshot) -> f64 {
        match &self.kind {
            MetricKind::Density => density(a).unwrap_or(f64::NAN),
            MetricKind::MeanDegree => {
                a.arc_count() as f64 / a.n() as f64
            }
            MetricKind::Custom(f) => f(a),
        }
    }

    /// Exact `E[f(A) | theta]` when the metric is linear in the adjacency
    /// entries; `None` for custom metrics.
    pub fn conditional_mean(&self, state: &FitnessState) -> Option<f64> {
        let n = state.n();
        let pair_sum = || -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        s += sigmoid(state.arc_logit(i, j));
                    }
                }
            }
            s
        };
        match &self.kind {
            MetricKind::Density => Some(pair_sum() / (n as f64 * (n as f64 - 1.0))),
            MetricKind::MeanDegree => Some(pair_sum() / n as f64),
            MetricKind::Custom(_) => None,
        }
    }
}

fn sample_state(
    moments: &GaussianMoments,
    root: &nalgebra::DMatrix<f64>,
    directed: bool,
    rng: &mut impl Rng,
) -> FitnessState {
    let d = moments.dim();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let theta = &moments.mean + root * z;
    FitnessState::from_vector(directed, theta).expect("finite gaussian draw")
}

fn metric_given_state(metric: &Metric, state: &FitnessState, edge_rng_seed: u64) -> f64 {
    match metric.conditional_mean(state) {
        Some(v) => v,
        None => {
            let mut rng = seeds::rng_from_seed(edge_rng_seed);
            metric.evaluate(&sample_network_with(state, 0, &mut rng))
        }
    }
}

/// Monte Carlo estimate of `E[f(A)]` when `theta ~ N(moments)`, with the
/// standard error of the mean. Uses the Rao-Blackwellized conditional mean
/// for built-in metrics.
pub fn mc_expected_metric(
    metric: &Metric,
    moments: &GaussianMoments,
    directed: bool,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    mc_expected_metric_impl(metric, moments, directed, n_samples, seed, false)
}

/// Edge-sampled variant: always samples networks, even when the conditional
/// mean is available. Exists for variance comparisons.
pub fn mc_expected_metric_sampled(
    metric: &Metric,
    moments: &GaussianMoments,
    directed: bool,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    mc_expected_metric_impl(metric, moments, directed, n_samples, seed, true)
}

fn mc_expected_metric_impl(
    metric: &Metric,
    moments: &GaussianMoments,
    directed: bool,
    n_samples: usize,
    seed: u64,
    force_sampling: bool,
) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return Err(Error::validation("need at least 2 Monte Carlo samples"));
    }
    if directed && moments.dim() % 2 != 0 {
        return Err(Error::Dimension {
            what: "directed moments dimension",
            expected: moments.dim() + 1,
            found: moments.dim(),
        });
    }
    let root = linalg::sym_psd_sqrt(&moments.cov)?;
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds::stream_rng(seed, 2 * j as u64);
            let state = sample_state(moments, &root, directed, &mut rng);
            if force_sampling {
                let mut edge_rng = seeds::stream_rng(seed, 2 * j as u64 + 1);
                metric.evaluate(&sample_network_with(&state, 0, &mut edge_rng))
            } else {
                metric_given_state(metric, &state, seeds::derive_seed(seed, 2 * j as u64 + 1))
            }
        })
        .collect();
    Ok(mean_and_stderr(&values))
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
