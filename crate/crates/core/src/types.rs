//! Domain types: snapshots, temporal networks, fitness states, and the
//! parametrizations of the latent dynamics.
//!
//! Directed-mode latent ordering is fixed globally: coordinates `0..n` hold
//! the in-fitnesses, `n..2n` the out-fitnesses. Every module relies on this
//! convention when flattening a directed state into a vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// One observed unweighted graph, directed or undirected, no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySnapshot {
    n: usize,
    directed: bool,
    timestamp: usize,
    /// Row-major n*n entries in {0,1}; row i column j is the arc i -> j.
    entries: Vec<u8>,
}

impl AdjacencySnapshot {
    /// Empty snapshot on `n` nodes.
    pub fn empty(n: usize, directed: bool, timestamp: usize) -> Self {
        AdjacencySnapshot {
            n,
            directed,
            timestamp,
            entries: vec![0; n * n],
        }
    }

    /// Builds from a row-major entry slice, enforcing all invariants.
    pub fn from_entries(
        n: usize,
        directed: bool,
        timestamp: usize,
        entries: Vec<u8>,
    ) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Dimension {
                what: "adjacency entries",
                expected: n * n,
                found: entries.len(),
            });
        }
        let snap = AdjacencySnapshot {
            n,
            directed,
            timestamp,
            entries,
        };
        snap.validate()?;
        Ok(snap)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.entries[i * self.n + i] != 0 {
                return Err(Error::validation(format!("self-loop at node {i}")));
            }
        }
        if self.entries.iter().any(|&e| e > 1) {
            return Err(Error::validation("adjacency entries must be 0 or 1"));
        }
        if !self.directed {
            for i in 0..self.n {
                for j in 0..i {
                    if self.entries[i * self.n + j] != self.entries[j * self.n + i] {
                        return Err(Error::validation(format!(
                            "undirected snapshot not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn timestamp(&self) -> usize {
        self.timestamp
    }

    pub fn set_timestamp(&mut self, t: usize) {
        self.timestamp = t;
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    /// Adds the arc i -> j (mirrored when undirected). Self-loops rejected.
    pub fn add_arc(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::validation("self-loops are not allowed"));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::Dimension {
                what: "arc endpoint",
                expected: self.n,
                found: i.max(j),
            });
        }
        self.entries[i * self.n + j] = 1;
        if !self.directed {
            self.entries[j * self.n + i] = 1;
        }
        Ok(())
    }

    /// Arcs as ordered pairs; undirected snapshots list each edge once (i < j).
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.entries[i * self.n + j] == 1 && (self.directed || i < j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn arc_count(&self) -> usize {
        self.entries.iter().map(|&e| e as usize).sum()
    }

    /// Induced subgraph on `keep` (indices into the current node set), in order.
    pub fn induced(&self, keep: &[usize], timestamp: usize) -> Result<Self> {
        let m = keep.len();
        let mut entries = vec![0u8; m * m];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                entries[a * m + b] = self.get(i, j);
            }
        }
        AdjacencySnapshot::from_entries(m, self.directed, timestamp, entries)
    }
}

/// Ordered snapshots sharing node count and directedness.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalNetwork {
    pub snapshots: Vec<AdjacencySnapshot>,
    pub node_labels: Vec<String>,
}

impl TemporalNetwork {
    pub fn new(snapshots: Vec<AdjacencySnapshot>, node_labels: Vec<String>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::EmptyResult("temporal network with no snapshots".into()));
        }
        let n = snapshots[0].n();
        let directed = snapshots[0].directed();
        if node_labels.len() != n {
            return Err(Error::Dimension {
                what: "node labels",
                expected: n,
                found: node_labels.len(),
            });
        }
        for w in snapshots.windows(2) {
            if w[1].timestamp() <= w[0].timestamp() {
                return Err(Error::validation("timestamps must be strictly increasing"));
            }
        }
        for s in &snapshots {
            if s.n() != n || s.directed() != directed {
                return Err(Error::validation(
                    "snapshots must share node count and directedness",
                ));
            }
            s.validate()?;
        }
        Ok(TemporalNetwork {
            snapshots,
            node_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.snapshots[0].n()
    }

    pub fn directed(&self) -> bool {
        self.snapshots[0].directed()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Latent fitness vector at one time.
///
/// Directed states flatten as `[theta_in; theta_out]` (global convention).
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessState {
    directed: bool,
    theta: DVector<f64>,
}

impl FitnessState {
    pub fn undirected(theta: DVector<f64>) -> Result<Self> {
        Self::check_finite(&theta)?;
        Ok(FitnessState {
            directed: false,
            theta,
        })
    }

    pub fn directed(theta_in: DVector<f64>, theta_out: DVector<f64>) -> Result<Self> {
        if theta_in.len() != theta_out.len() {
            return Err(Error::Dimension {
                what: "directed fitness halves",
                expected: theta_in.len(),
                found: theta_out.len(),
            });
        }
        let mut theta = DVector::zeros(2 * theta_in.len());
        theta.rows_mut(0, theta_in.len()).copy_from(&theta_in);
        theta
            .rows_mut(theta_in.len(), theta_out.len())
            .copy_from(&theta_out);
        Self::check_finite(&theta)?;
        Ok(FitnessState {
            directed: true,
            theta,
        })
    }

    /// Rebuilds from a flat vector using the `[in; out]` convention.
    pub fn from_vector(directed: bool, theta: DVector<f64>) -> Result<Self> {
        if directed && theta.len() % 2 != 0 {
            return Err(Error::validation(
                "directed fitness vector must have even length",
            ));
        }
        Self::check_finite(&theta)?;
        Ok(FitnessState { directed, theta })
    }

    fn check_finite(theta: &DVector<f64>) -> Result<()> {
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("fitness entries must be finite"));
        }
        Ok(())
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        if self.directed {
            self.theta.len() / 2
        } else {
            self.theta.len()
        }
    }

    /// Latent dimension (n undirected, 2n directed).
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn theta_in(&self, i: usize) -> f64 {
        debug_assert!(self.directed);
        self.theta[i]
    }

    pub fn theta_out(&self, i: usize) -> f64 {
        debug_assert!(self.directed);
        self.theta[self.n() + i]
    }

    /// Log-odds of the arc i -> j: `theta_out_i + theta_in_j` directed,
    /// `theta_i + theta_j` undirected.
    pub fn arc_logit(&self, i: usize, j: usize) -> f64 {
        if self.directed {
            self.theta_out(i) + self.theta_in(j)
        } else {
            self.theta[i] + self.theta[j]
        }
    }
}

/// Time-ordered fitness states of uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessSeries {
    pub states: Vec<FitnessState>,
}

impl FitnessSeries {
    pub fn new(states: Vec<FitnessState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyResult("empty fitness series".into()));
        }
        let dim = states[0].dim();
        let dir = states[0].is_directed();
        if states
            .iter()
            .any(|s| s.dim() != dim || s.is_directed() != dir)
        {
            return Err(Error::validation(
                "fitness series must have uniform dimension and directedness",
            ));
        }
        Ok(FitnessSeries { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn is_directed(&self) -> bool {
        self.states[0].is_directed()
    }

    /// T x d matrix of states by rows.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let t = self.len();
        let d = self.dim();
        DMatrix::from_fn(t, d, |r, c| self.states[r].theta()[c])
    }
}

/// Intercept, transition matrix and noise covariance of the latent VAR(1).
#[derive(Debug, Clone, PartialEq)]
pub struct VarParams {
    pub mu: DVector<f64>,
    pub b: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl VarParams {
    pub fn new(mu: DVector<f64>, b: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if b.nrows() != d || b.ncols() != d {
            return Err(Error::Dimension {
                what: "transition matrix",
                expected: d,
                found: b.nrows(),
            });
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Dimension {
                what: "noise covariance",
                expected: d,
                found: sigma.nrows(),
            });
        }
        if !linalg::is_symmetric(&sigma, 1e-10) {
            return Err(Error::validation("noise covariance must be symmetric"));
        }
        let min_ev = linalg::min_symmetric_eigenvalue(&sigma);
        if min_ev < linalg::PSD_CLIP {
            return Err(Error::NotPsd {
                min_eigenvalue: min_ev,
            });
        }
        Ok(VarParams { mu, b, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(&self.b)
    }

    pub fn is_stationary(&self) -> bool {
        self.spectral_radius().map(|r| r < 1.0).unwrap_or(false)
    }

    /// `(I - B)^{-1} mu`, the equilibrium fitness vector.
    pub fn stationary_mean(&self) -> Result<DVector<f64>> {
        linalg::var_stationary_mean(&self.b, &self.mu)
    }

    /// Solution of `P = B P B' + Sigma`.
    pub fn stationary_cov(&self) -> Result<DMatrix<f64>> {
        linalg::lyapunov_stationary(&self.b, &self.sigma)
    }
}

/// Homogeneous parametrization: diagonal a, off-diagonal b, scalar intercept
/// and isotropic noise. Undirected by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub n: usize,
    /// Off-diagonal sparsity probability; 1 means dense.
    pub p: f64,
}

impl MeanFieldParams {
    pub fn new(a: f64, b: f64, mu: f64, sigma2: f64, n: usize) -> Result<Self> {
        Self::with_sparsity(a, b, mu, sigma2, n, 1.0)
    }

    pub fn with_sparsity(a: f64, b: f64, mu: f64, sigma2: f64, n: usize, p: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("mean-field model needs n >= 2"));
        }
        if !(a.is_finite() && b.is_finite() && mu.is_finite() && sigma2.is_finite()) {
            return Err(Error::validation("mean-field parameters must be finite"));
        }
        if sigma2 < 0.0 {
            return Err(Error::domain("noise variance must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("sparsity probability must lie in [0,1]"));
        }
        Ok(MeanFieldParams {
            a,
            b,
            mu,
            sigma2,
            n,
            p,
        })
    }

    /// Largest eigenvalue `a + b (n-1)` of the dense matrix.
    pub fn lambda1(&self) -> f64 {
        self.a + self.b * (self.n as f64 - 1.0)
    }

    /// Largest eigenvalue of the sparsity-averaged matrix, `a + b p (n-1)`.
    pub fn lambda1_averaged(&self) -> f64 {
        self.a + self.b * self.p * (self.n as f64 - 1.0)
    }

    /// Stationarity of the (averaged, when p < 1) model.
    pub fn is_stationary(&self) -> bool {
        self.lambda1_averaged().abs() < 1.0 && (self.a - self.b).abs() < 1.0
    }

    /// Homogeneous equilibrium fitness `mu / (1 - lambda1)`.
    pub fn theta_stationary(&self) -> Result<f64> {
        if !self.is_stationary() {
            return Err(Error::NonStationary {
                spectral_radius: self.lambda1_averaged().abs(),
            });
        }
        Ok(self.mu / (1.0 - self.lambda1()))
    }

    /// Expands the dense parametrization into explicit VAR matrices.
    pub fn to_var_params(&self) -> Result<VarParams> {
        let n = self.n;
        let b = DMatrix::from_fn(n, n, |i, j| if i == j { self.a } else { self.b });
        VarParams::new(
            DVector::from_element(n, self.mu),
            b,
            DMatrix::identity(n, n) * self.sigma2,
        )
    }
}

/// An exogenous additive shock to the latent vector at time `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockSpec {
    pub tau: usize,
    pub delta: DVector<f64>,
}

impl ShockSpec {
    pub fn new(tau: usize, delta: DVector<f64>) -> Result<Self> {
        if delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("shock vector must be finite"));
        }
        Ok(ShockSpec { tau, delta })
    }

    /// Shock of size `delta` on a single latent coordinate.
    pub fn single_coordinate(tau: usize, dim: usize, coord: usize, delta: f64) -> Result<Self> {
        if coord >= dim {
            return Err(Error::Dimension {
                what: "shock coordinate",
                expected: dim,
                found: coord,
            });
        }
        let mut v = DVector::zeros(dim);
        v[coord] = delta;
        ShockSpec::new(tau, v)
    }
}

/// Mean and covariance of a Gaussian law on the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension {
                what: "moment covariance",
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        if !linalg::is_symmetric(&cov, 1e-9) {
            return Err(Error::validation("covariance must be symmetric"));
        }
        let min_ev = linalg::min_symmetric_eigenvalue(&cov);
        if min_ev < linalg::PSD_CLIP {
            return Err(Error::NotPsd {
                min_eigenvalue: min_ev,
            });
        }
        Ok(GaussianMoments { mean, cov })
    }

    /// Point mass at `mean`.
    pub fn point_mass(mean: DVector<f64>) -> Self {
        let d = mean.len();
        GaussianMoments {
            mean,
            cov: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}
