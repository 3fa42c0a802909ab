//! Random reservoir construction and the driven/autonomous state updates.
//!
//! The update is `r <- f(A r + W_in z)` with `f` applied per node. Each
//! adjacency entry (self-loops included) is present with probability `d/N`
//! and the matrix is rescaled to a target spectral radius.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::export::save_matrix_csv;
use crate::lorenz::State3;
use crate::seed;

pub const INPUT_DIM: usize = 3;
const POWER_MAX_ITERS: usize = 1000;
const POWER_REL_TOL: f64 = 1e-10;
const DEGENERATE_RADIUS: f64 = 1e-9;
const MAX_ADJACENCY_DRAWS: usize = 16;

/// Value given to each present adjacency entry before rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyWeights {
    /// Every present entry is 1.
    Binary,
    /// Present entries are uniform in `[-1, 1]`.
    Uniform,
}

impl AdjacencyWeights {
    pub fn name(self) -> &'static str {
        match self {
            AdjacencyWeights::Binary => "binary",
            AdjacencyWeights::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for AdjacencyWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(AdjacencyWeights::Binary),
            "uniform" => Ok(AdjacencyWeights::Uniform),
            other => Err(Error::Config(format!(
                "adjacency_weights must be `binary` or `uniform`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_nodes: usize,
    /// Expected in-degree; each entry is nonzero with probability
    /// `mean_degree / n_nodes`.
    pub mean_degree: f64,
    pub spectral_radius: f64,
    /// Half-width of the uniform input-weight distribution.
    pub input_scale: f64,
    pub weights: AdjacencyWeights,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_nodes: 300,
            mean_degree: 6.0,
            spectral_radius: 1.2,
            input_scale: 0.1,
            weights: AdjacencyWeights::Uniform,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::Config("n_nodes must be at least 1".into()));
        }
        if !(self.spectral_radius > 0.0) || !self.spectral_radius.is_finite() {
            return Err(Error::Config(format!(
                "spectral_radius must be positive, got {}",
                self.spectral_radius
            )));
        }
        if !(self.input_scale > 0.0) || !self.input_scale.is_finite() {
            return Err(Error::Config(format!(
                "input_scale must be positive, got {}",
                self.input_scale
            )));
        }
        if !(self.mean_degree > 0.0) || self.mean_degree > self.n_nodes as f64 {
            return Err(Error::Config(format!(
                "mean_degree must lie in (0, n_nodes = {}], got {}",
                self.n_nodes, self.mean_degree
            )));
        }
        Ok(())
    }

    pub fn connection_probability(&self) -> f64 {
        self.mean_degree / self.n_nodes as f64
    }
}

/// Dominant-eigenvalue magnitude by power iteration from a seeded positive
/// start vector.
pub fn spectral_radius(m: &DMatrix<f64>, seed: u64) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut rng = seed::rng(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - estimate).abs() <= POWER_REL_TOL * norm;
        estimate = norm;
        v = w / norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Largest eigenvalue modulus from the full spectrum.
pub fn eigen_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    let dense = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    match dense.eigenvalues() {
        Ok(values) => values.iter().map(|z| z.norm()).fold(0.0, f64::max),
        Err(_) => m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
    }
}

/// Random sparse adjacency rescaled to `config.spectral_radius`. Binary
/// draws are nonnegative, so power iteration finds their radius; signed
/// draws use the full spectrum.
pub fn build_adjacency(config: &ReservoirConfig, seed: u64) -> Result<DMatrix<f64>> {
    config.validate()?;
    let n = config.n_nodes;
    let p = config.connection_probability();
    for attempt in 0..MAX_ADJACENCY_DRAWS {
        let draw_seed = if attempt == 0 {
            seed
        } else {
            seed::derive(seed, &[attempt as u64])
        };
        let mut rng = seed::rng(draw_seed);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if rng.gen::<f64>() < p {
                    a[(i, j)] = match config.weights {
                        AdjacencyWeights::Binary => 1.0,
                        AdjacencyWeights::Uniform => rng.gen_range(-1.0..=1.0),
                    };
                }
            }
        }
        let radius = match config.weights {
            AdjacencyWeights::Binary => spectral_radius(&a, seed::derive(draw_seed, &[u64::MAX])),
            AdjacencyWeights::Uniform => eigen_radius(&a),
        };
        if radius >= DEGENERATE_RADIUS {
            a *= config.spectral_radius / radius;
            return Ok(a);
        }
        log::debug!("adjacency draw {attempt} degenerate (radius {radius:e}), redrawing");
    }
    Err(Error::DegenerateAdjacency {
        attempts: MAX_ADJACENCY_DRAWS,
    })
}

/// `N x 3` matrix of i.i.d. uniform entries in `[-input_scale, input_scale]`.
pub fn build_input_matrix(config: &ReservoirConfig, seed: u64) -> Result<DMatrix<f64>> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let s = config.input_scale;
    let mut w = DMatrix::zeros(config.n_nodes, INPUT_DIM);
    for i in 0..config.n_nodes {
        for j in 0..INPUT_DIM {
            w[(i, j)] = rng.gen_range(-s..=s);
        }
    }
    Ok(w)
}

/// Row-compressed copy of the adjacency used for the update products.
/// Nonzeros are visited in ascending column order, so sums match the dense
/// product term for term.
#[derive(Debug, Clone)]
struct SparseRows {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_start = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Self { row_start, cols, vals }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_start[i], self.row_start[i + 1]);
        self.cols[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .fold(0.0, |acc, (&j, &v)| acc + v * x[j])
    }
}

/// Column-per-sample state record: column `n` is the state after the
/// `n`-th update.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    data: DMatrix<f64>,
}

impl StateMatrix {
    pub fn from_columns(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.data.nrows()
    }

    pub fn state(&self, n: usize) -> &[f64] {
        let nn = self.n_nodes();
        &self.data.as_slice()[n * nn..(n + 1) * nn]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_samples()).map(move |n| self.state(n))
    }

    /// `N x T` matrix, one column per sample.
    pub fn as_columns(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// All values of samples `from..`, sample-major.
    pub fn values_from(&self, from: usize) -> &[f64] {
        let start = (from * self.n_nodes()).min(self.data.len());
        &self.data.as_slice()[start..]
    }

    /// The conventional `T x N` layout.
    pub fn to_rows(&self) -> DMatrix<f64> {
        self.data.transpose()
    }
}

/// Output of a driven run.
#[derive(Debug, Clone)]
pub struct DrivenRun {
    pub states: StateMatrix,
    /// `A r + W_in z` for every node and step, when requested.
    pub pre_activations: Option<StateMatrix>,
}

/// Output of a closed-loop run.
#[derive(Debug, Clone)]
pub struct AutonomousRun {
    /// One prediction per requested step; entries from `truncated_at` on are
    /// NaN.
    pub predictions: Vec<State3>,
    /// State after each completed update.
    pub states: StateMatrix,
    /// First step whose prediction was non-finite.
    pub truncated_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Reservoir {
    adjacency: DMatrix<f64>,
    sparse: SparseRows,
    input_matrix: DMatrix<f64>,
    activation: ActivationSpec,
    state: Vec<f64>,
    pre_activation: Vec<f64>,
    steps: u64,
}

impl Reservoir {
    pub fn new(adjacency: DMatrix<f64>, input_matrix: DMatrix<f64>, activation: ActivationSpec) -> Result<Self> {
        let n = adjacency.nrows();
        if !adjacency.is_square() || n == 0 {
            return Err(Error::Dimension(format!(
                "adjacency must be square and nonempty, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if input_matrix.shape() != (n, INPUT_DIM) {
            return Err(Error::Dimension(format!(
                "input matrix must be {n}x{INPUT_DIM}, got {:?}",
                input_matrix.shape()
            )));
        }
        activation.validate()?;
        Ok(Self {
            sparse: SparseRows::from_dense(&adjacency),
            adjacency,
            input_matrix,
            activation,
            state: vec![0.0; n],
            pre_activation: vec![0.0; n],
            steps: 0,
        })
    }

    /// Draws `A` and `W_in` from their seeds.
    pub fn build(
        config: &ReservoirConfig,
        activation: ActivationSpec,
        adjacency_seed: u64,
        input_seed: u64,
    ) -> Result<Self> {
        let a = build_adjacency(config, adjacency_seed)?;
        let w_in = build_input_matrix(config, input_seed)?;
        Self::new(a, w_in, activation)
    }

    pub fn n_nodes(&self) -> usize {
        self.state.len()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.input_matrix
    }

    pub fn activation(&self) -> &ActivationSpec {
        &self.activation
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.n_nodes() {
            return Err(Error::Dimension(format!(
                "state of length {} for a {}-node reservoir",
                state.len(),
                self.n_nodes()
            )));
        }
        self.state.copy_from_slice(state);
        Ok(())
    }

    /// Zero state, step counter back to 0.
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|v| *v = 0.0);
        self.steps = 0;
    }

    /// Pre-activation vector of the most recent update.
    pub fn last_pre_activation(&self) -> &[f64] {
        &self.pre_activation
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update; returns false if the new state is not finite.
    fn advance(&mut self, input: &State3) -> bool {
        let n = self.n_nodes();
        for i in 0..n {
            let drive = self.input_matrix[(i, 0)] * input[0]
                + self.input_matrix[(i, 1)] * input[1]
                + self.input_matrix[(i, 2)] * input[2];
            self.pre_activation[i] = self.sparse.row_dot(i, &self.state) + drive;
        }
        let base = self.steps.wrapping_mul(n as u64);
        let mut finite = true;
        for i in 0..n {
            let v = self.activation.value_at(self.pre_activation[i], base + i as u64);
            finite &= v.is_finite();
            self.state[i] = v;
        }
        self.steps += 1;
        finite
    }

    /// One driven update with external input `z`.
    pub fn step_driven(&mut self, input: &State3) -> Result<&[f64]> {
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("reservoir input {input:?}")));
        }
        let step = self.steps as usize;
        if self.advance(input) {
            Ok(&self.state)
        } else {
            Err(Error::ReservoirBlowUp { step })
        }
    }

    /// Feeds every sample of `inputs` in order, starting from the current
    /// state (zero for a fresh reservoir). Column `n` of the result is the
    /// state produced by input `n`.
    pub fn run_driven(&mut self, inputs: &[State3], keep_pre_activations: bool) -> Result<DrivenRun> {
        if inputs.is_empty() {
            return Err(Error::Empty("driving inputs"));
        }
        let n = self.n_nodes();
        let mut states = Vec::with_capacity(n * inputs.len());
        let mut pre = if keep_pre_activations {
            Vec::with_capacity(n * inputs.len())
        } else {
            Vec::new()
        };
        for z in inputs {
            self.step_driven(z)?;
            states.extend_from_slice(&self.state);
            if keep_pre_activations {
                pre.extend_from_slice(&self.pre_activation);
            }
        }
        let t = inputs.len();
        Ok(DrivenRun {
            states: StateMatrix::from_columns(DMatrix::from_vec(n, t, states)),
            pre_activations: keep_pre_activations.then(|| StateMatrix::from_columns(DMatrix::from_vec(n, t, pre))),
        })
    }

    /// Closed-loop prediction: each step emits `W_out r` and feeds it back as
    /// the next input.
    pub fn run_autonomous(&mut self, w_out: &DMatrix<f64>, n_steps: usize) -> Result<AutonomousRun> {
        let n = self.n_nodes();
        if w_out.shape() != (INPUT_DIM, n) {
            return Err(Error::Dimension(format!(
                "readout must be {INPUT_DIM}x{n}, got {:?}",
                w_out.shape()
            )));
        }
        let mut states: Vec<f64> = Vec::with_capacity(n * n_steps);
        let mut predictions = Vec::with_capacity(n_steps);
        let mut truncated_at = None;
        for k in 0..n_steps {
            let z: State3 = std::array::from_fn(|row| {
                w_out
                    .row(row)
                    .iter()
                    .zip(&self.state)
                    .fold(0.0, |acc, (w, r)| acc + w * r)
            });
            if !z.iter().all(|v| v.is_finite()) {
                truncated_at = Some(k);
                break;
            }
            predictions.push(z);
            if !self.advance(&z) {
                truncated_at = Some(k + 1);
                break;
            }
            states.extend_from_slice(&self.state);
        }
        predictions.resize(n_steps, [f64::NAN; 3]);
        if truncated_at == Some(n_steps) {
            truncated_at = None;
        }
        let t = states.len() / n;
        Ok(AutonomousRun {
            predictions,
            states: StateMatrix::from_columns(DMatrix::from_vec(n, t, states)),
            truncated_at,
        })
    }

    /// Writes `adjacency.csv` and `w_in.csv` into `dir`.
    pub fn export_csv(&self, dir: &Path) -> Result<()> {
        save_matrix_csv(&self.adjacency, &dir.join("adjacency.csv"))?;
        save_matrix_csv(&self.input_matrix, &dir.join("w_in.csv"))
    }
}
