//! The train/predict trial pipeline and the Forecast Horizon score.
//!
//! One trial: integrate a fresh Lorenz trajectory, drive the reservoir with
//! the first `train_samples` samples, fit the readout so the state produced
//! by sample `n` predicts sample `n + 1`, then run closed-loop for
//! `predict_samples` steps and compare the x coordinate against the held-out
//! continuation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::config::FlatConfig;
use crate::error::{Error, Result, Stage};
use crate::lorenz::{generate_trajectory, LorenzParams, State3, Trajectory};
use crate::metrics::{self, collect_histogram, entropy_series, weighted_curvature, EntropyConfig, SigmaMode};
use crate::reservoir::{Reservoir, ReservoirConfig};
use crate::seed::TrialSeeds;
use crate::training::{NormalEquations, RidgeConfig};

/// How `train_samples`/`predict_samples` are given in a flat config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnits {
    /// Sample counts.
    Samples,
    /// Model-time units, converted with `round(value / tau)`.
    ModelTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub reservoir: ReservoirConfig,
    pub activation: ActivationSpec,
    pub ridge: RidgeConfig,
    pub lorenz: LorenzParams,
    pub train_samples: usize,
    pub predict_samples: usize,
    pub tau: f64,
    /// Samples integrated and discarded before the training series.
    pub transient_steps: usize,
    /// Deviation of the x coordinate that ends the horizon.
    pub threshold: f64,
    pub master_seed: u64,
    pub hist_bins: usize,
    pub entropy: EntropyConfig,
    /// Compute the state entropy (the O(N^2)-per-step part of a trial).
    pub compute_entropy: bool,
    /// Keep the per-step entropy over the full prediction window.
    pub emit_ise: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            reservoir: ReservoirConfig::default(),
            activation: ActivationSpec::swish(0.6),
            ridge: RidgeConfig::default(),
            lorenz: LorenzParams::default(),
            train_samples: 5000,
            predict_samples: 1250,
            tau: 0.02,
            transient_steps: 1000,
            threshold: 5.0,
            master_seed: 0,
            hist_bins: metrics::DEFAULT_BINS,
            entropy: EntropyConfig::default(),
            compute_entropy: true,
            emit_ise: false,
        }
    }
}

/// Keys understood by [`TrialConfig::from_flat`].
pub const TRIAL_KEYS: &[&str] = &[
    "n_nodes",
    "mean_degree",
    "spectral_radius",
    "input_scale",
    "adjacency_weights",
    "kind",
    "beta",
    "bias",
    "bound",
    "leak",
    "lambda",
    "washout",
    "train_samples",
    "predict_samples",
    "units",
    "tau",
    "transient",
    "threshold",
    "seed",
    "hist_bins",
    "sigma_factor",
    "sigma_mode",
    "entropy",
    "emit_ise",
    "lorenz_sigma",
    "lorenz_rho",
    "lorenz_beta",
];

impl TrialConfig {
    pub fn with_activation(mut self, activation: ActivationSpec) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_nodes(mut self, n_nodes: usize) -> Self {
        self.reservoir.n_nodes = n_nodes;
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.reservoir.validate()?;
        self.activation.validate()?;
        self.ridge.validate()?;
        self.lorenz.validate()?;
        self.entropy.validate()?;
        if self.predict_samples == 0 {
            return Err(Error::Config("predict_samples must be at least 1".into()));
        }
        if self.train_samples < self.ridge.washout + 2 {
            return Err(Error::Config(format!(
                "train_samples {} leaves no training pairs after washout {}",
                self.train_samples, self.ridge.washout
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.hist_bins < 2 {
            return Err(Error::Config("hist_bins must be at least 2".into()));
        }
        Ok(())
    }

    /// Largest attainable horizon, in Lyapunov times.
    pub fn horizon_cap(&self) -> f64 {
        crate::lorenz::LORENZ_LYAPUNOV * self.predict_samples as f64 * self.tau
    }

    /// Overlays the keys of `cfg` onto `self`. Unknown keys are an error.
    pub fn apply_flat(mut self, cfg: &FlatConfig) -> Result<Self> {
        cfg.check_known(TRIAL_KEYS)?;
        if let Some(v) = cfg.usize("n_nodes")? {
            self.reservoir.n_nodes = v;
        }
        if let Some(v) = cfg.f64("mean_degree")? {
            self.reservoir.mean_degree = v;
        }
        if let Some(v) = cfg.f64("spectral_radius")? {
            self.reservoir.spectral_radius = v;
        }
        if let Some(v) = cfg.f64("input_scale")? {
            self.reservoir.input_scale = v;
        }
        if let Some(w) = cfg.get("adjacency_weights") {
            self.reservoir.weights = w.parse()?;
        }
        if let Some(kind) = cfg.get("kind") {
            let kind = kind.parse()?;
            if kind != self.activation.kind {
                let keep = self.activation;
                self.activation = ActivationSpec::new(kind);
                self.activation.bound = keep.bound;
            }
        }
        if let Some(v) = cfg.f64("beta")? {
            self.activation.beta = v;
        }
        if let Some(v) = cfg.f64("bias")? {
            self.activation.bias = v;
        }
        if let Some(v) = cfg.f64("leak")? {
            self.activation.leak = v;
        }
        if let Some(raw) = cfg.get("bound") {
            self.activation.bound = crate::activation::parse_bound(raw)?;
        }
        if let Some(v) = cfg.f64("lambda")? {
            self.ridge.lambda = v;
        }
        if let Some(v) = cfg.usize("washout")? {
            self.ridge.washout = v;
        }
        if let Some(v) = cfg.f64("tau")? {
            self.tau = v;
        }
        let units = match cfg.get("units") {
            None | Some("samples") => LengthUnits::Samples,
            Some("model_time") => LengthUnits::ModelTime,
            Some(other) => {
                return Err(Error::Config(format!(
                    "units must be `samples` or `model_time`, got `{other}`"
                )))
            }
        };
        let length = |key: &str| -> Result<Option<usize>> {
            match units {
                LengthUnits::Samples => cfg.usize(key),
                LengthUnits::ModelTime => Ok(cfg.f64(key)?.map(|t| (t / self.tau).round() as usize)),
            }
        };
        if let Some(v) = length("train_samples")? {
            self.train_samples = v;
        }
        if let Some(v) = length("predict_samples")? {
            self.predict_samples = v;
        }
        if let Some(v) = cfg.usize("transient")? {
            self.transient_steps = v;
        }
        if let Some(v) = cfg.f64("threshold")? {
            self.threshold = v;
        }
        if let Some(v) = cfg.parse_value::<u64>("seed")? {
            self.master_seed = v;
        }
        if let Some(v) = cfg.usize("hist_bins")? {
            self.hist_bins = v;
        }
        if let Some(v) = cfg.f64("sigma_factor")? {
            self.entropy.sigma_factor = v;
        }
        match cfg.get("sigma_mode") {
            None => {}
            Some("per_state") => self.entropy.sigma_mode = SigmaMode::PerState,
            Some("trajectory") => self.entropy.sigma_mode = SigmaMode::Trajectory,
            Some(other) => {
                return Err(Error::Config(format!(
                    "sigma_mode must be `per_state` or `trajectory`, got `{other}`"
                )))
            }
        }
        if let Some(v) = cfg.bool("entropy")? {
            self.compute_entropy = v;
        }
        if let Some(v) = cfg.bool("emit_ise")? {
            self.emit_ise = v;
        }
        if let Some(v) = cfg.f64("lorenz_sigma")? {
            self.lorenz.sigma = v;
        }
        if let Some(v) = cfg.f64("lorenz_rho")? {
            self.lorenz.rho = v;
        }
        if let Some(v) = cfg.f64("lorenz_beta")? {
            self.lorenz.beta = v;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_flat(cfg: &FlatConfig) -> Result<Self> {
        Self::default().apply_flat(cfg)
    }

    /// Fully resolved flat form; `from_flat(to_flat())` reproduces `self`.
    pub fn to_flat(&self) -> FlatConfig {
        let mut f = FlatConfig::new();
        let r = &self.reservoir;
        f.set("n_nodes", r.n_nodes.to_string());
        f.set("mean_degree", format!("{:?}", r.mean_degree));
        f.set("spectral_radius", format!("{:?}", r.spectral_radius));
        f.set("input_scale", format!("{:?}", r.input_scale));
        f.set("adjacency_weights", r.weights.name());
        let a = &self.activation;
        f.set("kind", a.kind.name());
        f.set("beta", format!("{:?}", a.beta));
        f.set("bias", format!("{:?}", a.bias));
        f.set(
            "bound",
            a.bound.map_or_else(|| "unbounded".to_string(), |b| format!("{b:?}")),
        );
        f.set("leak", format!("{:?}", a.leak));
        f.set("lambda", format!("{:?}", self.ridge.lambda));
        f.set("washout", self.ridge.washout.to_string());
        f.set("train_samples", self.train_samples.to_string());
        f.set("predict_samples", self.predict_samples.to_string());
        f.set("units", "samples");
        f.set("tau", format!("{:?}", self.tau));
        f.set("transient", self.transient_steps.to_string());
        f.set("threshold", format!("{:?}", self.threshold));
        f.set("seed", self.master_seed.to_string());
        f.set("hist_bins", self.hist_bins.to_string());
        f.set("sigma_factor", format!("{:?}", self.entropy.sigma_factor));
        f.set(
            "sigma_mode",
            match self.entropy.sigma_mode {
                SigmaMode::PerState => "per_state",
                SigmaMode::Trajectory => "trajectory",
            },
        );
        f.set("entropy", self.compute_entropy.to_string());
        f.set("emit_ise", self.emit_ise.to_string());
        f.set("lorenz_sigma", format!("{:?}", self.lorenz.sigma));
        f.set("lorenz_rho", format!("{:?}", self.lorenz.rho));
        f.set("lorenz_beta", format!("{:?}", self.lorenz.beta));
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    /// Lyapunov times.
    pub fh: f64,
    pub censored: bool,
    /// First index whose deviation exceeded the threshold (the series length
    /// when censored).
    pub index: usize,
}

/// Lyapunov-scaled time at which `|x - x_hat|` first exceeds `threshold`.
/// Non-finite predictions count as exceeding it.
pub fn forecast_horizon(actual: &Trajectory, predicted: &Trajectory, threshold: f64) -> Result<Horizon> {
    if actual.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "actual has {} samples, prediction {}",
            actual.len(),
            predicted.len()
        )));
    }
    if (actual.tau() - predicted.tau()).abs() > 1e-12 * actual.tau() {
        return Err(Error::Dimension(format!(
            "sampling intervals differ: {} vs {}",
            actual.tau(),
            predicted.tau()
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {threshold}")));
    }
    let crossing = actual
        .samples()
        .iter()
        .zip(predicted.samples())
        .position(|(a, p)| !((a[0] - p[0]).abs() <= threshold));
    let (index, censored) = match crossing {
        Some(n) => (n, false),
        None => (actual.len(), true),
    };
    Ok(Horizon {
        fh: actual.lyapunov_exponent() * index as f64 * actual.tau(),
        censored,
        index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Forecast Horizon in Lyapunov times.
    pub fh: f64,
    pub censored: bool,
    pub fh_index: usize,
    /// Average state entropy (nats) up to the horizon.
    pub ase: Option<f64>,
    pub weighted_curvature: f64,
    pub lambda: f64,
    pub seeds: TrialSeeds,
    pub rank_deficient: bool,
    pub truncated_at: Option<usize>,
    pub sigma_floor_hits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ise_series: Option<Vec<f64>>,
}

/// Everything in a trial that does not depend on the ridge parameter:
/// data, reservoir, driven run, normal equations and weighted curvature.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    cfg: TrialConfig,
    seeds: TrialSeeds,
    reservoir: Reservoir,
    equations: NormalEquations,
    actual: Trajectory,
    weighted_curvature: f64,
}

impl PreparedTrial {
    pub fn new(cfg: &TrialConfig) -> Result<Self> {
        cfg.validate()?;
        let seeds = TrialSeeds::from_master(cfg.master_seed);
        let (train, predict) = (cfg.train_samples, cfg.predict_samples);

        let data = generate_trajectory(seeds.data, train + predict, cfg.tau, cfg.transient_steps, &cfg.lorenz)
            .map_err(|e| e.at(Stage::Data))?;
        let training: &[State3] = &data.samples()[..train];
        let actual = data.window(train, train + predict).map_err(|e| e.at(Stage::Data))?;

        let activation = cfg.activation.with_stream(seeds.rrelu);
        let mut reservoir = Reservoir::build(&cfg.reservoir, activation, seeds.adjacency, seeds.input)
            .map_err(|e| e.at(Stage::Reservoir))?;
        let driven = reservoir.run_driven(training, true).map_err(|e| e.at(Stage::Drive))?;

        // The state produced by sample n is paired with sample n + 1.
        let pairs = train - 1;
        let equations = NormalEquations::from_columns(
            driven.states.as_columns().columns(0, pairs),
            &training[1..],
            cfg.ridge.washout,
        )
        .map_err(|e| e.at(Stage::Fit))?;

        let pre = driven.pre_activations.as_ref().expect("pre-activations requested");
        let hist =
            collect_histogram(pre.values_from(cfg.ridge.washout), cfg.hist_bins).map_err(|e| e.at(Stage::Metrics))?;
        let weighted_curvature = weighted_curvature(&activation, &hist);

        Ok(Self {
            cfg: cfg.clone(),
            seeds,
            reservoir,
            equations,
            actual,
            weighted_curvature,
        })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.cfg
    }

    pub fn weighted_curvature(&self) -> f64 {
        self.weighted_curvature
    }

    pub fn actual(&self) -> &Trajectory {
        &self.actual
    }

    /// Fits the readout with `lambda` and scores the closed-loop prediction.
    pub fn evaluate(&self, lambda: f64) -> Result<TrialOutcome> {
        let cfg = &self.cfg;
        let readout = self.equations.solve(lambda).map_err(|e| e.at(Stage::Fit))?;
        let mut reservoir = self.reservoir.clone();
        let run = reservoir
            .run_autonomous(&readout.weights, cfg.predict_samples)
            .map_err(|e| e.at(Stage::Predict))?;
        let predicted = Trajectory::new(run.predictions, cfg.tau).map_err(|e| e.at(Stage::Predict))?;
        let horizon = forecast_horizon(&self.actual, &predicted, cfg.threshold).map_err(|e| e.at(Stage::Predict))?;

        let (ase, ise_series, floor_hits) = if cfg.compute_entropy || cfg.emit_ise {
            let count = if cfg.emit_ise {
                run.states.n_samples()
            } else {
                horizon.index
            };
            let series = entropy_series(&run.states, count, &cfg.entropy).map_err(|e| e.at(Stage::Metrics))?;
            let hits = series.iter().filter(|e| e.floored).count();
            let ase = metrics::mean_of(series.iter().take(horizon.index).map(|e| e.value));
            let kept = cfg.emit_ise.then(|| series.iter().map(|e| e.value).collect());
            (ase, kept, hits)
        } else {
            (None, None, 0)
        };

        let result = TrialResult {
            fh: horizon.fh,
            censored: horizon.censored,
            fh_index: horizon.index,
            ase,
            weighted_curvature: self.weighted_curvature,
            lambda,
            seeds: self.seeds,
            rank_deficient: readout.rank_deficient,
            truncated_at: run.truncated_at,
            sigma_floor_hits: floor_hits,
            ise_series,
        };
        Ok(TrialOutcome {
            result,
            predicted,
            readout: readout.weights,
        })
    }
}

/// A scored trial plus the artifacts behind the score.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub predicted: Trajectory,
    pub readout: DMatrix<f64>,
}

/// Runs one complete trial; deterministic in `cfg.master_seed`.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialResult> {
    run_trial_detailed(cfg).map(|o| o.result)
}

pub fn run_trial_detailed(cfg: &TrialConfig) -> Result<TrialOutcome> {
    PreparedTrial::new(cfg)?.evaluate(cfg.ridge.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub count: usize,
    pub mean_fh: f64,
    pub std_fh: f64,
    pub stderr_fh: f64,
    pub mean_ase: Option<f64>,
    pub mean_k: f64,
    pub std_k: f64,
    pub n_censored: usize,
}

/// Mean, sample std and standard error of the horizon (censored trials
/// enter at their capped value), plus mean entropy and curvature.
pub fn aggregate_trials(results: &[TrialResult]) -> Result<TrialStats> {
    if results.is_empty() {
        return Err(Error::Empty("trial results"));
    }
    let fhs: Vec<f64> = results.iter().map(|r| r.fh).collect();
    let ks: Vec<f64> = results.iter().map(|r| r.weighted_curvature).collect();
    let (mean_fh, std_fh) = mean_std(&fhs);
    let (mean_k, std_k) = mean_std(&ks);
    Ok(TrialStats {
        count: results.len(),
        mean_fh,
        std_fh,
        stderr_fh: std_fh / (results.len() as f64).sqrt(),
        mean_ase: metrics::mean_of(results.iter().filter_map(|r| r.ase)),
        mean_k,
        std_k,
        n_censored: results.iter().filter(|r| r.censored).count(),
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
