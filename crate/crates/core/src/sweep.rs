//! Multi-trial experiments over parameter grids.
//!
//! Work is split into `(cell, trial)` units and run on a rayon pool. Every
//! unit derives its seed from the master seed and its indices alone, and
//! results are collected in index order, so tables are identical at any
//! worker count and any cell can be re-run on its own.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{standard_registry, ActivationSpec};
use crate::error::{Error, Result};
use crate::export::fmt_csv;
use crate::forecast::{aggregate_trials, mean_std, run_trial, PreparedTrial, TrialConfig, TrialResult, TrialStats};
use crate::lorenz::LORENZ_LYAPUNOV;
use crate::metrics::{collect_histogram, InputHistogram};
use crate::seed;

const LAMBDA_STREAM: u64 = 0x6c61_6d62;
const TABLE_STREAM: u64 = 0x7461_626c;
const HIST_STREAM: u64 = 0x6869_7374;

/// Seed of trial `t` in grid cell `(i, j)`.
pub fn cell_trial_seed(master: u64, i: usize, j: usize, t: usize) -> u64 {
    seed::derive(master, &[i as u64, j as u64, t as u64])
}

/// Seed of trial `t` in experiments that share data across their cells.
pub fn common_trial_seed(master: u64, stream: u64, t: usize) -> u64 {
    seed::derive(master, &[stream, t as u64])
}

/// A numeric field of [`TrialConfig`] that a grid axis can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Beta,
    Bias,
    Bound,
    Leak,
    NNodes,
    MeanDegree,
    SpectralRadius,
    InputScale,
    Lambda,
    TrainSamples,
}

impl Param {
    pub const ALL: [Param; 10] = [
        Param::Beta,
        Param::Bias,
        Param::Bound,
        Param::Leak,
        Param::NNodes,
        Param::MeanDegree,
        Param::SpectralRadius,
        Param::InputScale,
        Param::Lambda,
        Param::TrainSamples,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Beta => "beta",
            Param::Bias => "bias",
            Param::Bound => "bound",
            Param::Leak => "leak",
            Param::NNodes => "n_nodes",
            Param::MeanDegree => "mean_degree",
            Param::SpectralRadius => "spectral_radius",
            Param::InputScale => "input_scale",
            Param::Lambda => "lambda",
            Param::TrainSamples => "train_samples",
        }
    }

    /// Writes `value` into `cfg`. Count parameters are rounded; an infinite
    /// bound removes the clamp.
    pub fn apply(self, cfg: &mut TrialConfig, value: f64) -> Result<()> {
        if value.is_nan() {
            return Err(Error::Config(format!("{} value is NaN", self.name())));
        }
        let count = |v: f64| -> Result<usize> {
            if v < 0.5 || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{} must be a positive count, got {v}",
                    self.name()
                )));
            }
            Ok(v.round() as usize)
        };
        match self {
            Param::Beta => cfg.activation.beta = value,
            Param::Bias => cfg.activation.bias = value,
            Param::Bound => cfg.activation.bound = value.is_finite().then_some(value),
            Param::Leak => cfg.activation.leak = value,
            Param::NNodes => cfg.reservoir.n_nodes = count(value)?,
            Param::MeanDegree => cfg.reservoir.mean_degree = value,
            Param::SpectralRadius => cfg.reservoir.spectral_radius = value,
            Param::InputScale => cfg.reservoir.input_scale = value,
            Param::Lambda => cfg.ridge.lambda = value,
            Param::TrainSamples => cfg.train_samples = count(value)?,
        }
        Ok(())
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let key = match key.as_str() {
            "n" | "nodes" => "n_nodes",
            "b" => "bias",
            other => other,
        }
        .to_string();
        Param::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(param: Param, values: Vec<f64>) -> Self {
        Self { param, values }
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Swish slopes: 50 linear values over [0.01, 1].
pub fn default_beta_axis() -> Vec<f64> {
    linspace(0.01, 1.0, 50)
}

/// Reservoir sizes: 50 values over [10, 1000], rounded.
pub fn default_n_axis() -> Vec<f64> {
    linspace(10.0, 1000.0, 50).into_iter().map(f64::round).collect()
}

/// Shifted-tanh biases: 25 values over [-3, 3].
pub fn default_bias_axis() -> Vec<f64> {
    linspace(-3.0, 3.0, 25)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    pub trials_per_cell: usize,
    pub base: TrialConfig,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axis1.values.is_empty() || self.axis2.as_ref().is_some_and(|a| a.values.is_empty()) {
            return Err(Error::Config("grid axes must be nonempty".into()));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::Config("trials per cell must be at least 1".into()));
        }
        self.base.validate()?;
        for (i, j) in self.cells() {
            self.cell_config(i, j, 0)?.validate()?;
        }
        Ok(())
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n2 = self.axis2.as_ref().map_or(1, |a| a.values.len());
        (0..self.axis1.values.len()).flat_map(move |i| (0..n2).map(move |j| (i, j)))
    }

    /// Configuration of trial `t` in cell `(i, j)`.
    pub fn cell_config(&self, i: usize, j: usize, t: usize) -> Result<TrialConfig> {
        let mut cfg = self.base.clone();
        self.axis1.param.apply(&mut cfg, self.axis1.values[i])?;
        if let Some(axis2) = &self.axis2 {
            axis2.param.apply(&mut cfg, axis2.values[j])?;
        }
        cfg.master_seed = cell_trial_seed(self.base.master_seed, i, j, t);
        Ok(cfg)
    }
}

/// A trial that produced no result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub trial: usize,
    pub error: String,
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub stats: TrialStats,
    pub results: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis1: Param,
    pub axis2: Option<Param>,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<TrialFailure>,
}

pub const SWEEP_CSV_HEADER: &str = "axis1,axis2,mean_fh,stderr_fh,mean_ase,mean_k,n_trials,n_censored";

impl SweepTable {
    pub fn row(&self, axis1: f64, axis2: Option<f64>) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.axis1 == axis1 && r.axis2 == axis2)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            let s = &r.stats;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                fmt_csv(r.axis1),
                r.axis2.map(fmt_csv).unwrap_or_default(),
                fmt_csv(s.mean_fh),
                fmt_csv(s.stderr_fh),
                s.mean_ase.map(fmt_csv).unwrap_or_default(),
                fmt_csv(s.mean_k),
                s.count,
                s.n_censored
            )?;
        }
        Ok(())
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

type CellOutcomes = ((f64, Option<f64>), Vec<Result<TrialResult>>);

/// Builds rows from per-cell trial outcomes, keeping failures in cell order.
fn assemble(axis1: Param, axis2: Option<Param>, cells: Vec<CellOutcomes>) -> SweepTable {
    let mut rows = Vec::with_capacity(cells.len());
    let mut failures = Vec::new();
    for ((a1, a2), outcomes) in cells {
        let mut results = Vec::with_capacity(outcomes.len());
        for (trial, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) => {
                    log::warn!("cell ({a1}, {a2:?}) trial {trial} failed: {e}");
                    failures.push(TrialFailure {
                        axis1: a1,
                        axis2: a2,
                        trial,
                        numerical: e.is_numerical(),
                        error: e.to_string(),
                    });
                }
            }
        }
        match aggregate_trials(&results) {
            Ok(stats) => rows.push(SweepRow {
                axis1: a1,
                axis2: a2,
                stats,
                results,
            }),
            Err(_) => log::warn!("cell ({a1}, {a2:?}) dropped: every trial failed"),
        }
    }
    SweepTable {
        axis1,
        axis2,
        rows,
        failures,
    }
}

/// Runs every cell of `spec`; `jobs == 0` uses all available cores.
pub fn run_grid(spec: &GridSpec, jobs: usize) -> Result<SweepTable> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = spec.cells().collect();
    let trials = spec.trials_per_cell;
    let units: Vec<(usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(i, j)| (0..trials).map(move |t| (i, j, t)))
        .collect();
    let outcomes: Vec<Result<TrialResult>> = pool(jobs)?.install(|| {
        units
            .par_iter()
            .map(|&(i, j, t)| {
                let r = spec.cell_config(i, j, t).and_then(|cfg| run_trial(&cfg));
                log::debug!("cell ({i}, {j}) trial {t} done");
                r
            })
            .collect()
    });
    let mut outcomes = outcomes.into_iter();
    let grouped = cells
        .iter()
        .map(|&(i, j)| {
            let key = (spec.axis1.values[i], spec.axis2.as_ref().map(|a| a.values[j]));
            (key, outcomes.by_ref().take(trials).collect())
        })
        .collect();
    Ok(assemble(
        spec.axis1.param,
        spec.axis2.as_ref().map(|a| a.param),
        grouped,
    ))
}

/// One row per ridge parameter. Trial `t` uses the same data and reservoir
/// for every `lambda`, so differences between rows come from the fit alone.
pub fn run_lambda_sweep(base: &TrialConfig, lambdas: &[f64], trials: usize, jobs: usize) -> Result<SweepTable> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda list is empty".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {bad}")));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    base.validate()?;
    let per_trial: Vec<Vec<Result<TrialResult>>> = pool(jobs)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let cfg = base
                    .clone()
                    .with_seed(common_trial_seed(base.master_seed, LAMBDA_STREAM, t));
                match PreparedTrial::new(&cfg) {
                    Ok(prepared) => lambdas
                        .iter()
                        .map(|&l| prepared.evaluate(l).map(|o| o.result))
                        .collect(),
                    Err(e) => lambdas.iter().map(|_| Err(e.clone())).collect(),
                }
            })
            .collect()
    });
    let mut columns: Vec<Vec<Result<TrialResult>>> = lambdas.iter().map(|_| Vec::with_capacity(trials)).collect();
    for row in per_trial {
        for (k, r) in row.into_iter().enumerate() {
            columns[k].push(r);
        }
    }
    let grouped = lambdas.iter().map(|&l| (l, None)).zip(columns).collect();
    Ok(assemble(Param::Lambda, None, grouped))
}

/// A `beta_axis x n_axis` grid repeated for each bound (`None` = unbounded).
pub fn run_bound_sweep(
    base: &TrialConfig,
    bounds: &[Option<f64>],
    beta_axis: &[f64],
    n_axis: &[f64],
    trials: usize,
    jobs: usize,
) -> Result<Vec<(Option<f64>, SweepTable)>> {
    if bounds.is_empty() {
        return Err(Error::Config("bound list is empty".into()));
    }
    bounds
        .iter()
        .map(|&bound| {
            let mut cfg = base.clone();
            cfg.activation.bound = bound;
            let spec = GridSpec {
                axis1: Axis::new(Param::Beta, beta_axis.to_vec()),
                axis2: Some(Axis::new(Param::NNodes, n_axis.to_vec())),
                trials_per_cell: trials,
                base: cfg,
            };
            Ok((bound, run_grid(&spec, jobs)?))
        })
        .collect()
}

/// File-name label of a bound: `b5`, `b0.5`, `unbounded`.
pub fn bound_label(bound: Option<f64>) -> String {
    match bound {
        Some(b) => format!("b{}", fmt_csv(b)),
        None => "unbounded".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhHistogram {
    pub fh: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    pub n_censored: usize,
    pub failures: Vec<TrialFailure>,
}

impl FhHistogram {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt_csv(self.bin_edges[k]),
                fmt_csv(self.bin_edges[k + 1]),
                c
            )?;
        }
        Ok(())
    }
}

/// Horizon distribution over independent trials. With `same_seed` every
/// trial reuses the base seed, which makes the spread exactly zero.
pub fn run_fh_histogram(
    base: &TrialConfig,
    trials: usize,
    n_bins: usize,
    same_seed: bool,
    jobs: usize,
) -> Result<FhHistogram> {
    if trials < 2 {
        return Err(Error::Config("a horizon histogram needs at least 2 trials".into()));
    }
    if n_bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    base.validate()?;
    let outcomes: Vec<Result<TrialResult>> = pool(jobs)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let s = if same_seed {
                    base.master_seed
                } else {
                    common_trial_seed(base.master_seed, HIST_STREAM, t)
                };
                run_trial(&base.clone().with_seed(s))
            })
            .collect()
    });
    let table = assemble(Param::Beta, None, vec![((base.activation.beta, None), outcomes)]);
    let row = table
        .rows
        .first()
        .ok_or_else(|| Error::Fit(format!("all {trials} trials failed")))?;
    let fh: Vec<f64> = row.results.iter().map(|r| r.fh).collect();
    let InputHistogram { bin_edges, counts, .. } = collect_histogram(&fh, n_bins)?;
    let (mean, std) = mean_std(&fh);
    Ok(FhHistogram {
        bin_edges,
        counts,
        mean,
        std,
        n_censored: row.stats.n_censored,
        fh,
        failures: table.failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreFh,
    PostFh,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::PreFh => "pre_fh",
            Phase::PostFh => "post_fh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsePoint {
    pub step: usize,
    pub lyapunov_time: f64,
    pub ise: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IseCapture {
    pub points: Vec<IsePoint>,
    pub result: TrialResult,
}

impl IseCapture {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,lyapunov_time,ise,phase")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{}",
                p.step,
                fmt_csv(p.lyapunov_time),
                fmt_csv(p.ise),
                p.phase.name()
            )?;
        }
        Ok(())
    }
}

/// Entropy of every closed-loop state of one trial, tagged by whether the
/// step precedes the horizon.
pub fn run_ise_capture(base: &TrialConfig) -> Result<IseCapture> {
    let mut cfg = base.clone();
    cfg.emit_ise = true;
    let result = run_trial(&cfg)?;
    let series = result.ise_series.clone().unwrap_or_default();
    let points = series
        .into_iter()
        .enumerate()
        .map(|(step, ise)| IsePoint {
            step,
            lyapunov_time: LORENZ_LYAPUNOV * step as f64 * cfg.tau,
            ise,
            phase: if step < result.fh_index {
                Phase::PreFh
            } else {
                Phase::PostFh
            },
        })
        .collect();
    Ok(IseCapture { points, result })
}

/// One activation's aggregate, or the reason it has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRow {
    pub spec: ActivationSpec,
    pub stats: Option<TrialStats>,
    pub results: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

impl FunctionRow {
    pub fn mean_fh(&self) -> Option<f64> {
        self.stats.as_ref().map(|s| s.mean_fh)
    }
}

/// Runs `trials` trials for each activation. Trial `t` shares its seed
/// across activations.
pub fn run_functions(
    base: &TrialConfig,
    specs: &[ActivationSpec],
    trials: usize,
    jobs: usize,
) -> Result<Vec<FunctionRow>> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if specs.is_empty() {
        return Err(Error::Config("no activation functions given".into()));
    }
    base.validate()?;
    for s in specs {
        s.validate()?;
    }
    let units: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|f| (0..trials).map(move |t| (f, t)))
        .collect();
    let outcomes: Vec<Result<TrialResult>> = pool(jobs)?.install(|| {
        units
            .par_iter()
            .map(|&(f, t)| {
                let cfg = base.clone().with_activation(specs[f]).with_seed(common_trial_seed(
                    base.master_seed,
                    TABLE_STREAM,
                    t,
                ));
                run_trial(&cfg)
            })
            .collect()
    });
    let mut outcomes = outcomes.into_iter();
    Ok(specs
        .iter()
        .map(|spec| {
            let cell = outcomes.by_ref().take(trials).collect();
            let mut table = assemble(Param::Beta, None, vec![((spec.beta, None), cell)]);
            let row = table.rows.pop();
            FunctionRow {
                spec: *spec,
                stats: row.as_ref().map(|r| r.stats.clone()),
                results: row.map(|r| r.results).unwrap_or_default(),
                failures: table.failures,
            }
        })
        .collect())
}

/// Base configuration of the sixteen-function comparison: defaults with
/// the input clamp removed.
pub fn table1_config() -> TrialConfig {
    let mut cfg = TrialConfig::default();
    cfg.activation.bound = None;
    cfg
}

/// The sixteen-function comparison at the base configuration's size and
/// bound.
pub fn run_table1(base: &TrialConfig, trials: usize, jobs: usize) -> Result<Vec<FunctionRow>> {
    let specs: Vec<ActivationSpec> = standard_registry()
        .into_iter()
        .map(|s| s.with_bound(base.activation.bound))
        .collect();
    run_functions(base, &specs, trials, jobs)
}

pub fn write_table1_csv<W: Write>(rows: &[FunctionRow], mut w: W) -> Result<()> {
    writeln!(w, "function,mean_fh,stderr,mean_k,mean_ase,monotonic")?;
    for r in rows {
        let label = r.spec.label();
        match &r.stats {
            Some(s) => writeln!(
                w,
                "{label},{},{},{},{},{}",
                fmt_csv(s.mean_fh),
                fmt_csv(s.stderr_fh),
                fmt_csv(s.mean_k),
                s.mean_ase.map(fmt_csv).unwrap_or_default(),
                r.spec.is_monotonic()
            )?,
            None => writeln!(w, "{label},error,error,error,error,{}", r.spec.is_monotonic())?,
        }
    }
    Ok(())
}
