//! The `resonator` command line.
//!
//! Settings are layered: command preset, then the `--config` file, then
//! flags. Every command prints its data on stdout; logs go to stderr.

mod args;
mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use resonator_core::activation::parse_bound;
use resonator_core::sweep::{
    bound_label, default_beta_axis, default_bias_axis, default_n_axis, run_bound_sweep, run_fh_histogram, run_grid,
    run_ise_capture, run_lambda_sweep, run_table1, table1_config, write_table1_csv, FunctionRow,
};
use resonator_core::{run_trial, Axis, Error, FlatConfig, GridSpec, Param, SweepTable, TrialConfig};

pub use args::{Cli, Command, SweepKind};
pub use manifest::RunManifest;

pub const SEED_ENV: &str = "RESONATOR_SEED";

/// Settings that shape a run but are not part of a trial.
const RUN_KEYS: &[&str] = &["trials", "bins", "lambdas", "bounds", "same_seed"];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.run.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, env_seed.as_deref(), &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Merged settings of one invocation.
struct Resolved {
    trial: TrialConfig,
    run: FlatConfig,
    /// Axis lists pulled out of the trial keys.
    axes: FlatConfig,
    /// Everything, as it would be written back to a config file.
    all: FlatConfig,
}

impl Resolved {
    fn usize(&self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.run.usize(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str, default: impl FnOnce() -> Vec<f64>) -> CliResult<Vec<f64>> {
        match self.axes.f64_list(key)? {
            Some(v) if v.is_empty() => Err(CliError::Usage(format!("`{key}` list is empty"))),
            Some(v) => Ok(v),
            None => Ok(default()),
        }
    }
}

fn resolve(
    cli: &Cli,
    base: TrialConfig,
    preset: &[(&str, &str)],
    axis_keys: &[&str],
    env_seed: Option<&str>,
) -> CliResult<Resolved> {
    let mut merged = FlatConfig::new();
    for (k, v) in preset {
        merged.set(*k, *v);
    }
    if let Some(path) = &cli.run.config {
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        merged.merge(&FlatConfig::load(path)?);
    }
    merged.merge(&cli.run.to_flat());
    merged.merge(&cli.overrides.to_flat());
    if let Some(seed) = cli.run.seed {
        merged.set("seed", seed.to_string());
    } else if !merged.contains("seed") {
        if let Some(raw) = env_seed {
            raw.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{raw}`")))?;
            merged.set("seed", raw.trim());
        }
    }

    let mut trial_keys = merged.clone();
    let mut run = FlatConfig::new();
    let mut axes = FlatConfig::new();
    for key in RUN_KEYS {
        if let Some(v) = trial_keys.remove(key) {
            run.set(*key, v);
        }
    }
    for key in axis_keys {
        if let Some(v) = trial_keys.remove(key) {
            axes.set(*key, v);
        }
    }
    if let Some(v) = run.get("same_seed") {
        if v.parse::<bool>().is_err() {
            return Err(CliError::Usage(format!("same_seed must be true or false, got `{v}`")));
        }
    }
    let trial = base.apply_flat(&trial_keys)?;

    let mut all = trial.to_flat();
    all.merge(&run);
    all.merge(&axes);
    Ok(Resolved { trial, run, axes, all })
}

struct Outputs {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            self.written.push(path);
        }
        Ok(())
    }

    fn finish(mut self, command: &str, resolved: &Resolved, jobs: usize, started: Instant) -> CliResult<()> {
        let Some(dir) = self.dir.clone() else {
            return Ok(());
        };
        self.file("resolved.toml", resolved.all.to_toml_string().as_bytes())?;
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            master_seed: resolved.trial.master_seed,
            config: resolved
                .all
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            jobs,
            outputs: self.written,
            duration_seconds: started.elapsed().as_secs_f64(),
        };
        let path = manifest.write(&dir)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn table_csv(table: &SweepTable) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(buf)
}

fn report_failures(table: &SweepTable) {
    for f in &table.failures {
        log::warn!(
            "trial {} of cell ({}, {:?}) failed: {}",
            f.trial,
            f.axis1,
            f.axis2,
            f.error
        );
    }
}

fn check_any_rows(table: &SweepTable) -> CliResult<()> {
    if table.rows.is_empty() {
        let numerical = table.failures.iter().all(|f| f.numerical);
        let msg = format!("every trial failed ({} failures)", table.failures.len());
        return Err(CliError::Core(if numerical {
            Error::Fit(msg)
        } else {
            Error::Config(msg)
        }));
    }
    Ok(())
}

fn default_out(cli: &Cli, name: &str) -> Option<PathBuf> {
    cli.run.out.clone().or_else(|| Some(Path::new("results").join(name)))
}

/// Runs a parsed command, writing its data to `stdout`.
pub fn execute(cli: &Cli, env_seed: Option<&str>, stdout: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let jobs = cli.run.jobs.unwrap_or(0);
    match &cli.command {
        Command::Trial => {
            let r = resolve(cli, TrialConfig::default(), &[], &[], env_seed)?;
            let result = run_trial(&r.trial)?;
            let mut line = serde_json::to_string(&result).map_err(|e| CliError::Usage(e.to_string()))?;
            line.push('\n');
            stdout.write_all(line.as_bytes())?;
            let mut out = Outputs::new(cli.run.out.clone())?;
            out.file("trial.json", line.as_bytes())?;
            out.finish("trial", &r, jobs, started)
        }
        Command::Table1 => {
            let r = resolve(cli, table1_config(), &[], &[], env_seed)?;
            for key in ["kind", "beta", "bias"] {
                if r.all.get(key) != table1_config().to_flat().get(key) {
                    log::warn!("`{key}` is ignored by table1; every function uses its standard parameters");
                }
            }
            let trials = r.usize("trials", 50)?;
            let rows = run_table1(&r.trial, trials, jobs)?;
            write_table1(cli, &r, &rows, jobs, started, stdout)
        }
        Command::Sweep { kind } => sweep(cli, *kind, env_seed, jobs, started, stdout),
    }
}

fn write_table1(
    cli: &Cli,
    r: &Resolved,
    rows: &[FunctionRow],
    jobs: usize,
    started: Instant,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    if rows.iter().all(|row| row.stats.is_none()) {
        return Err(CliError::Core(Error::Fit(
            "every trial of every function failed".into(),
        )));
    }
    for row in rows {
        for f in &row.failures {
            log::warn!("{} trial {} failed: {}", row.spec.label(), f.trial, f.error);
        }
    }
    let mut csv = Vec::new();
    write_table1_csv(rows, &mut csv)?;
    stdout.write_all(&csv)?;
    let mut jsonl = Vec::new();
    for row in rows {
        for res in &row.results {
            let mut v = serde_json::to_value(res).map_err(|e| CliError::Usage(e.to_string()))?;
            v["function"] = serde_json::Value::String(row.spec.label());
            writeln!(jsonl, "{v}")?;
        }
    }
    let mut out = Outputs::new(default_out(cli, "table1"))?;
    out.file("table1.csv", &csv)?;
    out.file("trials.jsonl", &jsonl)?;
    out.finish("table1", r, jobs, started)
}

fn trials_jsonl(table: &SweepTable) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    for row in &table.rows {
        for res in &row.results {
            writeln!(
                buf,
                "{}",
                serde_json::to_string(res).map_err(|e| CliError::Usage(e.to_string()))?
            )?;
        }
    }
    Ok(buf)
}

fn parse_bounds(raw: &str) -> CliResult<Vec<Option<f64>>> {
    let bounds: Vec<Option<f64>> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_bound)
        .collect::<resonator_core::Result<_>>()?;
    if bounds.is_empty() {
        return Err(CliError::Usage("bound list is empty".into()));
    }
    Ok(bounds)
}

fn decade_lambdas() -> Vec<f64> {
    std::iter::once(0.0).chain((-8..=0).map(|e| 10f64.powi(e))).collect()
}

type GridPreset = (Param, &'static [(&'static str, &'static str)], fn() -> Vec<f64>);

fn sweep(
    cli: &Cli,
    kind: SweepKind,
    env_seed: Option<&str>,
    jobs: usize,
    started: Instant,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let command = format!("sweep {}", kind.name());
    let dir = default_out(cli, kind.name());
    let base = TrialConfig::default();
    match kind {
        SweepKind::SwishGrid | SweepKind::BiasGrid => {
            let (param, preset, default_axis): GridPreset = match kind {
                SweepKind::SwishGrid => (Param::Beta, &[("kind", "swish")], default_beta_axis),
                _ => (Param::Bias, &[("kind", "shifted_tanh")], default_bias_axis),
            };
            let r = resolve(cli, base, preset, &[param.name(), "n_nodes"], env_seed)?;
            let spec = GridSpec {
                axis1: Axis::new(param, r.list(param.name(), default_axis)?),
                axis2: Some(Axis::new(Param::NNodes, r.list("n_nodes", default_n_axis)?)),
                trials_per_cell: r.usize("trials", 50)?,
                base: r.trial.clone(),
            };
            let table = run_grid(&spec, jobs)?;
            report_failures(&table);
            check_any_rows(&table)?;
            let csv = table_csv(&table)?;
            stdout.write_all(&csv)?;
            let mut out = Outputs::new(dir)?;
            out.file(&format!("{}.csv", kind.name().replace('-', "_")), &csv)?;
            out.file("trials.jsonl", &trials_jsonl(&table)?)?;
            out.finish(&command, &r, jobs, started)
        }
        SweepKind::Lambda => {
            let preset = [("kind", "shifted_tanh"), ("bias", "1.7"), ("n_nodes", "1000")];
            let r = resolve(cli, base, &preset, &[], env_seed)?;
            let lambdas = match r.run.f64_list("lambdas")? {
                Some(l) if l.is_empty() => return Err(CliError::Usage("lambda list is empty".into())),
                Some(l) => l,
                None => decade_lambdas(),
            };
            let table = run_lambda_sweep(&r.trial, &lambdas, r.usize("trials", 50)?, jobs)?;
            report_failures(&table);
            check_any_rows(&table)?;
            let csv = table_csv(&table)?;
            stdout.write_all(&csv)?;
            let mut out = Outputs::new(dir)?;
            out.file("lambda.csv", &csv)?;
            out.file("trials.jsonl", &trials_jsonl(&table)?)?;
            out.finish(&command, &r, jobs, started)
        }
        SweepKind::Bound => {
            let r = resolve(cli, base, &[("kind", "swish")], &["beta", "n_nodes"], env_seed)?;
            let bounds = match r.run.get("bounds") {
                Some(raw) => parse_bounds(raw)?,
                None => (0..=10).map(|b| Some(b as f64)).collect(),
            };
            let sweeps = run_bound_sweep(
                &r.trial,
                &bounds,
                &r.list("beta", default_beta_axis)?,
                &r.list("n_nodes", default_n_axis)?,
                r.usize("trials", 50)?,
                jobs,
            )?;
            let mut out = Outputs::new(dir)?;
            let mut combined = Vec::new();
            for (i, (bound, table)) in sweeps.iter().enumerate() {
                report_failures(table);
                let csv = table_csv(table)?;
                let label = bound_label(*bound);
                let mut lines = csv.split(|&b| b == b'\n').filter(|l| !l.is_empty());
                let header = lines.next().unwrap_or_default();
                if i == 0 {
                    combined.extend_from_slice(b"bound,");
                    combined.extend_from_slice(header);
                    combined.push(b'\n');
                }
                for line in lines {
                    write!(combined, "{label},")?;
                    combined.extend_from_slice(line);
                    combined.push(b'\n');
                }
                out.file(&format!("bound_{label}.csv"), &csv)?;
            }
            if sweeps.iter().all(|(_, t)| t.rows.is_empty()) {
                return Err(CliError::Core(Error::Fit("every trial failed".into())));
            }
            stdout.write_all(&combined)?;
            out.finish(&command, &r, jobs, started)
        }
        SweepKind::FhHist => {
            let r = resolve(cli, base, &[("beta", "0.45"), ("n_nodes", "800")], &[], env_seed)?;
            let same_seed = r.run.bool("same_seed")?.unwrap_or(false);
            let h = run_fh_histogram(&r.trial, r.usize("trials", 30)?, r.usize("bins", 15)?, same_seed, jobs)?;
            for f in &h.failures {
                log::warn!("trial {} failed: {}", f.trial, f.error);
            }
            let stats = serde_json::json!({
                "trials": h.fh.len(),
                "mean_fh": h.mean,
                "std_fh": h.std,
                "n_censored": h.n_censored,
                "failures": h.failures.len(),
                "fh": h.fh,
            });
            let mut stats_text = serde_json::to_string_pretty(&stats).map_err(|e| CliError::Usage(e.to_string()))?;
            stats_text.push('\n');
            stdout.write_all(stats_text.as_bytes())?;
            let mut csv = Vec::new();
            h.write_csv(&mut csv)?;
            let mut out = Outputs::new(dir)?;
            out.file("fh_hist.csv", &csv)?;
            out.file("fh_stats.json", stats_text.as_bytes())?;
            out.finish(&command, &r, jobs, started)
        }
        SweepKind::Ise => {
            let r = resolve(cli, base, &[("beta", "0.2"), ("n_nodes", "312")], &[], env_seed)?;
            let capture = run_ise_capture(&r.trial)?;
            let mut csv = Vec::new();
            capture.write_csv(&mut csv)?;
            stdout.write_all(&csv)?;
            let mut out = Outputs::new(dir)?;
            out.file("ise.csv", &csv)?;
            let mut trial = serde_json::to_string(&capture.result).map_err(|e| CliError::Usage(e.to_string()))?;
            trial.push('\n');
            out.file("trial.json", trial.as_bytes())?;
            out.finish(&command, &r, jobs, started)
        }
    }
}
