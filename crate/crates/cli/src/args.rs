use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use resonator_core::FlatConfig;

#[derive(Debug, Parser)]
#[command(
    name = "resonator",
    version,
    args_override_self = true,
    about = "Reservoir-computing forecasts of the Lorenz system"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub run: RunOptions,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one train/predict trial and print its result as JSON.
    Trial,
    /// Compare the sixteen registry activations.
    Table1,
    /// Run a multi-trial experiment.
    Sweep {
        #[arg(value_enum, id = "sweep_kind", value_name = "KIND")]
        kind: SweepKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    SwishGrid,
    BiasGrid,
    Lambda,
    Bound,
    FhHist,
    Ise,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::SwishGrid => "swish-grid",
            SweepKind::BiasGrid => "bias-grid",
            SweepKind::Lambda => "lambda",
            SweepKind::Bound => "bound",
            SweepKind::FhHist => "fh-hist",
            SweepKind::Ise => "ise",
        }
    }
}

#[derive(Debug, Args)]
pub struct RunOptions {
    /// Flat TOML file of `key = value` settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; falls back to the config, then RESONATOR_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory for CSV/JSON files and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trials: Option<String>,
    /// Bins of the horizon histogram.
    #[arg(long, global = true)]
    pub bins: Option<String>,
    /// Comma-separated ridge parameters for the lambda sweep.
    #[arg(long, global = true)]
    pub lambdas: Option<String>,
    /// Comma-separated bounds for the bound sweep (`unbounded` allowed).
    #[arg(long, global = true)]
    pub bounds: Option<String>,
    /// Keep the per-step state entropy over the whole prediction window.
    #[arg(long, global = true)]
    pub emit_ise: bool,
    /// Reuse one seed for every histogram trial.
    #[arg(long, global = true)]
    pub same_seed: bool,
    /// Increase log verbosity on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl RunOptions {
    /// Run-level keys given on the command line.
    pub fn to_flat(&self) -> FlatConfig {
        let mut f = FlatConfig::new();
        for (key, value) in [
            ("trials", &self.trials),
            ("bins", &self.bins),
            ("lambdas", &self.lambdas),
            ("bounds", &self.bounds),
        ] {
            if let Some(v) = value {
                f.set(key, v.clone());
            }
        }
        if self.emit_ise {
            f.set("emit_ise", "true");
        }
        if self.same_seed {
            f.set("same_seed", "true");
        }
        f
    }
}

macro_rules! overrides {
    ($($field:ident, $flag:literal, [$($alias:literal),*];)*) => {
        /// One flag per configuration key; flags win over the config file.
        #[derive(Debug, Default, Args)]
        pub struct Overrides {
            $(
                #[arg(long = $flag, global = true, allow_hyphen_values = true, aliases = Vec::<&'static str>::from([$($alias),*]), value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl Overrides {
            pub fn to_flat(&self) -> FlatConfig {
                let mut f = FlatConfig::new();
                $(
                    if let Some(v) = &self.$field {
                        f.set(stringify!($field), v.clone());
                    }
                )*
                f
            }
        }
    };
}

overrides! {
    n_nodes, "n-nodes", ["n", "nodes", "n_nodes"];
    mean_degree, "mean-degree", ["mean_degree"];
    spectral_radius, "spectral-radius", ["spectral_radius"];
    input_scale, "input-scale", ["input_scale"];
    adjacency_weights, "adjacency-weights", ["adjacency_weights"];
    kind, "kind", [];
    beta, "beta", [];
    bias, "bias", [];
    bound, "bound", [];
    leak, "leak", [];
    lambda, "lambda", [];
    washout, "washout", [];
    train_samples, "train-samples", ["train_samples"];
    predict_samples, "predict-samples", ["predict_samples"];
    units, "units", [];
    tau, "tau", [];
    transient, "transient", [];
    threshold, "threshold", [];
    hist_bins, "hist-bins", ["hist_bins"];
    sigma_factor, "sigma-factor", ["sigma_factor"];
    sigma_mode, "sigma-mode", ["sigma_mode"];
    entropy, "entropy", [];
    lorenz_sigma, "lorenz-sigma", ["lorenz_sigma"];
    lorenz_rho, "lorenz-rho", ["lorenz_rho"];
    lorenz_beta, "lorenz-beta", ["lorenz_beta"];
}
