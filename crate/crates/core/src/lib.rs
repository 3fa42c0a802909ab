//! Echo-state-network forecasting of the Lorenz system, with activation
//! curvature and reservoir entropy diagnostics and a deterministic sweep
//! harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod config;
pub mod error;
pub mod export;
pub mod forecast;
pub mod lorenz;
pub mod metrics;
pub mod reservoir;
pub mod seed;
pub mod sweep;
pub mod training;

pub use activation::{Activation, ActivationKind, ActivationSpec};
pub use config::FlatConfig;
pub use error::{Error, Result, Stage};
pub use forecast::{aggregate_trials, forecast_horizon, run_trial, Horizon, TrialConfig, TrialResult, TrialStats};
pub use lorenz::{LorenzParams, State3, Trajectory, LORENZ_LYAPUNOV};
pub use metrics::{EntropyConfig, InputHistogram, SigmaMode};
pub use reservoir::{Reservoir, ReservoirConfig, StateMatrix};
pub use seed::TrialSeeds;
pub use sweep::{Axis, GridSpec, Param, SweepRow, SweepTable};
pub use training::{Readout, RidgeConfig};
