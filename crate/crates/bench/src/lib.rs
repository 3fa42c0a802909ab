//! Fixtures shared by the benchmarks.

use resonator_core::lorenz::generate_trajectory;
use resonator_core::{ActivationSpec, LorenzParams, Reservoir, ReservoirConfig, State3, StateMatrix};

pub fn lorenz_samples(n: usize) -> Vec<State3> {
    generate_trajectory(1, n, 0.02, 1000, &LorenzParams::default())
        .expect("default trajectory")
        .samples()
        .to_vec()
}

pub fn reservoir(n_nodes: usize, activation: ActivationSpec) -> Reservoir {
    let cfg = ReservoirConfig {
        n_nodes,
        ..ReservoirConfig::default()
    };
    Reservoir::build(&cfg, activation, 2, 3).expect("default reservoir")
}

/// Driven states and their one-step-ahead targets.
pub fn training_set(n_nodes: usize, samples: usize) -> (StateMatrix, Vec<State3>) {
    let data = lorenz_samples(samples + 1);
    let mut res = reservoir(n_nodes, ActivationSpec::swish(0.6));
    let run = res.run_driven(&data[..samples], false).expect("driven run");
    (run.states, data[1..].to_vec())
}
