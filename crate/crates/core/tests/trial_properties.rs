use proptest::prelude::*;
use resonator_core::forecast::PreparedTrial;
use resonator_core::lorenz::generate_trajectory;
use resonator_core::metrics::{collect_histogram, weighted_curvature};
use resonator_core::reservoir::build_input_matrix;
use resonator_core::{
    forecast_horizon, run_trial, ActivationKind, ActivationSpec, Reservoir, ReservoirConfig, Trajectory, TrialConfig,
    TrialSeeds,
};

fn small(seed: u64) -> TrialConfig {
    let mut cfg = TrialConfig::default().with_nodes(100).with_seed(seed);
    cfg.train_samples = 1500;
    cfg.predict_samples = 400;
    cfg
}

fn series(xs: &[f64]) -> Trajectory {
    Trajectory::new(xs.iter().map(|&x| [x, 0.0, 0.0]).collect(), 0.02).unwrap()
}

fn noisy_pair(seed: u64, len: usize, growth: f64) -> (Vec<f64>, Vec<f64>) {
    let actual: Vec<f64> = (0..len).map(|k| (k as f64 * 0.1 + seed as f64).sin() * 15.0).collect();
    let predicted = actual
        .iter()
        .enumerate()
        .map(|(k, a)| a + (k as f64 * growth).exp() * 0.01 * ((k as f64 * 0.37 + seed as f64).cos()))
        .collect();
    (actual, predicted)
}

proptest! {
    #[test]
    fn tighter_threshold_never_lengthens_the_horizon(
        seed in 0u64..1000,
        growth in 0.001f64..0.05,
        t1 in 0.1f64..10.0,
        t2 in 0.1f64..10.0,
    ) {
        let (a, p) = noisy_pair(seed, 400, growth);
        let (a, p) = (series(&a), series(&p));
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let tight = forecast_horizon(&a, &p, lo).unwrap();
        let loose = forecast_horizon(&a, &p, hi).unwrap();
        prop_assert!(tight.fh <= loose.fh);
    }

    #[test]
    fn appending_after_divergence_changes_nothing(
        seed in 0u64..1000,
        extra in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 0..100),
    ) {
        let (mut a, mut p) = noisy_pair(seed, 400, 0.03);
        let before = forecast_horizon(&series(&a), &series(&p), 5.0).unwrap();
        prop_assume!(!before.censored);
        for (x, y) in extra {
            a.push(x);
            p.push(y);
        }
        let after = forecast_horizon(&series(&a), &series(&p), 5.0).unwrap();
        prop_assert_eq!(before.fh, after.fh);
        prop_assert_eq!(before.index, after.index);
    }
}

#[test]
fn trials_are_deterministic_and_capped() {
    for seed in 0..4 {
        let cfg = small(seed);
        let a = run_trial(&cfg).unwrap();
        let b = run_trial(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let cap = cfg.horizon_cap();
        assert!(a.fh >= 0.0 && a.fh <= cap + 1e-12);
        if a.censored {
            assert_eq!(a.fh, cap);
        }
        assert_eq!(a.seeds, TrialSeeds::from_master(seed));
    }
}

#[test]
fn seeds_change_the_outcome() {
    let a = run_trial(&small(1)).unwrap();
    let b = run_trial(&small(2)).unwrap();
    assert_ne!(a.seeds, b.seeds);
    assert_ne!(a.weighted_curvature, b.weighted_curvature);
}

#[test]
fn ground_truth_is_left_untouched() {
    let cfg = small(9);
    let prepared = PreparedTrial::new(&cfg).unwrap();
    for lambda in [0.0, 1e-6, 1.0] {
        prepared.evaluate(lambda).unwrap();
    }
    let seeds = TrialSeeds::from_master(9);
    let total = cfg.train_samples + cfg.predict_samples;
    let fresh = generate_trajectory(seeds.data, total, cfg.tau, cfg.transient_steps, &cfg.lorenz).unwrap();
    let window = &fresh.samples()[cfg.train_samples..];
    assert_eq!(prepared.actual().samples().len(), window.len());
    for (got, want) in prepared.actual().samples().iter().zip(window) {
        for i in 0..3 {
            assert_eq!(got[i].to_bits(), want[i].to_bits());
        }
    }
}

#[test]
fn outcome_matches_its_own_horizon() {
    let cfg = small(3);
    let outcome = PreparedTrial::new(&cfg).unwrap().evaluate(0.0).unwrap();
    let h = forecast_horizon(PreparedTrial::new(&cfg).unwrap().actual(), &outcome.predicted, 5.0).unwrap();
    assert_eq!(h.fh, outcome.result.fh);
    assert_eq!(h.index, outcome.result.fh_index);
    assert_eq!(outcome.readout.shape(), (3, 100));
}

fn driven_inputs(activation: ActivationSpec, n: usize, seed: u64) -> Vec<f64> {
    let cfg = ReservoirConfig {
        n_nodes: n,
        ..ReservoirConfig::default()
    };
    let seeds = TrialSeeds::from_master(seed);
    let data = generate_trajectory(seeds.data, 3000, 0.02, 1000, &Default::default()).unwrap();
    let mut res = Reservoir::build(&cfg, activation, seeds.adjacency, seeds.input).unwrap();
    let run = res.run_driven(data.samples(), true).unwrap();
    run.pre_activations.unwrap().values_from(100).to_vec()
}

#[test]
fn tanh_inputs_are_unimodal_and_concentrated() {
    let samples = driven_inputs(ActivationSpec::shifted_tanh(0.0), 300, 4);
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[(p * (sorted.len() - 1) as f64) as usize];
    assert!(
        q(0.1) >= -3.0 && q(0.9) <= 3.0,
        "central 80% spans [{}, {}]",
        q(0.1),
        q(0.9)
    );
    let hist = collect_histogram(&samples, 40).unwrap();
    let peak = (0..40).max_by_key(|&k| hist.counts[k]).unwrap();
    let rising = hist.counts[..=peak].windows(2).filter(|w| w[1] < w[0]).count();
    let falling = hist.counts[peak..].windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rising + falling <= 6, "histogram is not unimodal: {:?}", hist.counts);
}

#[test]
fn swish_curvature_sits_in_the_expected_band() {
    let spec = ActivationSpec::swish(0.6);
    let samples = driven_inputs(spec, 300, 5);
    let k = weighted_curvature(&spec, &collect_histogram(&samples, 200).unwrap());
    assert!((0.05..=0.3).contains(&k), "K = {k}");
}

#[test]
fn curvature_is_never_negative() {
    let samples = driven_inputs(ActivationSpec::shifted_tanh(1.0), 100, 6);
    let hist = collect_histogram(&samples, 200).unwrap();
    for kind in ActivationKind::ALL {
        let k = weighted_curvature(&ActivationSpec::new(kind), &hist);
        assert!(k >= 0.0 && k.is_finite(), "{kind}: {k}");
    }
}

#[test]
fn input_matrix_is_centered() {
    let cfg = ReservoirConfig::default();
    let w = build_input_matrix(&cfg, 12).unwrap();
    assert!(w.iter().all(|v| v.abs() <= 0.1));
    assert!(w.mean().abs() <= 0.01);
}

proptest! {
    #[test]
    fn histogram_mass_is_conserved(
        samples in proptest::collection::vec(-1e3f64..1e3, 1..500),
        bins in 2usize..300,
    ) {
        let hist = collect_histogram(&samples, bins).unwrap();
        prop_assert_eq!(hist.counts.iter().sum::<u64>(), samples.len() as u64);
        prop_assert_eq!(hist.total, samples.len() as u64);
        prop_assert!(hist.bin_edges.windows(2).all(|w| w[0] < w[1]));
        let mass: f64 = hist.probabilities().sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
    }
}
