use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonator_core::activation::ActivationSpec;
use resonator_core::lorenz::{generate_trajectory, LorenzParams};
use resonator_core::reservoir::{build_adjacency, spectral_radius, AdjacencyWeights, Reservoir, ReservoirConfig};

fn schur_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .schur()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[test]
fn rescaled_radius_for_twenty_draws() {
    for n in [50, 300] {
        for weights in [AdjacencyWeights::Uniform, AdjacencyWeights::Binary] {
            let cfg = ReservoirConfig {
                n_nodes: n,
                weights,
                ..ReservoirConfig::default()
            };
            for seed in 0..20 {
                let a = build_adjacency(&cfg, seed).unwrap();
                let rho = schur_radius(&a);
                assert!((rho - 1.2).abs() <= 1e-6, "N={n} {weights:?} seed={seed}: {rho}");
                if weights == AdjacencyWeights::Binary {
                    assert!((spectral_radius(&a, seed + 1) - 1.2).abs() <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn driven_runs_forget_their_initial_state() {
    let cfg = ReservoirConfig::default();
    let inputs = generate_trajectory(5, 500, 0.02, 1000, &LorenzParams::default()).unwrap();
    let mut a = Reservoir::build(&cfg, ActivationSpec::shifted_tanh(1.0), 1, 2).unwrap();
    let mut b = a.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let start: Vec<f64> = (0..cfg.n_nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    b.set_state(&start).unwrap();
    let ra = a.run_driven(inputs.samples(), false).unwrap();
    let rb = b.run_driven(inputs.samples(), false).unwrap();
    let last = inputs.len() - 1;
    let (x, y) = (ra.states.state(last), rb.states.state(last));
    let gap = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let norm = x.iter().map(|p| p * p).sum::<f64>().sqrt();
    assert!(gap < 1e-6 * norm, "gap {gap:e}, norm {norm}");
}

#[test]
fn shapes_are_conserved() {
    let cfg = ReservoirConfig {
        n_nodes: 40,
        ..ReservoirConfig::default()
    };
    let mut res = Reservoir::build(&cfg, ActivationSpec::swish(0.6), 3, 4).unwrap();
    assert_eq!(res.adjacency().shape(), (40, 40));
    assert_eq!(res.input_matrix().shape(), (40, 3));
    let inputs = generate_trajectory(1, 120, 0.02, 100, &LorenzParams::default()).unwrap();
    let run = res.run_driven(inputs.samples(), true).unwrap();
    assert_eq!((run.states.n_nodes(), run.states.n_samples()), (40, 120));
    let pre = run.pre_activations.unwrap();
    assert_eq!((pre.n_nodes(), pre.n_samples()), (40, 120));
    let auto = res.run_autonomous(&DMatrix::from_element(3, 40, 0.01), 30).unwrap();
    assert_eq!(auto.predictions.len(), 30);
    assert_eq!(auto.states.n_samples(), 30);
    assert_eq!(auto.states.n_nodes(), 40);
}

#[test]
fn matrices_export_as_dense_csv() {
    let dir = std::env::temp_dir().join(format!("resonator-export-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = ReservoirConfig {
        n_nodes: 7,
        mean_degree: 3.0,
        ..ReservoirConfig::default()
    };
    let res = Reservoir::build(&cfg, ActivationSpec::swish(0.6), 1, 1).unwrap();
    res.export_csv(&dir).unwrap();
    let adj = std::fs::read_to_string(dir.join("adjacency.csv")).unwrap();
    let w_in = std::fs::read_to_string(dir.join("w_in.csv")).unwrap();
    assert_eq!(adj.lines().count(), 7);
    assert!(adj.lines().all(|l| l.split(',').count() == 7));
    assert!(w_in.lines().all(|l| l.split(',').count() == 3));
    let first: f64 = adj.lines().next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(first, res.adjacency()[(0, 0)]);
    std::fs::remove_dir_all(&dir).unwrap();
}
