use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonator_core::activation::sigmoid;
use resonator_core::{Activation, ActivationKind, ActivationSpec};

fn unbounded(kind: ActivationKind) -> ActivationSpec {
    ActivationSpec::new(kind).with_bound(None)
}

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

fn analytic_slope(spec: &ActivationSpec, x: f64) -> f64 {
    match spec.kind {
        ActivationKind::Swish => {
            let s = sigmoid(spec.beta * x);
            s + spec.beta * x * s * (1.0 - s)
        }
        ActivationKind::Sigmoid => {
            let s = sigmoid(x);
            s * (1.0 - s)
        }
        ActivationKind::ShiftedTanh => 1.0 - (x + spec.bias).tanh().powi(2),
        ActivationKind::Softplus => sigmoid(x),
        ActivationKind::Gelu => {
            let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)) + x * pdf
        }
        ActivationKind::Logish => {
            let s = sigmoid(x);
            (1.0 + s).ln() + x * s * (1.0 - s) / (1.0 + s)
        }
        ActivationKind::Mish => {
            let t = softplus(x).tanh();
            t + x * (1.0 - t * t) * sigmoid(x)
        }
        ActivationKind::Mishra => {
            let u = x / (1.0 + x.abs());
            (u + 0.5) / (1.0 + x.abs()).powi(2)
        }
        k => panic!("no analytic slope for {k}"),
    }
}

#[test]
fn finite_differences_match_analytic_slopes() {
    let kinds = [
        ActivationKind::Swish,
        ActivationKind::Sigmoid,
        ActivationKind::ShiftedTanh,
        ActivationKind::Softplus,
        ActivationKind::Gelu,
        ActivationKind::Logish,
        ActivationKind::Mish,
        ActivationKind::Mishra,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in kinds {
        let spec = unbounded(kind);
        let mut checked = 0;
        while checked < 100 {
            let x: f64 = rng.gen_range(-6.0..6.0);
            if kind == ActivationKind::Mishra && x.abs() < 1e-2 {
                continue;
            }
            let fd = spec.first_derivative(x);
            let exact = analytic_slope(&spec, x);
            assert!((fd - exact).abs() <= 1e-5, "{kind} at {x}: {fd} vs {exact}");
            checked += 1;
        }
    }
}

#[test]
fn monotonic_kinds_never_decrease() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for kind in ActivationKind::ALL {
        if !kind.is_monotonic() || kind == ActivationKind::RRelu {
            continue;
        }
        let spec = ActivationSpec::new(kind);
        let b = spec.bound.unwrap();
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-b..b);
            let c: f64 = rng.gen_range(-b..b);
            let (lo, hi) = if a < c { (a, c) } else { (c, a) };
            assert!(spec.value(lo) <= spec.value(hi) + 1e-12, "{kind}: f({lo}) > f({hi})");
        }
    }
}

#[test]
fn swish_slope_limits() {
    let gentle = ActivationSpec::swish(0.01).with_bound(None);
    let steep = ActivationSpec::swish(100.0).with_bound(None);
    for k in 0..=200 {
        let x = -1.0 + k as f64 * 0.01;
        assert!((gentle.value(x) - 0.5 * x).abs() <= 3e-3, "x = {x}");
    }
    for k in 0..=450 {
        let m = 0.5 + k as f64 * 0.01;
        for x in [m, -m] {
            assert!((steep.value(x) - x.max(0.0)).abs() <= 1e-3, "x = {x}");
        }
    }
}

#[test]
fn r_relu_is_pure_in_its_stream_position() {
    let spec = ActivationSpec::new(ActivationKind::RRelu).with_stream(99);
    for draw in 0..100 {
        assert_eq!(spec.value_at(-2.0, draw), spec.value_at(-2.0, draw));
        let slope = spec.value_at(-2.0, draw) / -2.0;
        assert!((1.0 / 8.0..=1.0 / 3.0).contains(&slope));
    }
    let other = spec.with_stream(100);
    assert!((0..100).any(|d| spec.value_at(-2.0, d) != other.value_at(-2.0, d)));
}

proptest! {
    #[test]
    fn clamp_holds_beyond_the_bound(
        k in 0usize..16,
        b in 0.0f64..8.0,
        excess in 0.0f64..50.0,
        negative in any::<bool>(),
        draw in 0u64..1000,
    ) {
        let spec = ActivationSpec::new(ActivationKind::ALL[k]).with_bound(Some(b));
        let edge = if negative { -b } else { b };
        let x = if negative { -b - excess } else { b + excess };
        prop_assert_eq!(spec.value_at(x, draw).to_bits(), spec.value_at(edge, draw).to_bits());
    }

    #[test]
    fn non_random_kinds_are_pure(k in 0usize..16, x in -20.0f64..20.0, d1 in any::<u64>(), d2 in any::<u64>()) {
        let spec = ActivationSpec::new(ActivationKind::ALL[k]);
        prop_assume!(spec.kind != ActivationKind::RRelu);
        prop_assert_eq!(spec.value_at(x, d1).to_bits(), spec.value_at(x, d2).to_bits());
    }
}
