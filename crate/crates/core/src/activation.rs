//! Activation-function registry.
//!
//! Sixteen node nonlinearities, each optionally wrapped in a symmetric input
//! clamp: with a bound `B`, the function is evaluated at
//! `min(max(x, -B), B)`, so it is constant beyond `±B`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::config::FlatConfig;
use crate::error::{Error, Result};
use crate::seed;

pub const SELU_LAMBDA: f64 = 1.05070;
pub const SELU_ALPHA: f64 = 1.67326;
pub const DEFAULT_BOUND: f64 = 5.0;
pub const DEFAULT_LEAK: f64 = 0.01;
const RRELU_LOW: f64 = 1.0 / 8.0;
const RRELU_HIGH: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Gelu,
    HardSwish,
    Logish,
    Mish,
    Mishra,
    Pflu,
    Swish,
    Sigmoid,
    ShiftedTanh,
    HardSigmoid,
    HardTanh,
    LeakyRelu,
    MonotonicSwish,
    RRelu,
    Selu,
    Softplus,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 16] = [
        ActivationKind::Gelu,
        ActivationKind::HardSwish,
        ActivationKind::Logish,
        ActivationKind::Mish,
        ActivationKind::Mishra,
        ActivationKind::Pflu,
        ActivationKind::Swish,
        ActivationKind::Sigmoid,
        ActivationKind::ShiftedTanh,
        ActivationKind::HardSigmoid,
        ActivationKind::HardTanh,
        ActivationKind::LeakyRelu,
        ActivationKind::MonotonicSwish,
        ActivationKind::RRelu,
        ActivationKind::Selu,
        ActivationKind::Softplus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Gelu => "gelu",
            ActivationKind::HardSwish => "hard_swish",
            ActivationKind::Logish => "logish",
            ActivationKind::Mish => "mish",
            ActivationKind::Mishra => "mishra",
            ActivationKind::Pflu => "pflu",
            ActivationKind::Swish => "swish",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::ShiftedTanh => "shifted_tanh",
            ActivationKind::HardSigmoid => "hard_sigmoid",
            ActivationKind::HardTanh => "hard_tanh",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::MonotonicSwish => "monotonic_swish",
            ActivationKind::RRelu => "r_relu",
            ActivationKind::Selu => "selu",
            ActivationKind::Softplus => "softplus",
        }
    }

    /// Monotonic/non-monotonic split of the standard comparison table.
    pub fn is_monotonic(self) -> bool {
        !matches!(
            self,
            ActivationKind::Gelu
                | ActivationKind::HardSwish
                | ActivationKind::Logish
                | ActivationKind::Mish
                | ActivationKind::Mishra
                | ActivationKind::Pflu
                | ActivationKind::Swish
        )
    }

    fn uses_beta(self) -> bool {
        matches!(self, ActivationKind::Swish | ActivationKind::MonotonicSwish)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || k.name().replace('_', "") == norm)
            .ok_or_else(|| Error::Config(format!("unknown activation kind `{s}`")))
    }
}

/// Anything usable as a scalar node nonlinearity.
///
/// Derivatives default to central finite differences with step
/// `h = 1e-4 * max(1, |x|)`. At kinks of piecewise functions these give
/// large, O(1/h), but finite values.
pub trait Activation {
    fn value(&self, x: f64) -> f64;

    fn first_derivative(&self, x: f64) -> f64 {
        let h = fd_step(x);
        (self.value(x + h) - self.value(x - h)) / (2.0 * h)
    }

    fn second_derivative(&self, x: f64) -> f64 {
        let h = fd_step(x);
        (self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h)
    }
}

#[inline]
fn fd_step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// A registry function plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    /// Swish slope (swish, monotonic swish).
    pub beta: f64,
    /// Input shift of the shifted tanh.
    pub bias: f64,
    /// Input clamp; `None` means unbounded.
    pub bound: Option<f64>,
    /// Leaky-ReLU slope.
    pub leak: f64,
    /// Stream seed for the per-evaluation R-ReLU slopes.
    pub rng_stream: u64,
}

impl ActivationSpec {
    /// `kind` with the parameters of the standard comparison table:
    /// beta = 0.6, bias = 1, leak = 0.01, bound B = 5.
    pub fn new(kind: ActivationKind) -> Self {
        Self {
            kind,
            beta: 0.6,
            bias: 1.0,
            bound: Some(DEFAULT_BOUND),
            leak: DEFAULT_LEAK,
            rng_stream: 0,
        }
    }

    pub fn swish(beta: f64) -> Self {
        Self {
            beta,
            ..Self::new(ActivationKind::Swish)
        }
    }

    pub fn shifted_tanh(bias: f64) -> Self {
        Self {
            bias,
            ..Self::new(ActivationKind::ShiftedTanh)
        }
    }

    pub fn with_bound(mut self, bound: Option<f64>) -> Self {
        self.bound = bound;
        self
    }

    pub fn with_stream(mut self, rng_stream: u64) -> Self {
        self.rng_stream = rng_stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_beta() && !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "{} needs beta > 0, got {}",
                self.kind, self.beta
            )));
        }
        if let Some(b) = self.bound {
            if !(b >= 0.0) {
                return Err(Error::Config(format!("bound must be >= 0, got {b}")));
            }
        }
        if !self.bias.is_finite() || !self.leak.is_finite() {
            return Err(Error::Config("bias and leak must be finite".into()));
        }
        Ok(())
    }

    pub fn is_monotonic(&self) -> bool {
        self.kind.is_monotonic()
    }

    /// Label used in tables, e.g. `swish(beta=0.6)`.
    pub fn label(&self) -> String {
        match self.kind {
            ActivationKind::Swish | ActivationKind::MonotonicSwish => {
                format!("{}(beta={})", self.kind, self.beta)
            }
            ActivationKind::ShiftedTanh => format!("{}(b={})", self.kind, self.bias),
            k => k.name().to_string(),
        }
    }

    /// Evaluation with non-finite input rejected.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("activation input {x}")));
        }
        Ok(self.value(x))
    }

    /// Evaluation at R-ReLU stream position `draw`. Every other kind ignores
    /// `draw`.
    #[inline]
    pub fn value_at(&self, x: f64, draw: u64) -> f64 {
        let x = match self.bound {
            Some(b) => x.clamp(-b, b),
            None => x,
        };
        match self.kind {
            ActivationKind::RRelu => {
                let a = RRELU_LOW + (RRELU_HIGH - RRELU_LOW) * seed::unit_at(self.rng_stream, draw);
                x.max(a * x)
            }
            _ => self.raw(x),
        }
    }

    /// The unclamped function (R-ReLU at stream position 0).
    fn raw(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            ActivationKind::HardSwish => x * hard_sigmoid(x),
            ActivationKind::Logish => x * sigmoid(x).ln_1p(),
            ActivationKind::Mish => x * softplus(x).tanh(),
            ActivationKind::Mishra => {
                let u = x / (1.0 + x.abs());
                0.5 * u * u + 0.5 * u
            }
            ActivationKind::Pflu => {
                let s = 1.0 + x * x;
                let root = s.sqrt();
                x * 0.5 * (1.0 + x / (root + x / (s * root)))
            }
            ActivationKind::Swish => swish(x, self.beta),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::ShiftedTanh => (x + self.bias).tanh(),
            ActivationKind::HardSigmoid => hard_sigmoid(x),
            ActivationKind::HardTanh => x.clamp(-1.0, 1.0),
            ActivationKind::LeakyRelu => x.max(self.leak * x),
            ActivationKind::MonotonicSwish => {
                let x_min = argmin_swish(self.beta);
                swish(x.max(x_min), self.beta)
            }
            ActivationKind::RRelu => {
                let a = RRELU_LOW + (RRELU_HIGH - RRELU_LOW) * seed::unit_at(self.rng_stream, 0);
                x.max(a * x)
            }
            ActivationKind::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * (SELU_ALPHA * x.exp() - SELU_ALPHA)
                }
            }
            ActivationKind::Softplus => softplus(x),
        }
    }

    /// Flat `key = value` block (`kind`, `beta`, `bias`, `bound`, `leak`).
    pub fn to_kv(&self) -> String {
        let bound = match self.bound {
            Some(b) => format!("{b:?}"),
            None => "\"unbounded\"".to_string(),
        };
        format!(
            "kind = \"{}\"\nbeta = {:?}\nbias = {:?}\nbound = {}\nleak = {:?}\n",
            self.kind, self.beta, self.bias, bound, self.leak
        )
    }

    /// Reads `kind`, `beta`, `bias`, `bound`, `leak` from `cfg`, falling back
    /// to [`ActivationSpec::new`] defaults for missing parameters.
    pub fn from_flat(cfg: &FlatConfig) -> Result<Self> {
        let kind: ActivationKind = match cfg.get("kind") {
            Some(k) => k.parse()?,
            None => ActivationKind::Swish,
        };
        let mut spec = ActivationSpec::new(kind);
        if let Some(beta) = cfg.f64("beta")? {
            spec.beta = beta;
        }
        if let Some(bias) = cfg.f64("bias")? {
            spec.bias = bias;
        }
        if let Some(leak) = cfg.f64("leak")? {
            spec.leak = leak;
        }
        if let Some(raw) = cfg.get("bound") {
            spec.bound = parse_bound(raw)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl Activation for ActivationSpec {
    #[inline]
    fn value(&self, x: f64) -> f64 {
        self.value_at(x, 0)
    }
}

pub fn parse_bound(raw: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if matches!(raw.to_ascii_lowercase().as_str(), "unbounded" | "none" | "inf") {
        return Ok(None);
    }
    let b: f64 = raw
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse bound `{raw}`")))?;
    if b >= 0.0 && b.is_finite() {
        Ok(Some(b))
    } else {
        Err(Error::Config(format!("bound must be a finite value >= 0, got {b}")))
    }
}

/// The sixteen functions with the parameters of the standard comparison
/// table (swish and monotonic swish at beta = 0.6, shifted tanh at b = 1),
/// all bounded at B = 5.
pub fn standard_registry() -> Vec<ActivationSpec> {
    ActivationKind::ALL.into_iter().map(ActivationSpec::new).collect()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn hard_sigmoid(x: f64) -> f64 {
    ((x + 3.0) / 6.0).clamp(0.0, 1.0)
}

#[inline]
fn swish(x: f64, beta: f64) -> f64 {
    x * sigmoid(beta * x)
}

/// Minimizer of `u * sigmoid(u)`: the root of
/// `sigmoid(u) + u sigmoid(u) (1 - sigmoid(u))` on the negative axis.
fn unit_swish_argmin() -> f64 {
    static ROOT: OnceLock<f64> = OnceLock::new();
    *ROOT.get_or_init(|| {
        let slope = |u: f64| {
            let s = sigmoid(u);
            s + u * s * (1.0 - s)
        };
        let (mut lo, mut hi) = (-10.0_f64, 0.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    })
}

/// The unique minimizer of `x * sigmoid(beta * x)`, `u*/beta`.
pub fn argmin_swish(beta: f64) -> f64 {
    unit_swish_argmin() / beta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ActivationKind) -> ActivationSpec {
        ActivationSpec::new(kind)
    }

    #[test]
    fn point_examples() {
        assert_eq!(ActivationSpec::swish(0.6).value(0.0), 0.0);
        assert!((ActivationSpec::shifted_tanh(1.0).value(0.0) - 0.761594155955765).abs() < 1e-12);
        let clamped = ActivationSpec::swish(0.6).value(10.0);
        let expected = 5.0 / (1.0 + (-3.0f64).exp());
        assert!((clamped - expected).abs() < 1e-12);
        assert!((clamped - 4.76287).abs() < 1e-5);
        assert_eq!(spec(ActivationKind::HardSigmoid).value(-4.0), 0.0);
        assert_eq!(spec(ActivationKind::HardSigmoid).value(4.0), 1.0);
        assert_eq!(spec(ActivationKind::Mishra).value(0.0), 0.0);
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(spec(ActivationKind::Gelu).evaluate(f64::NAN).is_err());
        assert!(spec(ActivationKind::Gelu).evaluate(f64::INFINITY).is_err());
        assert!(spec(ActivationKind::Gelu).evaluate(1.0).is_ok());
    }

    #[test]
    fn pflu_pinned_values() {
        // Closed forms of the nested fraction, simplified by hand:
        // x=1: den = 5/(2 sqrt2), x=2: den = 27/(5 sqrt5), x=-1: den = 3/(2 sqrt2),
        // x=-2: den = 23/(5 sqrt5).
        let r2 = 2f64.sqrt();
        let r5 = 5f64.sqrt();
        let expected = [
            (-2.0, -(1.0 - 10.0 * r5 / 23.0)),
            (-1.0, -0.5 * (1.0 - 2.0 * r2 / 3.0)),
            (0.0, 0.0),
            (1.0, 0.5 * (1.0 + 2.0 * r2 / 5.0)),
            (2.0, 1.0 + 10.0 * r5 / 27.0),
        ];
        let f = spec(ActivationKind::Pflu);
        for (x, want) in expected {
            assert!(
                (f.value(x) - want).abs() < 1e-14,
                "pflu({x}) = {} vs {want}",
                f.value(x)
            );
        }
    }

    #[test]
    fn swish_argmin() {
        let x1 = argmin_swish(1.0);
        assert!((x1 - (-1.27846)).abs() < 1e-5, "{x1}");
        // Independent check: golden-section search on swish itself.
        let golden = |beta: f64| {
            let f = |x: f64| x / (1.0 + (-beta * x).exp());
            let (mut a, mut b) = (-50.0, 0.0);
            let r = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            0.5 * (a + b)
        };
        assert!((golden(1.0) - x1).abs() < 1e-6);
        assert!((golden(0.5) - argmin_swish(0.5)).abs() < 1e-6);
        assert!((argmin_swish(0.5) - 2.0 * x1).abs() < 1e-12);
        for beta in [0.01, 0.3, 2.0, 10.0] {
            let xm = argmin_swish(beta);
            assert!(xm < 0.0);
            assert!(swish(xm, beta) < 0.0);
        }
    }

    #[test]
    fn monotonic_swish_is_flat_below_minimum() {
        let f = spec(ActivationKind::MonotonicSwish);
        let xm = argmin_swish(0.6);
        assert_eq!(f.value(xm - 1.0), f.value(xm));
        assert_eq!(f.value(-5.0), swish(xm, 0.6));
        assert!((f.value(1.0) - swish(1.0, 0.6)).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let tanh0 = ActivationSpec::shifted_tanh(0.0);
        assert!((tanh0.first_derivative(0.0) - 1.0).abs() < 1e-6);
        let sw1 = ActivationSpec::swish(1.0);
        assert!((sw1.first_derivative(0.0) - 0.5).abs() < 1e-6);
        let leaky = spec(ActivationKind::LeakyRelu).with_bound(None);
        assert!(leaky.second_derivative(10.0).abs() < 1e-6);
    }

    #[test]
    fn r_relu_draws_are_reproducible_and_in_range() {
        let f = spec(ActivationKind::RRelu).with_stream(99);
        for draw in 0..1000 {
            let v = f.value_at(-1.0, draw);
            assert!((-RRELU_HIGH..=-RRELU_LOW).contains(&v), "{v}");
            assert_eq!(v, f.value_at(-1.0, draw));
            assert_eq!(f.value_at(2.0, draw), 2.0);
        }
        assert_ne!(f.value_at(-1.0, 1), f.value_at(-1.0, 2));
    }

    #[test]
    fn table_classification() {
        assert!(!ActivationKind::Logish.is_monotonic());
        assert!(ActivationKind::Softplus.is_monotonic());
        assert!(ActivationKind::MonotonicSwish.is_monotonic());
        assert!(ActivationKind::RRelu.is_monotonic());
        let non_monotonic = ActivationKind::ALL.iter().filter(|k| !k.is_monotonic()).count();
        assert_eq!(non_monotonic, 7);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
        }
        assert_eq!(
            "Hard-Swish".parse::<ActivationKind>().unwrap(),
            ActivationKind::HardSwish
        );
        assert!("relu6".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn kv_block_round_trip() {
        let s = ActivationSpec {
            beta: 0.45,
            ..ActivationSpec::swish(0.45)
        }
        .with_bound(None);
        let parsed = ActivationSpec::from_flat(&FlatConfig::parse(&s.to_kv()).unwrap()).unwrap();
        assert_eq!(parsed, s);
        let bad = FlatConfig::parse("kind = \"swish\"\nbeta = -1").unwrap();
        assert!(ActivationSpec::from_flat(&bad).is_err());
        let bad = FlatConfig::parse("kind = \"swish\"\nbound = -2").unwrap();
        assert!(ActivationSpec::from_flat(&bad).is_err());
    }

    #[test]
    fn registry_has_sixteen_distinct_kinds() {
        let reg = standard_registry();
        assert_eq!(reg.len(), 16);
        assert!(reg.iter().all(|s| s.bound == Some(5.0)));
    }
}
