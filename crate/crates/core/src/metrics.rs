//! Diagnostics: input-weighted activation curvature and state entropy.
//!
//! The weighted curvature is `K = sum_b kappa(c_b) p_b` over a histogram of
//! pre-activation inputs, with `kappa = |f''| / (1 + f'^2)^(3/2)`.
//!
//! The instantaneous state entropy is the Renyi quadratic estimator
//! `-log[(1/N^2) sum_ij K_s(r_j - r_i)]` with a Gaussian kernel whose width
//! is a multiple of the spread of the state components.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::export::fmt_csv;
use crate::reservoir::StateMatrix;

pub const DEFAULT_BINS: usize = 200;
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl InputHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        let total = self.total as f64;
        self.counts.iter().map(move |&c| c as f64 / total)
    }

    /// `bin_center,probability` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_center,probability")?;
        for (c, p) in self.bin_centers().zip(self.probabilities()) {
            writeln!(w, "{},{}", fmt_csv(c), fmt_csv(p))?;
        }
        Ok(())
    }
}

/// Uniform bins spanning `[min, max]` of `samples`.
pub fn collect_histogram(samples: &[f64], n_bins: usize) -> Result<InputHistogram> {
    if samples.is_empty() {
        return Err(Error::Empty("histogram samples"));
    }
    if n_bins < 2 {
        return Err(Error::Config(format!("histogram needs at least 2 bins, got {n_bins}")));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("histogram sample {x}")));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo == hi {
        let pad = 1e-6 * lo.abs().max(1.0);
        lo -= pad;
        hi += pad;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bin_edges: Vec<f64> = (0..n_bins).map(|k| lo + k as f64 * width).collect();
    bin_edges.push(hi);
    let mut counts = vec![0u64; n_bins];
    for &x in samples {
        let k = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(InputHistogram {
        bin_edges,
        counts,
        total: samples.len() as u64,
    })
}

/// Graph curvature of `f` at `x`.
pub fn pointwise_curvature<F: Activation + ?Sized>(f: &F, x: f64) -> f64 {
    let d1 = f.first_derivative(x);
    let d2 = f.second_derivative(x);
    d2.abs() / (1.0 + d1 * d1).powf(1.5)
}

/// Curvature averaged over the histogram, sampled at bin centers.
pub fn weighted_curvature<F: Activation + ?Sized>(f: &F, hist: &InputHistogram) -> f64 {
    let total = hist.total as f64;
    hist.bin_centers()
        .zip(&hist.counts)
        .filter(|(_, &c)| c > 0)
        .map(|(x, &c)| pointwise_curvature(f, x) * (c as f64 / total))
        .sum()
}

/// How the kernel width is derived from the states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// From the spread of each state vector on its own.
    PerState,
    /// From the spread of every component of every state in the record.
    Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    pub sigma_factor: f64,
    pub sigma_mode: SigmaMode,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            sigma_factor: 0.3,
            sigma_mode: SigmaMode::PerState,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_factor > 0.0 && self.sigma_factor.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "sigma_factor must be positive, got {}",
                self.sigma_factor
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEntropy {
    pub value: f64,
    pub sigma: f64,
    /// The kernel width was zero and replaced by [`SIGMA_FLOOR`].
    pub floored: bool,
}

fn sample_std<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Entropy estimate of `state` for a given kernel width.
pub fn state_entropy_with_width(state: &[f64], sigma: f64) -> f64 {
    let n = state.len();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut off_diagonal = 0.0;
    for i in 0..n {
        let ri = state[i];
        let mut row = 0.0;
        for &rj in &state[i + 1..] {
            let d = rj - ri;
            row += (-d * d * inv).exp();
        }
        off_diagonal += row;
    }
    let nf = n as f64;
    // -log[(1/N^2) (N + 2 S) / (sqrt(2 pi) sigma)]
    (2.0 * PI).sqrt().ln() + sigma.ln() + 2.0 * nf.ln() - (nf + 2.0 * off_diagonal).ln()
}

fn kernel_width(std: f64, cfg: &EntropyConfig) -> (f64, bool) {
    let sigma = cfg.sigma_factor * std;
    if sigma > 0.0 {
        (sigma, false)
    } else {
        (SIGMA_FLOOR, true)
    }
}

pub fn instantaneous_state_entropy(state: &[f64], cfg: &EntropyConfig) -> Result<StateEntropy> {
    if state.len() < 2 {
        return Err(Error::Config(format!(
            "state entropy needs at least 2 components, got {}",
            state.len()
        )));
    }
    let (sigma, floored) = kernel_width(sample_std(state.iter()), cfg);
    Ok(StateEntropy {
        value: state_entropy_with_width(state, sigma),
        sigma,
        floored,
    })
}

/// Per-step entropy of the first `count` states.
pub fn entropy_series(states: &StateMatrix, count: usize, cfg: &EntropyConfig) -> Result<Vec<StateEntropy>> {
    cfg.validate()?;
    let count = count.min(states.n_samples());
    match cfg.sigma_mode {
        SigmaMode::PerState => (0..count)
            .map(|n| instantaneous_state_entropy(states.state(n), cfg))
            .collect(),
        SigmaMode::Trajectory => {
            if states.n_nodes() < 2 {
                return Err(Error::Config("state entropy needs at least 2 components".into()));
            }
            let (sigma, floored) = kernel_width(sample_std(states.values_from(0).iter()), cfg);
            Ok((0..count)
                .map(|n| StateEntropy {
                    value: state_entropy_with_width(states.state(n), sigma),
                    sigma,
                    floored,
                })
                .collect())
        }
    }
}

/// Mean entropy over prediction steps `1..=fh_index`; `None` when
/// `fh_index` is zero or no states are available.
pub fn average_state_entropy(states: &StateMatrix, fh_index: usize, cfg: &EntropyConfig) -> Result<Option<f64>> {
    let series = entropy_series(states, fh_index, cfg)?;
    Ok(mean_of(series.iter().map(|e| e.value)))
}

pub(crate) fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let ma = ra.iter().sum::<f64>() / ra.len() as f64;
    let mb = rb.iter().sum::<f64>() / rb.len() as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{ActivationKind, ActivationSpec};

    struct Parabola;

    impl Activation for Parabola {
        fn value(&self, x: f64) -> f64 {
            0.5 * x * x
        }
    }

    #[test]
    fn constant_samples_fill_one_bin() {
        let h = collect_histogram(&[0.0; 50], 10).unwrap();
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.total, 50);
        assert!(h.bin_edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn uniform_grid_fills_bins_evenly() {
        let samples: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
        let h = collect_histogram(&samples, 10).unwrap();
        for c in &h.counts {
            assert!((*c as i64 - 100).abs() <= 1, "{:?}", h.counts);
        }
        let mass: f64 = h.probabilities().sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_errors() {
        assert!(collect_histogram(&[], 10).is_err());
        assert!(collect_histogram(&[1.0, 2.0], 1).is_err());
        assert!(collect_histogram(&[1.0, f64::NAN], 4).is_err());
    }

    #[test]
    fn curvature_examples() {
        let leaky = ActivationSpec::new(ActivationKind::LeakyRelu).with_bound(None);
        assert!(pointwise_curvature(&leaky, 10.0).abs() < 1e-5);
        assert!(pointwise_curvature(&ActivationSpec::shifted_tanh(0.0), 0.0).abs() < 1e-4);
        assert!((pointwise_curvature(&Parabola, 0.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn weighted_curvature_examples() {
        let samples: Vec<f64> = (0..500).map(|i| i as f64 * 0.01 - 2.0).collect();
        let h = collect_histogram(&samples, 20).unwrap();
        let leaky = ActivationSpec::new(ActivationKind::LeakyRelu);
        // Linear everywhere except at 0, which is never a bin center here.
        assert!(weighted_curvature(&leaky, &h) < 1e-6);

        let point = collect_histogram(&[0.7; 10], 5).unwrap();
        let sw = ActivationSpec::swish(0.6);
        let k = weighted_curvature(&sw, &point);
        let center = point.bin_centers().nth(2).unwrap();
        assert!((k - pointwise_curvature(&sw, center)).abs() < 1e-12);
        assert!((center - 0.7).abs() < 1e-9);
    }

    #[test]
    fn entropy_of_equal_components() {
        let s = 0.37;
        let state = vec![1.5; 12];
        let ise = state_entropy_with_width(&state, s);
        assert!((ise - ((2.0 * PI).sqrt() * s).ln()).abs() < 1e-10);

        let e = instantaneous_state_entropy(&state, &EntropyConfig::default()).unwrap();
        assert!(e.floored);
        assert_eq!(e.sigma, SIGMA_FLOOR);
    }

    #[test]
    fn entropy_two_components_hand_sum() {
        let d = 0.8;
        let sigma = 0.5;
        let kernel = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma);
        let want = -(0.25 * (2.0 * kernel(0.0) + 2.0 * kernel(d))).ln();
        assert!((state_entropy_with_width(&[0.0, d], sigma) - want).abs() < 1e-12);
    }

    #[test]
    fn entropy_scaling_identity() {
        let cfg = EntropyConfig::default();
        let r: Vec<f64> = (0..40).map(|i| (i as f64 * 0.77).sin() * 0.4).collect();
        let base = instantaneous_state_entropy(&r, &cfg).unwrap().value;
        for c in [0.1, 2.0, 37.0] {
            let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
            let got = instantaneous_state_entropy(&scaled, &cfg).unwrap().value;
            assert!((got - (base + f64::ln(c))).abs() < 1e-8);
        }
    }

    #[test]
    fn entropy_grows_as_states_spread() {
        let cfg = EntropyConfig::default();
        // Kernel width fixed by the final spread so only the layout changes.
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let sigma = cfg.sigma_factor * sample_std(grid.iter());
        let mut prev = f64::NEG_INFINITY;
        for step in 0..=10 {
            let t = step as f64 / 10.0;
            let state: Vec<f64> = grid.iter().map(|g| 4.5 + t * (g - 4.5)).collect();
            let ise = state_entropy_with_width(&state, sigma);
            assert!(ise > prev, "step {step}");
            prev = ise;
        }
    }

    #[test]
    fn entropy_is_permutation_invariant() {
        let cfg = EntropyConfig::default();
        let r: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64 * 0.1).collect();
        let mut p = r.clone();
        p.reverse();
        p.swap(3, 17);
        let a = instantaneous_state_entropy(&r, &cfg).unwrap().value;
        let b = instantaneous_state_entropy(&p, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn average_entropy() {
        let cfg = EntropyConfig::default();
        let col: Vec<f64> = (0..6).map(|i| i as f64 * 0.3).collect();
        let mut data = Vec::new();
        for _ in 0..4 {
            data.extend_from_slice(&col);
        }
        let states = StateMatrix::from_columns(nalgebra::DMatrix::from_vec(6, 4, data));
        let single = instantaneous_state_entropy(&col, &cfg).unwrap().value;
        assert_eq!(average_state_entropy(&states, 4, &cfg).unwrap(), Some(single));
        assert_eq!(average_state_entropy(&states, 1, &cfg).unwrap(), Some(single));
        assert_eq!(average_state_entropy(&states, 0, &cfg).unwrap(), None);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
    }
}
