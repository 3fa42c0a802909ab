//! Ground-truth Lorenz trajectories.
//!
//! Trajectories start from (1, 1, 1) plus a seeded uniform perturbation in
//! [-0.5, 0.5]^3 and are integrated with classical RK4. A transient is
//! discarded so that every returned sample lies on the attractor.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt_sig;
use crate::seed;

/// Maximal Lyapunov exponent of the Lorenz system at the classical parameters.
pub const LORENZ_LYAPUNOV: f64 = 0.906;

pub type State3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        if [self.sigma, self.rho, self.beta].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("Lorenz parameters must be finite: {self:?}")))
        }
    }
}

#[inline]
pub fn lorenz_derivative(s: &State3, p: &LorenzParams) -> State3 {
    let [x, y, z] = *s;
    [p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z]
}

#[inline]
fn axpy(s: &State3, a: f64, k: &State3) -> State3 {
    [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2]]
}

/// One classical fourth-order Runge-Kutta step of length `dt`.
pub fn rk4_step(s: &State3, dt: f64, p: &LorenzParams) -> Result<State3> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("step must be finite and >= 0, got {dt}")));
    }
    let k1 = lorenz_derivative(s, p);
    let k2 = lorenz_derivative(&axpy(s, 0.5 * dt, &k1), p);
    let k3 = lorenz_derivative(&axpy(s, 0.5 * dt, &k2), p);
    let k4 = lorenz_derivative(&axpy(s, dt, &k3), p);
    let out: State3 = std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Integration { step: 0 })
    }
}

/// Time-sampled 3-D series, either ground truth or a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<State3>,
    tau: f64,
    lyapunov_exponent: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<State3>, tau: f64) -> Result<Self> {
        Self::with_lyapunov(samples, tau, LORENZ_LYAPUNOV)
    }

    pub fn with_lyapunov(samples: Vec<State3>, tau: f64, lyapunov_exponent: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("trajectory samples"));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        if !(lyapunov_exponent > 0.0) {
            return Err(Error::Config(format!(
                "Lyapunov exponent must be positive, got {lyapunov_exponent}"
            )));
        }
        Ok(Self {
            samples,
            tau,
            lyapunov_exponent,
        })
    }

    pub fn samples(&self) -> &[State3] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lyapunov_exponent(&self) -> f64 {
        self.lyapunov_exponent
    }

    /// Sub-range `start..end` as its own trajectory.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Dimension(format!(
                "window {start}..{end} outside trajectory of length {}",
                self.len()
            )));
        }
        Self::with_lyapunov(self.samples[start..end].to_vec(), self.tau, self.lyapunov_exponent)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,y,z")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_sig(i as f64 * self.tau, 15),
                fmt_sig(s[0], 15),
                fmt_sig(s[1], 15),
                fmt_sig(s[2], 15)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }
}

/// Integrates a seeded Lorenz trajectory, one RK4 step per sample.
pub fn generate_trajectory(
    seed: u64,
    n_samples: usize,
    tau: f64,
    transient_steps: usize,
    params: &LorenzParams,
) -> Result<Trajectory> {
    generate_trajectory_substeps(seed, n_samples, tau, transient_steps, params, 1)
}

/// As [`generate_trajectory`], splitting each sampling interval into
/// `substeps` RK4 steps.
pub fn generate_trajectory_substeps(
    seed: u64,
    n_samples: usize,
    tau: f64,
    transient_steps: usize,
    params: &LorenzParams,
    substeps: usize,
) -> Result<Trajectory> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    if substeps == 0 {
        return Err(Error::Config("substeps must be at least 1".into()));
    }
    params.validate()?;

    let mut rng = seed::rng(seed);
    let mut state: State3 = std::array::from_fn(|_| 1.0 + rng.gen_range(-0.5..=0.5));
    let dt = tau / substeps as f64;

    let mut samples = Vec::with_capacity(n_samples);
    for step in 0..transient_steps + n_samples {
        if step >= transient_steps {
            samples.push(state);
        }
        if step + 1 == transient_steps + n_samples {
            break;
        }
        for _ in 0..substeps {
            state = rk4_step(&state, dt, params).map_err(|e| match e {
                Error::Integration { .. } => Error::Integration { step },
                other => other,
            })?;
        }
    }
    Trajectory::new(samples, tau)
}
