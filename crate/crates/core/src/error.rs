use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a trial failure originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    Reservoir,
    Drive,
    Fit,
    Predict,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Data => "data generation",
            Stage::Reservoir => "reservoir construction",
            Stage::Drive => "driven run",
            Stage::Fit => "readout fit",
            Stage::Predict => "autonomous prediction",
            Stage::Metrics => "metrics",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("Lorenz integration blew up at step {step}")]
    Integration { step: usize },
    #[error("reservoir state became non-finite at step {step}")]
    ReservoirBlowUp { step: usize },
    #[error("adjacency spectral radius stayed below 1e-9 after {attempts} draws")]
    DegenerateAdjacency { attempts: usize },
    #[error("readout fit failed: {0}")]
    Fit(String),
    #[error("trial failed during {stage}: {source}")]
    Trial {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Clone for Error {
    fn clone(&self) -> Self {
        match self {
            Error::Config(m) => Error::Config(m.clone()),
            Error::Dimension(m) => Error::Dimension(m.clone()),
            Error::Empty(m) => Error::Empty(m),
            Error::NonFinite(m) => Error::NonFinite(m.clone()),
            Error::Integration { step } => Error::Integration { step: *step },
            Error::ReservoirBlowUp { step } => Error::ReservoirBlowUp { step: *step },
            Error::DegenerateAdjacency { attempts } => Error::DegenerateAdjacency { attempts: *attempts },
            Error::Fit(m) => Error::Fit(m.clone()),
            Error::Trial { stage, source } => Error::Trial {
                stage: *stage,
                source: source.clone(),
            },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Trial {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Integration { .. }
            | Error::ReservoirBlowUp { .. }
            | Error::DegenerateAdjacency { .. }
            | Error::Fit(_)
            | Error::NonFinite(_) => true,
            Error::Trial { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
