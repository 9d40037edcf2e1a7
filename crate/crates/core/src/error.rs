use thiserror::Error;

use crate::hartree_fock::ScfTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("parameters: {0}")]
    Parameters(String),

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("eigensolver did not converge after {iterations} iterations (last residual {last_residual:.3e} eV)")]
    EigenNotConverged {
        iterations: usize,
        last_residual: f64,
        /// Largest unconverged residual per restart cycle.
        trace: Vec<f64>,
    },

    #[error("factorization: {0}")]
    Factorization(String),

    #[error("rasterization: {0}")]
    Rasterization(String),

    #[error("poisson solver did not converge: relative residual {residual:.3e} after {cycles} cycles")]
    PoissonNotConverged { cycles: usize, residual: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("configuration: {0}")]
    Configuration(String),

    #[error("SCF did not converge after {} iterations", .0.iterations.len())]
    ScfNotConverged(Box<ScfTrace>),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("interrupted: {0}")]
    Interrupted(String),
    #[error("sweep failed: {0}")]
    SweepFailed(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
