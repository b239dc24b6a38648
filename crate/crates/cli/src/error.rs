use hypent_core::{AnalysisError, CurveError, MapError, PartitionError, SpectralError};
use thiserror::Error;

/// Failure modes of a run. Each maps to its own process exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("cap exceeded: {0}")]
    Cap(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const ASSERTION: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const CAP: i32 = 4;
    pub const CERTIFICATION: i32 = 5;
    pub const NO_CONVERGENCE: i32 = 6;
    pub const IO: i32 = 7;
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => exit::USAGE,
            RunError::Config(_) => exit::CONFIG,
            RunError::Cap(_) => exit::CAP,
            RunError::Certification(_) => exit::CERTIFICATION,
            RunError::NoConvergence(_) => exit::NO_CONVERGENCE,
            RunError::Io(_) => exit::IO,
        }
    }
}

impl From<MapError> for RunError {
    fn from(e: MapError) -> Self {
        match e {
            MapError::NotHyperbolic { .. } | MapError::NotTransversal { .. } | MapError::CertificationFailed { .. } => {
                RunError::Certification(e.to_string())
            }
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<PartitionError> for RunError {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::CapExceeded { .. } => RunError::Cap(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<SpectralError> for RunError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NoConvergence { .. } => RunError::NoConvergence(e.to_string()),
            SpectralError::Partition(p) => p.into(),
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<AnalysisError> for RunError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Budget(_) => RunError::Cap(e.to_string()),
            AnalysisError::Partition(p) => p.into(),
            AnalysisError::Spectral(s) => s.into(),
            AnalysisError::InvalidInput(_) => RunError::Config(e.to_string()),
        }
    }
}

impl From<CurveError> for RunError {
    fn from(e: CurveError) -> Self {
        RunError::Config(e.to_string())
    }
}
