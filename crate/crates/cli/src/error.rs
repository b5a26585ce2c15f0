use std::path::{Path, PathBuf};

use gmrf_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{0}")]
    NotCertified(String),
}

/// Process exit codes, one per error class.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const GRAPH: u8 = 3;
    pub const GRID: u8 = 4;
    pub const PARAMETER: u8 = 5;
    pub const MISSING_KERNEL: u8 = 6;
    pub const NOT_PD: u8 = 7;
    pub const NUMERIC: u8 = 8;
    pub const INFERENCE: u8 = 9;
    pub const BENCH: u8 = 10;
    pub const IO: u8 = 11;
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => exit::USAGE,
            Self::Io { .. } | Self::Format { .. } => exit::IO,
            Self::NotCertified(_) => exit::NOT_PD,
            Self::Core(e) => match e {
                Error::NonPositiveStep
                | Error::DegenerateDomain { .. }
                | Error::InvalidGrid(_)
                | Error::IndexOutOfRange { .. }
                | Error::NonPositiveRadius => exit::GRID,
                Error::CycleDetected | Error::SelfEdge(_) | Error::MalformedLine { .. } | Error::UnknownField(_) => exit::GRAPH,
                Error::NegativeDistance(_) | Error::ZeroDelta | Error::NonPositiveR | Error::InvalidParameter(_) => {
                    exit::PARAMETER
                }
                Error::MissingKernel { .. } => exit::MISSING_KERNEL,
                Error::CholeskyFailure(_) | Error::RegularizationExhausted { .. } | Error::PdFailure(_) | Error::NonPdBlock(_) => {
                    exit::NOT_PD
                }
                Error::AsymmetricInput { .. } | Error::ShapeMismatch { .. } | Error::SingularSystem => exit::NUMERIC,
                Error::IndexOverlap(_) | Error::InsufficientSamples(_) | Error::EmptyTestSet => exit::INFERENCE,
                Error::ScenarioUnsupported(_) | Error::InsufficientPoints { .. } => exit::BENCH,
            },
        }
    }
}
