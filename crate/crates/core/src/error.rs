use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("missing seeds: {0}")]
    MissingSeeds(String),
    #[error("degenerate seeds: {0}")]
    DegenerateSeeds(String),
    #[error("superpixel graph is disconnected: {0}")]
    DisconnectedGraph(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNonConvergence { iterations: usize, residual: f64 },
    #[error("bistochastization did not converge after {iterations} iterations (max relative change {change:.3e})")]
    NonConvergence { iterations: usize, change: f64 },
    #[error("ground truth has no foreground pixels")]
    EmptyGroundTruth,
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptImage(_) => "CorruptImage",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::MissingSeeds(_) => "MissingSeeds",
            Error::DegenerateSeeds(_) => "DegenerateSeeds",
            Error::DisconnectedGraph(_) => "DisconnectedGraph",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::SingularSystem(_) => "SingularSystem",
            Error::CgNonConvergence { .. } => "CgNonConvergence",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::EmptyGroundTruth => "EmptyGroundTruth",
            Error::Config(_) => "InvalidConfig",
            Error::Io(_) => "Io",
        }
    }
}
