use std::path::PathBuf;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("no complete image/scribble/gt triplets under {0}")]
    EmptyDataset(PathBuf),
    #[error("cannot read directory {path}: {source}")]
    UnreadableDirectory {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Core(#[from] geoseg::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::EmptyDataset(_) => "EmptyDataset",
            HarnessError::UnreadableDirectory { .. } => "UnreadableDirectory",
            HarnessError::InvalidParameter(_) => "InvalidParameter",
            HarnessError::Core(e) => e.code(),
            HarnessError::Io(_) => "Io",
        }
    }
}
