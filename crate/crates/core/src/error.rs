use std::path::PathBuf;

use crate::ndiff::NdiffError;
use crate::scene::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
    #[error("invalid scene: {}", join(.0))]
    InvalidScene(Vec<Violation>),
    #[error("invalid ground truth: {}", join(.0))]
    InvalidGroundTruth(Vec<Violation>),
    #[error("invalid forecast: {}", join(.0))]
    InvalidForecast(Vec<Violation>),
    #[error("config: {0}")]
    Config(String),
    #[error("{}line {line}: {message}", source_prefix(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },
    #[error("shape mismatch: {0}")]
    Incompatible(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn source_prefix(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn with_source(self, path: &std::path::Path) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(path.to_path_buf()),
                line,
                message,
            },
            other => other,
        }
    }
}
