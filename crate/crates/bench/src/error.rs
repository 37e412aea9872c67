use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] lambda_family::Error),
    #[error("configuration rejected: {0}")]
    Config(String),
    #[error("incompatible target and family: nu_target + 2(nu_target+d)/(nu_family+d) = {value} must exceed 2")]
    Incompatible { value: f64 },
    #[error("no inputs matched `{0}`")]
    NoInputs(String),
    #[error("bad glob pattern: {0}")]
    Pattern(#[from] glob::PatternError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Io { path, source }
}
