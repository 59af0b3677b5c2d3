use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] raf_core::Error),
    #[error("{}: {source}", path.display())]
    CoreAt { path: PathBuf, source: raf_core::Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {source}", path.display())]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{}: {source}", path.display())]
    Png { path: PathBuf, source: png::EncodingError },
    /// Some items failed under `--strict`; the rest were written.
    #[error("{failed} of {total} items failed")]
    Incomplete { failed: usize, total: usize },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn core_at(path: impl Into<PathBuf>) -> impl FnOnce(raf_core::Error) -> Self {
        let path = path.into();
        move |source| Error::CoreAt { path, source }
    }
}
