use std::io;
use std::path::{Path, PathBuf};

/// Failures of the command-line workflows, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] hfrm_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// 2 for usage and configuration problems, 3 for data and file problems,
    /// 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } | Error::Data(_) => 3,
            Error::Numeric(_) => 4,
            Error::Core(e) => match e {
                hfrm_core::Error::NonFinite(_) => 4,
                hfrm_core::Error::Config(_) | hfrm_core::Error::Param(_) => 2,
                _ => 3,
            },
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}
