use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] rbhmr::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 configuration, 3 solver failure, 4 validation failure.
    pub fn exit_code(&self) -> i32 {
        use rbhmr::Error as E;
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Csv { .. } => 2,
            Error::Validation(_) => 4,
            Error::Core(e) => match e {
                E::Config(_) | E::InvalidInput(_) | E::Parse { .. } | E::Io { .. } => 2,
                E::Validation(_) | E::Version { .. } => 4,
                _ => 3,
            },
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
