use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants are grouped by how the CLI maps them to exit codes: anything that
/// stems from bad user input (`Validation`, `Config`, `Lookup`) exits 1,
/// everything else exits 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument or input violated a documented precondition.
    #[error("validation: {0}")]
    Validation(String),

    /// A configuration file or key is malformed or unknown.
    #[error("config: {0}")]
    Config(String),

    /// A keyed lookup (e.g. an external agent score) failed.
    #[error("lookup: no score for image '{0}'")]
    Lookup(PathBuf),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image: {path}: {message}")]
    Image { path: PathBuf, message: String },

    /// Checkpoint file failed its magic-header or version check.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Training aborted (e.g. non-finite loss); carries a diagnostic dump.
    #[error("training: {0}")]
    Training(String),

    /// A numeric routine could not produce a defined result.
    #[error("numeric: {0}")]
    Numeric(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code the CLI should use for this error: 1 for user mistakes,
    /// 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) | Error::Lookup(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
