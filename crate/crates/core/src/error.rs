use thiserror::Error;

/// Errors raised by the library.
///
/// The variants map onto the CLI exit codes: `Domain` and `Config` are
/// user mistakes (exit 2), everything else is a numerical failure (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("underpowered: {0}")]
    Underpowered(String),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

impl Error {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config { .. } => 2,
            _ => 3,
        }
    }
}
