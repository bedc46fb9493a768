use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("symbol sequence does not cover the requested window: {0}")]
    Coverage(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value appeared during an iterative computation. The cost
    /// trace collected so far is attached.
    #[error("numerical error: {message}")]
    Numerical { message: String, trace: Vec<f64> },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
