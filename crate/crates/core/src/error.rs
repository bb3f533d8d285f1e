use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid grid, exhaustion, ball or task parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Coefficient field violates ellipticity or finiteness.
    #[error("coefficient error at {coord:?}: {message}")]
    Coefficient { coord: Vec<f64>, message: String },

    /// Field or node does not belong to the domain it is used with.
    #[error("domain error: {0}")]
    Domain(String),

    /// Solver breakdown or a violated numerical tolerance.
    #[error("numerical error: {message} ({diagnostics})")]
    Numerical { message: String, diagnostics: String },

    /// Spectral shift at or above the principal eigenvalue.
    #[error("spectral error: shift {lambda} is not below the principal eigenvalue {principal}")]
    Spectral { lambda: f64, principal: f64 },

    /// Operation applied outside its stated precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Invariant that can only fail through a discretization bug.
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            diagnostics: diagnostics.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
