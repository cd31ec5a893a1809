use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter set, scenario or request.
    #[error("configuration error: {0}")]
    Config(String),

    /// A function was called outside its domain (negative current, non-positive power, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A state variable became non-finite or the implicit solve failed.
    #[error("numerical divergence in `{channel}` at t = {time:.6} s")]
    Divergence { channel: String, time: f64 },

    /// A reference that the hardware cannot physically reach.
    #[error("infeasible reference: {0}")]
    InfeasibleReference(String),

    /// Boost or current limit reached while running in strict mode.
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Parse { .. } | Error::Io(_) => 1,
            Error::Divergence { .. } => 2,
            Error::InfeasibleReference(_) | Error::Constraint(_) => 3,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
