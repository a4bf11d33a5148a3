use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{kind} topology needs at least {min} workers, got {n}")]
    TopologyTooSmall { kind: &'static str, min: usize, n: usize },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid mixing matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not symmetric: max |A_ij - A_ji| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    #[error("mixing matrix fails validation: {0}")]
    ValidationFailed(String),

    #[error("stepsize violates the precondition 1 - 24*C2*gamma^2*L^2 > 0 (C3 = {c3})")]
    StepsizeTooLarge { c3: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state is not in consensus: columns differ by up to {spread:e}")]
    NotConsensus { spread: f64 },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
