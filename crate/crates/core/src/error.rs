use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("outside numerical domain: {0}")]
    Domain(String),
    #[error("degenerate spectrum: eigenvalue gap {gap:.3e} below tolerance")]
    Degenerate { gap: f64 },
    #[error("diagonalization failed: {0}")]
    Diagonalization(String),
    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },
    #[error("optimization failed: {message}")]
    Optimization {
        message: String,
        trace: Vec<(f64, f64)>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Convergence,
    Domain,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Geometry(_) | Error::Config(_) => ErrorKind::Config,
            Error::Quadrature { .. } | Error::Optimization { .. } | Error::Diagonalization(_) => {
                ErrorKind::Convergence
            }
            Error::Domain(_) | Error::Degenerate { .. } => ErrorKind::Domain,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
