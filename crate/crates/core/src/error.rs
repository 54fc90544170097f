use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mode sum not converged: {0}")]
    Convergence(String),
    #[error("mode {family}({m},{n}) sits exactly at cutoff; the guide response is singular")]
    AtCutoff { family: &'static str, m: u32, n: u32 },
    #[error("atom pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("linear system is near-singular (reciprocal condition {rcond:.3e})")]
    NearSingular { rcond: f64 },
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("{failed} of {total} Monte Carlo trials failed (limit 1%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl Error {
    pub(crate) fn pair(i: usize, j: usize, source: Error) -> Self {
        Error::Pair { i, j, source: Box::new(source) }
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::LinearAlgebra(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
