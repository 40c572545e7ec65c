use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature order {0} outside supported range 1..={max}", max = crate::quad1d::MAX_ORDER)]
    InvalidOrder(usize),

    #[error("symmetric tridiagonal eigensolve did not converge for order {0}")]
    EigenNonConvergence(usize),

    #[error("smoothing variance {0} outside (0, 1/2)")]
    InvalidDelta(f64),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("density ratio requested at t = {0}, outside |t| <= {limit}", limit = crate::quad1d::RATIO_LIMIT)]
    RatioOverflow(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("frame is not column-orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),

    #[error(
        "no family of {count} subspaces found after {retries} retries; \
         best pairwise bound reached was {best_bound:.4} (requested {eps_orth})"
    )]
    FamilyInfeasible {
        count: usize,
        accepted: usize,
        retries: usize,
        best_bound: f64,
        eps_orth: f64,
    },

    #[error("instance has no Lebesgue density: {0}")]
    NoDensity(&'static str),

    #[error("statistical query budget of {0} queries exhausted")]
    BudgetExhausted(usize),

    #[error("query '{description}' evaluated to {value}, outside [0, 1]")]
    QueryOutOfRange { description: String, value: f64 },

    #[error("quadrature window too narrow: integrand still {0:e} at the window edge")]
    TailOverflow(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("classifier variant does not support {0}")]
    UnsupportedVariant(&'static str),

    #[error("serialization failed: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
