use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension n = {n} must exceed 2s = {two_s}")]
    DimensionTooLow { n: usize, two_s: f64 },
    #[error("fractional order s = {0} must lie in the open interval (1/2, 1)")]
    OrderOutOfRange(f64),
    #[error("gradient exponent q = {q} must exceed the critical exponent p* = {p_star}")]
    SubcriticalExponent { q: f64, p_star: f64 },
    #[error("order alpha = {alpha} must lie in (0, {n})")]
    AlphaOutOfRange { alpha: f64, n: usize },
    #[error("kernel evaluated at its singular point x = 0")]
    SingularPoint,
    #[error("density has a negative value {0}")]
    NegativeDensity(f64),
    #[error("test function is not negligible at the box boundary (relative amplitude {0:e})")]
    BoundaryLeak(f64),
    #[error("target set is empty")]
    EmptySet,
    #[error("{0}")]
    NotConverged(String),
    #[error("measure has zero total mass")]
    ZeroMeasure,
    #[error("theta = {0} must lie in (0, 1)")]
    ThetaOutOfRange(f64),
    #[error("measure is not admissible: Wolff ratio {c1hat:e} exceeds the limit {limit:e}; rescale it first")]
    NotAdmissible { c1hat: f64, limit: f64 },
    #[error("Picard iteration diverged at iteration {0}")]
    Diverged(usize),
    #[error("exponent {0} out of range")]
    KappaOutOfRange(f64),
    #[error("fitting annulus contains no usable grid points")]
    AnnulusEmpty,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
