use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spectral parameter a = {re}{im:+}i is not in (C \\ R) ∪ (-m, m) for m = {m}")]
    InvalidSpectralParameter { re: f64, im: f64, m: f64 },

    #[error("branch of sqrt(m^2 - a^2) has zero real part")]
    DegenerateBranch,

    #[error("kernel evaluated at |x| = {norm:e}, below the singular-point guard")]
    SingularPoint { norm: f64 },

    #[error("invalid potential profile: {0}")]
    InvalidProfile(String),

    #[error("squeezing scale epsilon = {epsilon} must satisfy 0 < epsilon <= eta = {eta}")]
    InvalidEpsilon { epsilon: f64, eta: f64 },

    #[error("K_V is not contractive (HS norm {hs_norm:.6}) and 1 ∓ K^2 is ill-conditioned (cond {condition:e})")]
    NonContractive { hs_norm: f64, condition: f64 },

    #[error("point lies on or too close to the surface (distance {distance:e}, guard {guard:e})")]
    PointTooCloseToSurface { distance: f64, guard: f64 },

    #[error("point is not on the surface (residual {residual:e})")]
    OffSurface { residual: f64 },

    #[error("shifted quadrature points collide (separation {separation:e})")]
    DegenerateQuadrature { separation: f64 },

    #[error("dense operator of dimension {dim} exceeds the cap {cap}; lower N or M")]
    DenseTooLarge { dim: usize, cap: usize },

    #[error("coupling lambda = {lambda} is critical for the {kind} shell")]
    CriticalCoupling { lambda: f64, kind: &'static str },

    #[error("coupling lambda = {lambda} is too close to the critical value (|lambda| = 2)")]
    NearCriticalCoupling { lambda: f64 },

    #[error("boundary operator is numerically singular (cond {condition:e})")]
    SingularBoundaryInverse { condition: f64 },

    #[error("singular linear system")]
    SingularMatrix,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
