use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (asymmetry {0:.3e})")]
    NonSymmetricMatrix(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular (|det| = {0:.3e})")]
    SingularMatrix(f64),
    #[error("monomial has xi-degree {0}, expected 2")]
    BadDegree(u32),
    #[error("dilation factor must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("invalid phase point: {0}")]
    InvalidPoint(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step size underflow at t = {0}")]
    StepSizeUnderflow(f64),
    #[error("requested time span exceeds max_time ({0})")]
    MaxTimeExceeded(f64),
    #[error("derivative evaluation produced a non-finite value at t = {0}")]
    DerivativeEvaluationFailed(f64),
    #[error("point is off the level set (|H - E| = {0:.3e})")]
    LevelSetViolation(f64),
    #[error("conformal factor is not positive ({0})")]
    NonPositiveMu(f64),

    #[error("no boundary hit within max_time")]
    NoHitWithinMaxTime,
    #[error("ray hits the boundary tangentially (<dρ, H_ξ> = {0:.3e})")]
    TangentialHit(f64),
    #[error("no boundary chart covers the point")]
    NoChartCovers,
    #[error("unknown boundary chart {0}")]
    UnknownChart(usize),
    #[error("glancing: the energy equation has no transversal root")]
    NoTransversalSolution,
    #[error("no root of the energy equation on the requested branch")]
    NoRoot,
    #[error("two roots are equally close to the seed")]
    AmbiguousBranch,

    #[error("newton iteration diverged ({0})")]
    NewtonDiverged(String),
    #[error("conjugate point: |det d exp| = {0:.3e}")]
    ConjugatePoint(f64),
    #[error("ray is trapped")]
    Trapped,

    #[error("inverse chart failed: {0}")]
    InverseChartFailure(String),
    #[error("jacobian is singular")]
    SingularJacobian,
    #[error("mixed hessian of the generating function is singular")]
    SingularMixedHessian,
    #[error("tangent vector is not transversal to the boundary")]
    TangentialVector,
    #[error("pulled-back hamiltonian is not fiberwise convex (min eigenvalue {0:.3e})")]
    NotConvexOnImage(f64),
    #[error("not a Minkowski norm: {0}")]
    NotMinkowskiNorm(String),

    #[error("config: {0}")]
    ConfigParse(String),
    #[error("expression: {0}")]
    Expression(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
