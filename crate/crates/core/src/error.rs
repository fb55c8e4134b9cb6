use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("a pulse profile or amplitude bound is required: {0}")]
    MissingProfile(&'static str),

    #[error("Newton iteration stagnated after {iterations} iterations (residual {residual:.3e})")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("no stationary pulse: unfolding parameter {0:.3e} did not vanish")]
    NotStationary(f64),

    #[error("trivial solution")]
    TrivialSolution,

    #[error("half_width too small: tail amplitude {tail:.3e} exceeds {tol:.3e}")]
    HalfWidthTooSmall { tail: f64, tol: f64 },

    #[error("flat inhibitor: integral of |v'|^2 is {0:.3e}")]
    FlatInhibitor(f64),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("non-hyperbolic asymptotics; (H1) violated? (min |Re mu| = {0:.3e})")]
    NonHyperbolic(f64),

    #[error("no crossing here (smallest principal sine {0:.3e})")]
    NoCrossing(f64),

    #[error("irregular crossing at {location}; refine path or perturb (form eigenvalue {eigenvalue:.3e})")]
    IrregularCrossing { location: f64, eigenvalue: f64 },

    #[error("crossings closer than the scan step near {0}; refine the path sampling")]
    UnresolvedCrossings(f64),

    #[error("frame integration failed at x = {x}: step size underflow, try a smaller initial step")]
    StepRejection { x: f64 },

    #[error("isotropy drift {drift:.3e} at x = {x}")]
    IsotropyDrift { x: f64, drift: f64 },

    #[error("(H2) inconsistent with computed crossing at {location} (form eigenvalue {eigenvalue:.3e})")]
    H2Inconsistent { location: f64, eigenvalue: f64 },

    #[error("crossing at scan boundary {0}; increase T_cap")]
    CrossingAtBoundary(f64),

    #[error("crossing at lambda = {0}; raise lambda_max")]
    RaiseLambdaMax(f64),

    #[error("grid too coarse: {0} intervals (need at least 50)")]
    GridTooCoarse(usize),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("triple-index formulas disagree for the Hormander index ({first} vs {second})")]
    HormanderMismatch { first: i64, second: i64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
