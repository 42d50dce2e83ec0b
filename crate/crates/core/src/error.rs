use thiserror::Error;

/// Errors raised by the slit-domain toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("closest-point Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("point at radius {radius} lies outside the domain of radius {domain_radius}")]
    OutOfDomain { radius: f64, domain_radius: f64 },

    #[error("requested jet order {requested} exceeds the supported order {supported}")]
    OrderTooHigh { requested: u32, supported: u32 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("ill-conditioned fit: condition number {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("insufficient resolution: smallest scale has {found} samples, need {required}")]
    InsufficientResolution { found: usize, required: usize },

    #[error("slit mask is degenerate: {0}")]
    MaskDegenerate(String),

    #[error("linear solver stalled at relative residual {residual:e} after {iterations} iterations")]
    SolverStalled { iterations: usize, residual: f64 },

    #[error("half-angle series unresolved: |c_N| = {last:e} exceeds tolerance {tolerance:e}")]
    SeriesUnresolved { last: f64, tolerance: f64 },

    #[error("moment system is singular")]
    SingularMoments,

    #[error("quadrature ball leaves the tubular neighborhood at {0:?}")]
    OutOfChart(Vec<f64>),

    #[error("weight u_n changes sign on the evaluation set")]
    DegenerateWeight,

    #[error("no sign change of a - G on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("several sign changes of a - G found near {roots:?}")]
    MultipleRoots { roots: Vec<f64> },

    #[error("invalid configuration field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
