use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Theorem-check failures are not errors; they are reported as verdicts in the
/// corresponding report types. Variants here signal misuse or breakdown.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrontError {
    #[error("unsupported kernel family: {0}")]
    UnsupportedFamily(String),

    #[error("kernel tail mass {tail:.3e} still above tolerance at radius cap {cap}")]
    HeavyTail { tail: f64, cap: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid spacing mismatch: field h = {field}, kernel h = {kernel}")]
    SpacingMismatch { field: f64, kernel: f64 },

    #[error("window of {nodes} nodes is narrower than the kernel stencil ({stencil} nodes)")]
    WindowTooNarrow { nodes: usize, stencil: usize },

    #[error("rate r = {r} outside the declared moment range |r| <= {r_max}")]
    MomentOutOfRange { r: f64, r_max: f64 },

    #[error("no positive root of g(c) below r_max = {r_max} (c_min = {c_min})")]
    NoDecayRoot { c_min: f64, r_max: f64 },

    #[error("iteration order {n} exceeds cap {cap}")]
    OrderCap { n: usize, cap: usize },

    #[error("state u = {u} outside guard range [-1, 3]")]
    GuardRange { u: f64 },

    #[error("time step {dt} exceeds stability budget {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },

    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },

    #[error("front left the window at t = {t}")]
    FrontLost { t: f64 },

    #[error("level {level} not bracketed by the field")]
    NotBracketed { level: f64 },

    #[error("field is not monotone nonincreasing (rise {rise:.3e} at node {index})")]
    NotMonotone { index: usize, rise: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quenching: profile collapsed below the ignition level at t = {t}")]
    Quenching { t: f64 },

    #[error("bracket search failed: {0}")]
    Bracket(String),

    #[error("derivative {value:.3e} below steepness floor {floor:.1e}")]
    SteepnessFloor { value: f64, floor: f64 },

    #[error("tail fit: {0}")]
    TailFit(String),

    #[error("interval [{lo}, {hi}] outside the window [{x_min}, {x_max}]")]
    OutsideWindow {
        lo: f64,
        hi: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("no iteration order up to {cap} makes the iterated kernel positive on the interval")]
    NoPositiveOrder { cap: usize },

    #[error("alpha = {alpha} is inadmissible: {reason}")]
    InadmissibleAlpha { alpha: f64, reason: String },

    #[error("degenerate steepness constant {value:.3e}")]
    DegenerateSteepness { value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, FrontError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> FrontError {
    FrontError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
