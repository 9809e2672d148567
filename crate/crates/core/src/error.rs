use thiserror::Error;

/// Errors produced anywhere in the propagation pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("ill-conditioned matrix A (condition number {0:.3e} > 1e12)")]
    Conditioning(f64),

    #[error("non-analytic point in subexpression `{subexpr}`: {reason}")]
    NonAnalytic { subexpr: String, reason: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("Taylor table order {have} is below the required order {need}")]
    OrderTooLow { have: usize, need: usize },

    #[error("out of regime: l = floor(g / hbar) = {l} < 3 (g = {g}, hbar = {hbar})")]
    OutOfRegime { l: usize, g: f64, hbar: f64 },

    #[error("integer overflow while computing {0}")]
    Overflow(String),

    #[error("integration failed at t = {last_t}: {reason}")]
    IntegrationFailure { last_t: f64, reason: String },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("grid insufficient: {0}")]
    GridInsufficient(String),

    #[error("wave hit the box boundary (tail mass {tail_mass:.3e}); enlarge the box to at least {suggested_half_width:.4} per axis")]
    BoxBreach {
        tail_mass: f64,
        suggested_half_width: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("schedule misalignment: {0}")]
    Schedule(String),

    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudget(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
