use thiserror::Error;

/// Errors raised by the pricing, PDE and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The operation does not support this kind of payoff or strategy.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// Requested lattice or path enumeration exceeds the configured cap.
    #[error("size limit exceeded: n = {n} > max_n = {max_n}")]
    SizeLimit { n: usize, max_n: usize },

    /// Explicit time step violates the monotonicity bound.
    #[error("time step {dt} exceeds the stability bound {bound} (dy = {dy})")]
    Cfl { dt: f64, bound: f64, dy: f64 },

    /// Non-finite value produced while stepping the PDE.
    #[error("numerical failure at t = {t}, y = {y}: {what}")]
    Numerical { t: f64, y: f64, what: String },

    /// Strategy evaluated at a spot outside the PDE grid.
    #[error("spot {spot} (log {log_spot}) outside PDE grid [{y_min}, {y_max}]")]
    Coverage {
        spot: f64,
        log_spot: f64,
        y_min: f64,
        y_max: f64,
    },

    /// A line search failed to reach the requested tolerance.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
