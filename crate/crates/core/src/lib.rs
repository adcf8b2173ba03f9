//! Exponential certainty equivalents in scaled trinomial markets.
//!
//! The crate covers three views of the same hedging problem:
//!
//! - [`lattice`]: exact dynamic programming on the n-step trinomial tree
//!   (primal and dual recursions, a brute-force path enumerator, and the
//!   value of arbitrary Markovian hedges and martingale-measure policies);
//! - [`pde`]: an explicit monotone solver for the limiting HJB equation
//!   `v_t + K(x² v_xx) = 0` in log-price coordinates;
//! - [`hedge`] and [`limits`]: the delta-hedging strategy extracted from
//!   the PDE, Monte Carlo P&L, entropy-penalised volatility-control lower
//!   bounds, and the convergence harness that ties everything together.
//!
//! All numerical routines are deterministic. Parallel sections merge
//! results in a fixed order so outputs do not depend on the thread count.

pub mod error;
pub mod hedge;
pub mod lattice;
pub mod limits;
pub mod model;
pub mod pde;
pub mod svg;

pub use error::{Error, Result};
pub use model::payoff::{Growth, MarkovianPayoff, PathFunctional, Payoff, PayoffSpec};
pub use model::ModelParams;
