//! Monte Carlo machinery for conservative fragmentation chains.
//!
//! A fragmentation chain splits every fragment of size `x` into pieces
//! `x * s_1, x * s_2, ...` where the ratio vector is drawn from a dislocation
//! law and the ratios sum to one (no dust). Fragments are frozen the first
//! time they drop below a threshold `epsilon`; following a uniformly painted
//! point through the cascade turns the `-log`-sizes of its host fragments
//! into a renewal process. This crate simulates both pictures and verifies
//! the limit statements that connect them:
//!
//! * [`dislocation`]: ratio laws and their standing assumptions,
//! * [`fragtree`]: the frozen population of a full fragmentation tree,
//! * [`taglines`]: joint tagged lineages as a partition-valued renewal system,
//! * [`renewal`]: the waiting law pi, the stationary residual law eta, and
//!   the convergence-rate experiment,
//! * [`empirical`]: the empirical measure `gamma_T` and its limit,
//! * [`limits`]: pair functional `V`, fluctuation covariance `K`, and the
//!   pairing combinatorics behind them,
//! * [`harness`]: experiment drivers (law of large numbers, central limit
//!   theorem), goodness-of-fit tests, and quadrature.

pub mod dislocation;
pub mod empirical;
pub mod fragtree;
pub mod harness;
pub mod limits;
pub mod renewal;
pub mod rng;
pub mod taglines;

mod error;

pub use error::{Error, Result};

/// Crate version echoed into experiment reports.
pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
