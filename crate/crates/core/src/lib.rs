//! Critical-point complexity of empirical-risk landscapes of generalized
//! linear models.
//!
//! The crate computes the exponential growth rate of the number of critical
//! points of the losses
//!
//! ```text
//! L1(x) = (1/m) sum_mu phi(xi_mu . x),          x on the unit sphere,
//! L2(x) = (1/2m) sum_mu [phi(xi_mu . x*) - phi(xi_mu . x)]^2,
//! ```
//!
//! in the proportional limit m/n -> alpha > 1, together with desk-scale
//! random-matrix and direct-counting verification of the same quantities.
//!
//! Module map:
//! - [`activations`]: activation functions with analytic derivatives;
//! - [`measures`]: discrete measures, Gauss-Hermite grids, Gibbs tilts;
//! - [`spectral`]: Stieltjes transform of the weighted Wishart spectrum and
//!   its logarithmic potential;
//! - [`annealed`]: annealed complexity solvers (variational functional and
//!   reduced fixed-point system, plus the planted-signal variant);
//! - [`quenched`]: replica-symmetric quenched complexity for L1;
//! - [`montecarlo`]: finite-size Hessian sampling, spectral comparisons and
//!   brute-force critical-point counts.

pub mod activations;
pub mod annealed;
pub mod error;
pub mod measures;
pub mod montecarlo;
pub mod qmc;
pub mod quenched;
pub mod spectral;

pub use activations::Activation;
pub use error::{Error, Result};
pub use measures::DiscreteMeasure;
