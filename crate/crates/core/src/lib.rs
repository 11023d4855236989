//! Information-density bounds and variable-length stop-feedback decoding for
//! the scalar Gauss–Markov fading channel `y_k = h_k·x_k + z_k`.
//!
//! - [`linalg`]: AR(1) covariance algebra and the sequential conditional
//!   output density.
//! - [`quadrature`]: Gaussian expectations by Gauss–Hermite with an adaptive
//!   Gauss–Kronrod fallback.
//! - [`channel`]: seeded fading, noise, codebooks and traces.
//! - [`bounds`]: the lower bound ψ and upper bound φ with their penalties.
//! - [`oracle`]: brute-force estimators for validation at small `n`.
//! - [`decoder`]: threshold stopping rule and Monte Carlo campaigns.
//! - [`tuner`]: grid search over the reference parameters.
//! - [`harness`]: configuration and the batch commands.

pub mod bounds;
pub mod channel;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod quadrature;
pub mod stats;
pub mod tuner;

pub use error::{Error, Result};
