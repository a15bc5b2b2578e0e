//! Optimal-transport pseudo-label assignment for semi-supervised semantic
//! segmentation.
//!
//! The crate is organised around the data flow of a training step:
//!
//! - [`transport`]: pixel-to-class cost matrices, the Sinkhorn-Knopp solver
//!   for entropy-regularized transport and an exact transportation-simplex
//!   oracle used for verification.
//! - [`pixel`]: confidence-gated pixel pseudo-labels and the pixel-based
//!   losses, with analytic gradients with respect to logits.
//! - [`query`]: the query-based (mask classification) branch: semantic
//!   aggregation, rectified pseudo pairs, Hungarian matching and the
//!   set-prediction losses.
//! - [`metrics`]: GLCM contrast and PNG compression ratio for ranking image
//!   corpora by high-frequency content.
//! - [`harness`]: a deterministic desk-scale teacher/student training loop on
//!   procedurally generated shapes, used to compare OT assignment against
//!   plain argmax pseudo-labels.

pub mod error;
pub mod harness;
pub mod imaging;
pub mod matrix;
pub mod metrics;
pub mod pixel;
pub mod query;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use matrix::{Matrix, ProbMatrix};

/// Probabilities are clamped to this floor before taking logarithms.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;
