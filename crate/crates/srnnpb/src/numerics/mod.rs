//! Dense linear algebra, seeded random streams, the Adam optimizer, and
//! statistical helpers used by every other module.
//!
//! Everything here is a pure function of explicit state: safe to call from
//! multiple threads on disjoint state.

mod adam;
mod matrix;
mod rng;
mod stats;

pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use matrix::Matrix;
pub use rng::RngStream;
pub use stats::{pca_fit, pearson_correlation, Correlation, PcaBasis};
