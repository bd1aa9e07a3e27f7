//! Sequence learning with stochastic parametric biases.
//!
//! This crate implements a recurrent sequence model in which each training
//! sequence owns a small Gaussian latent vector (a "parametric bias", PB).
//! The PB is sampled once per rollout via the reparameterization trick,
//! concatenated with the model's previous output, and fed through an LSTM
//! and a linear readout in closed loop. Training jointly fits the network
//! weights and the per-sequence (mu, sigma) by minimizing reconstruction
//! error plus a beta-weighted KL term against a unit Gaussian prior.
//! Recognition of a new sequence runs the loop the other way: weights stay
//! frozen while (mu, sigma) are optimized to minimize prediction error on
//! an observed prefix.
//!
//! Module map:
//!
//! - [`numerics`] — matrices, seeded random streams, Adam, Pearson r, PCA
//! - [`model`] — the network itself: reparameterized PB, LSTM recurrence,
//!   closed-loop generation, and hand-derived backpropagation through time
//! - [`training`] — losses and the full-batch training loop
//! - [`recognition`] — prediction-error minimization over (mu, sigma) with
//!   warm starts and the early-update rule
//! - [`dataset`] — CSV ingestion, normalization, synthetic data
//! - [`analysis`] — density curves, PB PCA, correlation landscapes, and
//!   loss reports serialized as CSV plus a JSON sidecar

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod model;
pub mod numerics;
pub mod recognition;
pub mod testutil;
pub mod training;

pub use error::{DatasetError, Error, Result};
