//! The stochastic PB network: reparameterized latent sampling, LSTM
//! recurrence, linear readout, closed-loop generation, and hand-derived
//! backpropagation through time.

mod backward;
mod cell;
mod generate;

pub use backward::{backward, Gradients};
pub use cell::{lstm_step, output_project, GateCache};
pub use generate::{
    generate_closed_loop, generate_with_noise, reparameterize, ForwardCache, Noise, StepCache,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Gate indices into the per-gate weight arrays.
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CELL: usize = 2;
pub const GATE_OUTPUT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Data dimensionality per timestep.
    pub input_dim: usize,
    /// Size of the parametric-bias vector.
    pub pb_dim: usize,
    /// LSTM hidden units.
    pub hidden_dim: usize,
    /// When set, PB = mu exactly: no sampling, no KL term.
    pub deterministic: bool,
    /// Weight on the KL regularizer.
    pub beta: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.pb_dim < 1 || self.hidden_dim < 1 {
            return Err(Error::invalid(format!(
                "all dimensions must be >= 1 (input {}, pb {}, hidden {})",
                self.input_dim, self.pb_dim, self.hidden_dim
            )));
        }
        if self.beta < 0.0 || self.beta.is_nan() {
            return Err(Error::invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Length of the concatenated LSTM input `[PB; x_prev]`.
    pub fn z_dim(&self) -> usize {
        self.pb_dim + self.input_dim
    }
}

/// All learnable parameters: per-gate LSTM weights over the concatenated
/// input and the recurrent state, the linear readout, and the per-sequence
/// PB distribution parameters. Sigma is stored as ln(sigma) so that
/// unconstrained gradient updates keep sigma strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Input weights per gate `[i, f, g, o]`, each `hidden x z_dim`.
    pub w: [Matrix; 4],
    /// Recurrent weights per gate, each `hidden x hidden`.
    pub u: [Matrix; 4],
    /// One shared bias per gate.
    pub b: [Vec<f64>; 4],
    /// Readout, `input_dim x hidden`.
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    /// Per-sequence PB means, `N x pb_dim`.
    pub pb_mu: Matrix,
    /// Per-sequence ln(sigma), `N x pb_dim`.
    pub pb_log_sigma: Matrix,
}

impl ModelParams {
    /// All-zero parameters (useful in tests and as an allocation template).
    pub fn zeroed(config: ModelConfig, n_sequences: usize) -> Result<Self> {
        config.validate()?;
        let z = config.z_dim();
        let h = config.hidden_dim;
        let d = config.input_dim;
        Ok(ModelParams {
            w: std::array::from_fn(|_| Matrix::zeros(h, z)),
            u: std::array::from_fn(|_| Matrix::zeros(h, h)),
            b: std::array::from_fn(|_| vec![0.0; h]),
            w_out: Matrix::zeros(d, h),
            b_out: vec![0.0; d],
            pb_mu: Matrix::zeros(n_sequences, config.pb_dim),
            pb_log_sigma: Matrix::zeros(n_sequences, config.pb_dim),
            config,
        })
    }

    /// Fresh parameters: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    /// from the given stream, forget-gate bias 1.0, all other biases 0,
    /// mu = 0 and ln(sigma) = 0 so sigma = 1.
    pub fn init(config: ModelConfig, n_sequences: usize, rng: &mut RngStream) -> Result<Self> {
        let mut p = ModelParams::zeroed(config, n_sequences)?;
        let z = p.config.z_dim();
        let h = p.config.hidden_dim;
        for g in 0..4 {
            fill_uniform(&mut p.w[g], z, rng);
            fill_uniform(&mut p.u[g], h, rng);
        }
        fill_uniform(&mut p.w_out, h, rng);
        p.b[GATE_FORGET].iter_mut().for_each(|v| *v = 1.0);
        Ok(p)
    }

    pub fn n_sequences(&self) -> usize {
        self.pb_mu.rows()
    }

    /// Sigma row for one sequence, exponentiated from the stored ln(sigma).
    pub fn sigma_row(&self, seq: usize) -> Vec<f64> {
        self.pb_log_sigma.row(seq).iter().map(|v| v.exp()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().all(Matrix::all_finite)
            && self.u.iter().all(Matrix::all_finite)
            && self.b.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.w_out.all_finite()
            && self.b_out.iter().all(|v| v.is_finite())
            && self.pb_mu.all_finite()
            && self.pb_log_sigma.all_finite()
    }

    /// Total number of scalar parameters in the canonical flat layout.
    pub fn flat_len(&self) -> usize {
        let gates: usize = (0..4).map(|g| self.w[g].len() + self.u[g].len() + self.b[g].len()).sum();
        gates + self.w_out.len() + self.b_out.len() + self.pb_mu.len() + self.pb_log_sigma.len()
    }

    /// Canonical flat layout:
    /// `[w_i, u_i, b_i, w_f, u_f, b_f, w_g, u_g, b_g, w_o, u_o, b_o,
    ///   w_out, b_out, pb_mu, pb_log_sigma]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for g in 0..4 {
            out.extend_from_slice(self.w[g].data());
            out.extend_from_slice(self.u[g].data());
            out.extend_from_slice(&self.b[g]);
        }
        out.extend_from_slice(self.w_out.data());
        out.extend_from_slice(&self.b_out);
        out.extend_from_slice(self.pb_mu.data());
        out.extend_from_slice(self.pb_log_sigma.data());
        out
    }

    /// Overwrite all parameters from the canonical flat layout.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::shape(format!(
                "flat vector length {} does not match parameter count {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut at = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[at..at + dst.len()]);
            at += dst.len();
        };
        for g in 0..4 {
            take(self.w[g].data_mut());
            take(self.u[g].data_mut());
            take(&mut self.b[g]);
        }
        take(self.w_out.data_mut());
        take(&mut self.b_out);
        take(self.pb_mu.data_mut());
        take(self.pb_log_sigma.data_mut());
        Ok(())
    }

    /// Flat index of the first `pb_mu` entry (mu and ln-sigma blocks sit at
    /// the tail of the flat layout).
    pub fn flat_mu_offset(&self) -> usize {
        self.flat_len() - self.pb_mu.len() - self.pb_log_sigma.len()
    }
}

fn fill_uniform(m: &mut Matrix, fan_in: usize, rng: &mut RngStream) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in m.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
}
