//! Reparameterized PB sampling and closed-loop sequence generation.

use crate::error::{Error, Result};
use crate::model::cell::{lstm_step, output_project, GateCache};
use crate::model::ModelParams;
use crate::numerics::Matrix;

/// PB = mu + sigma ⊙ epsilon.
pub fn reparameterize(mu: &[f64], sigma: &[f64], epsilon: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != sigma.len() || mu.len() != epsilon.len() {
        return Err(Error::shape(format!(
            "reparameterize lengths: mu {}, sigma {}, epsilon {}",
            mu.len(),
            sigma.len(),
            epsilon.len()
        )));
    }
    Ok(mu
        .iter()
        .zip(sigma.iter().zip(epsilon.iter()))
        .map(|(m, (s, e))| m + s * e)
        .collect())
}

/// The noise that produced a sampled PB, kept so gradients can reach
/// (mu, ln sigma) through the sampling step.
#[derive(Debug, Clone)]
pub struct Noise {
    pub epsilon: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Everything one timestep stores for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub z: Vec<f64>,
    pub gates: GateCache,
    pub xhat: Vec<f64>,
}

/// Per-timestep activations of one rollout, plus the PB that drove it.
/// `noise` is present only when the PB came from a reparameterized sample.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pb: Vec<f64>,
    pub noise: Option<Noise>,
    pub steps: Vec<StepCache>,
    pub hidden_dim: usize,
    pub input_dim: usize,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Closed-loop rollout: initial input and LSTM states are zeroed, and for
/// t >= 1 the model consumes `[PB; x_hat_{t-1}]`. The PB is held constant
/// over all timesteps; generation consumes no randomness.
pub fn generate_closed_loop(
    params: &ModelParams,
    pb: &[f64],
    t_len: usize,
) -> Result<(Matrix, ForwardCache)> {
    if pb.len() != params.config.pb_dim {
        return Err(Error::shape(format!(
            "pb length {} != pb_dim {}",
            pb.len(),
            params.config.pb_dim
        )));
    }
    let hd = params.config.hidden_dim;
    let d = params.config.input_dim;

    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut x_prev = vec![0.0; d];
    let mut steps = Vec::with_capacity(t_len);
    let mut seq = Vec::with_capacity(t_len * d);

    for _ in 0..t_len {
        let mut z = Vec::with_capacity(pb.len() + d);
        z.extend_from_slice(pb);
        z.extend_from_slice(&x_prev);
        let gates = lstm_step(&z, &h, &c, params)?;
        let xhat = output_project(&gates.h, params)?;
        h.copy_from_slice(&gates.h);
        c.copy_from_slice(&gates.c);
        seq.extend_from_slice(&xhat);
        x_prev.copy_from_slice(&xhat);
        steps.push(StepCache { z, gates, xhat });
    }

    let cache = ForwardCache {
        pb: pb.to_vec(),
        noise: None,
        steps,
        hidden_dim: hd,
        input_dim: d,
    };
    Ok((Matrix::from_vec(t_len, d, seq)?, cache))
}

/// Sample the PB (or take mu directly in deterministic mode) and roll out.
/// The cache records epsilon and sigma so a later backward pass can produce
/// d_mu and d_log_sigma.
pub fn generate_with_noise(
    params: &ModelParams,
    mu: &[f64],
    sigma: &[f64],
    epsilon: &[f64],
    t_len: usize,
) -> Result<(Matrix, ForwardCache)> {
    if params.config.deterministic {
        return generate_closed_loop(params, mu, t_len);
    }
    let pb = reparameterize(mu, sigma, epsilon)?;
    let (seq, mut cache) = generate_closed_loop(params, &pb, t_len)?;
    cache.noise = Some(Noise {
        epsilon: epsilon.to_vec(),
        sigma: sigma.to_vec(),
    });
    Ok((seq, cache))
}
