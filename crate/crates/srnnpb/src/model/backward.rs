//! Backpropagation through time for the closed-loop rollout.
//!
//! Gradients flow along two paths at every timestep: through the LSTM
//! recurrence (h, c) and through the output feedback, because the input at
//! t + 1 contains x_hat_t. Both are accumulated below. The gradient that
//! reaches the PB slice of the input is routed to (mu, ln sigma) via the
//! reparameterization: d_mu = d_pb and d_log_sigma = d_pb ⊙ epsilon ⊙ sigma.

use crate::error::{Error, Result};
use crate::model::{ForwardCache, ModelParams, GATE_CELL, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};
use crate::numerics::Matrix;

/// Gradient of a scalar loss with respect to every model parameter, plus
/// the PB-distribution gradients for the sequence of the pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    pub d_mu: Vec<f64>,
    pub d_log_sigma: Vec<f64>,
}

impl Gradients {
    pub fn zeroed(params: &ModelParams) -> Self {
        let z = params.config.z_dim();
        let h = params.config.hidden_dim;
        let d = params.config.input_dim;
        Gradients {
            w: std::array::from_fn(|_| Matrix::zeros(h, z)),
            u: std::array::from_fn(|_| Matrix::zeros(h, h)),
            b: std::array::from_fn(|_| vec![0.0; h]),
            w_out: Matrix::zeros(d, h),
            b_out: vec![0.0; d],
            d_mu: vec![0.0; params.config.pb_dim],
            d_log_sigma: vec![0.0; params.config.pb_dim],
        }
    }

    pub fn theta_add_assign(&mut self, other: &Gradients) {
        for g in 0..4 {
            self.w[g].add_assign(&other.w[g]);
            self.u[g].add_assign(&other.u[g]);
            for (a, b) in self.b[g].iter_mut().zip(other.b[g].iter()) {
                *a += b;
            }
        }
        self.w_out.add_assign(&other.w_out);
        for (a, b) in self.b_out.iter_mut().zip(other.b_out.iter()) {
            *a += b;
        }
    }

    /// Accumulate this pass into a flat gradient vector laid out like
    /// [`ModelParams::to_flat`], routing d_mu / d_log_sigma to the rows of
    /// the given sequence.
    pub fn add_into_flat(&self, seq_index: usize, params: &ModelParams, flat: &mut [f64]) {
        debug_assert_eq!(flat.len(), params.flat_len());
        let mut at = 0;
        let mut put = |src: &[f64], flat: &mut [f64]| {
            for (dst, s) in flat[at..at + src.len()].iter_mut().zip(src.iter()) {
                *dst += s;
            }
            at += src.len();
        };
        for g in 0..4 {
            put(self.w[g].data(), flat);
            put(self.u[g].data(), flat);
            put(&self.b[g], flat);
        }
        put(self.w_out.data(), flat);
        put(&self.b_out, flat);
        let pb_dim = params.config.pb_dim;
        let mu_at = at + seq_index * pb_dim;
        for (dst, s) in flat[mu_at..mu_at + pb_dim].iter_mut().zip(self.d_mu.iter()) {
            *dst += s;
        }
        let ls_at = at + params.pb_mu.len() + seq_index * pb_dim;
        for (dst, s) in flat[ls_at..ls_at + pb_dim]
            .iter_mut()
            .zip(self.d_log_sigma.iter())
        {
            *dst += s;
        }
    }
}

/// Exact gradients of a scalar loss given its per-timestep derivative with
/// respect to each emitted x_hat row.
pub fn backward(
    cache: &ForwardCache,
    d_output: &Matrix,
    params: &ModelParams,
) -> Result<Gradients> {
    let hd = params.config.hidden_dim;
    let d = params.config.input_dim;
    let pb_dim = params.config.pb_dim;
    if cache.hidden_dim != hd || cache.input_dim != d || cache.pb.len() != pb_dim {
        return Err(Error::shape(
            "forward cache was produced by a model of different shape",
        ));
    }
    if d_output.rows() != cache.len() || d_output.cols() != d {
        return Err(Error::shape(format!(
            "d_output is {}x{}, cache holds {} steps of dim {d}",
            d_output.rows(),
            d_output.cols(),
            cache.len()
        )));
    }

    let mut grads = Gradients::zeroed(params);
    let t_len = cache.len();
    if t_len == 0 {
        return Ok(grads);
    }

    let mut dh_next = vec![0.0; hd]; // recurrent gradient from t + 1
    let mut dc_next = vec![0.0; hd];
    let mut dx_next = vec![0.0; d]; // feedback gradient into x_hat_t from z_{t+1}
    let mut d_pb = vec![0.0; pb_dim];

    let zeros_h = vec![0.0; hd];
    let mut da = [
        vec![0.0; hd],
        vec![0.0; hd],
        vec![0.0; hd],
        vec![0.0; hd],
    ];

    for t in (0..t_len).rev() {
        let step = &cache.steps[t];
        let gates = &step.gates;
        let (h_prev, c_prev) = if t == 0 {
            (&zeros_h[..], &zeros_h[..])
        } else {
            (
                &cache.steps[t - 1].gates.h[..],
                &cache.steps[t - 1].gates.c[..],
            )
        };

        // Readout: x_hat = W_out h + b_out.
        let mut dxhat = d_output.row(t).to_vec();
        for (a, b) in dxhat.iter_mut().zip(dx_next.iter()) {
            *a += b;
        }
        grads.w_out.add_outer(&dxhat, &gates.h);
        for (a, b) in grads.b_out.iter_mut().zip(dxhat.iter()) {
            *a += b;
        }
        let mut dh = dh_next.clone();
        params.w_out.tr_mul_vec_add(&dxhat, &mut dh);

        // Cell.
        let mut dc = vec![0.0; hd];
        for k in 0..hd {
            let tc = gates.tanh_c[k];
            dc[k] = dh[k] * gates.o[k] * (1.0 - tc * tc) + dc_next[k];
            let d_o = dh[k] * tc;
            let d_f = dc[k] * c_prev[k];
            let d_i = dc[k] * gates.g[k];
            let d_g = dc[k] * gates.i[k];
            da[GATE_OUTPUT][k] = d_o * gates.o[k] * (1.0 - gates.o[k]);
            da[GATE_FORGET][k] = d_f * gates.f[k] * (1.0 - gates.f[k]);
            da[GATE_INPUT][k] = d_i * gates.i[k] * (1.0 - gates.i[k]);
            da[GATE_CELL][k] = d_g * (1.0 - gates.g[k] * gates.g[k]);
        }

        let mut dz = vec![0.0; pb_dim + d];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (gate, da_gate) in da.iter().enumerate() {
            grads.w[gate].add_outer(da_gate, &step.z);
            grads.u[gate].add_outer(da_gate, h_prev);
            for (a, b) in grads.b[gate].iter_mut().zip(da_gate.iter()) {
                *a += b;
            }
            params.w[gate].tr_mul_vec_add(da_gate, &mut dz);
            params.u[gate].tr_mul_vec_add(da_gate, &mut dh_next);
        }
        for k in 0..hd {
            dc_next[k] = dc[k] * gates.f[k];
        }

        for (acc, v) in d_pb.iter_mut().zip(dz[..pb_dim].iter()) {
            *acc += v;
        }
        dx_next.copy_from_slice(&dz[pb_dim..]);
        // At t = 0 the remaining dx/dh/dc flow into zeroed constants.
    }

    grads.d_mu = d_pb.clone();
    if let Some(noise) = &cache.noise {
        for (k, d) in d_pb.iter().enumerate() {
            grads.d_log_sigma[k] = d * noise.epsilon[k] * noise.sigma[k];
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_closed_loop, generate_with_noise, ModelConfig};
    use crate::numerics::RngStream;
    use crate::testutil::{finite_difference_gradient, max_relative_error};

    fn tiny_config(deterministic: bool) -> ModelConfig {
        ModelConfig {
            input_dim: 2,
            pb_dim: 2,
            hidden_dim: 3,
            deterministic,
            beta: 1e-3,
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let params =
            ModelParams::init(tiny_config(false), 1, &mut RngStream::new(5, 0)).unwrap();
        let (_, cache) = generate_closed_loop(&params, &[0.2, -0.4], 6).unwrap();
        let d_out = Matrix::zeros(6, 2);
        let grads = backward(&cache, &d_out, &params).unwrap();
        assert!(grads.w_out.data().iter().all(|&v| v == 0.0));
        assert!(grads.d_mu.iter().all(|&v| v == 0.0));
        assert!(grads.w.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn deterministic_mode_has_zero_sigma_gradient() {
        let mut params =
            ModelParams::init(tiny_config(true), 1, &mut RngStream::new(5, 0)).unwrap();
        params.pb_mu.row_mut(0).copy_from_slice(&[0.4, -0.6]);
        let mu = params.pb_mu.row(0).to_vec();
        let sigma = params.sigma_row(0);
        let (seq, cache) = generate_with_noise(&params, &mu, &sigma, &[0.3, 0.7], 5).unwrap();
        let mut d_out = Matrix::zeros(5, 2);
        for (dst, src) in d_out.data_mut().iter_mut().zip(seq.data().iter()) {
            *dst = 2.0 * (src + 0.5);
        }
        let grads = backward(&cache, &d_out, &params).unwrap();
        assert!(grads.d_log_sigma.iter().all(|&v| v == 0.0));
        assert!(grads.d_mu.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn lstm_step_gradient_matches_finite_differences() {
        // Single-step check with random small parameters; the full-rollout
        // check below covers the recurrent and feedback paths.
        let mut rng = RngStream::new(17, 0);
        let params = ModelParams::init(tiny_config(false), 1, &mut rng).unwrap();
        let epsilon = rng.gaussian(2);
        let targets = Matrix::from_vec(1, 2, rng.gaussian(2)).unwrap();
        let report = finite_difference_gradient(&params, 0, &epsilon, &targets, 1e-5);
        assert!(
            report.max_rel_error < 1e-5,
            "single-step relative error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn full_rollout_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(23, 0);
        let params = ModelParams::init(tiny_config(false), 1, &mut rng).unwrap();
        let epsilon = rng.gaussian(2);
        let targets = Matrix::from_vec(5, 2, rng.gaussian(10)).unwrap();
        let report = finite_difference_gradient(&params, 0, &epsilon, &targets, 1e-5);
        assert!(
            report.max_rel_error < 1e-4,
            "worst parameter {} relative error {}",
            report.worst_index,
            report.max_rel_error
        );
    }

    #[test]
    fn reparameterization_gradient_identity() {
        // d_log_sigma must equal d_mu ⊙ epsilon ⊙ sigma.
        let mut rng = RngStream::new(31, 0);
        let mut params = ModelParams::init(tiny_config(false), 1, &mut rng).unwrap();
        params
            .pb_log_sigma
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.3);
        let mu = params.pb_mu.row(0).to_vec();
        let sigma = params.sigma_row(0);
        let epsilon = rng.gaussian(2);
        let (seq, cache) = generate_with_noise(&params, &mu, &sigma, &epsilon, 4).unwrap();
        let mut d_out = Matrix::zeros(4, 2);
        for (dst, src) in d_out.data_mut().iter_mut().zip(seq.data().iter()) {
            *dst = 2.0 * (src + 0.1);
        }
        let grads = backward(&cache, &d_out, &params).unwrap();
        for k in 0..2 {
            let expect = grads.d_mu[k] * epsilon[k] * sigma[k];
            assert!((grads.d_log_sigma[k] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn cache_param_mismatch_is_an_error() {
        let params = ModelParams::init(tiny_config(false), 1, &mut RngStream::new(5, 0)).unwrap();
        let (_, cache) = generate_closed_loop(&params, &[0.1, 0.1], 3).unwrap();
        let mut other_cfg = tiny_config(false);
        other_cfg.hidden_dim = 4;
        let other = ModelParams::init(other_cfg, 1, &mut RngStream::new(5, 0)).unwrap();
        assert!(backward(&cache, &Matrix::zeros(3, 2), &other).is_err());
        assert!(backward(&cache, &Matrix::zeros(2, 2), &params).is_err());
    }

    #[test]
    fn rel_error_helper_behaves() {
        assert!(max_relative_error(1.0, 1.0) < 1e-15);
        assert!(max_relative_error(0.0, 0.0) < 1e-15);
    }
}
