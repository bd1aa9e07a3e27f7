//! One LSTM step and the linear readout.

use crate::error::{Error, Result};
use crate::model::{ModelParams, GATE_CELL, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};

/// Gate activations and states retained for backpropagation.
#[derive(Debug, Clone)]
pub struct GateCache {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Standard four-gate LSTM cell: sigmoid input/forget/output gates, tanh
/// candidate and output squashing, no peepholes.
pub fn lstm_step(
    z: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &ModelParams,
) -> Result<GateCache> {
    let hd = params.config.hidden_dim;
    if z.len() != params.config.z_dim() {
        return Err(Error::shape(format!(
            "lstm input length {} != pb_dim + input_dim = {}",
            z.len(),
            params.config.z_dim()
        )));
    }
    if h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::shape(format!(
            "lstm state lengths (h {}, c {}) != hidden_dim {hd}",
            h_prev.len(),
            c_prev.len()
        )));
    }

    let mut pre = [
        params.b[GATE_INPUT].clone(),
        params.b[GATE_FORGET].clone(),
        params.b[GATE_CELL].clone(),
        params.b[GATE_OUTPUT].clone(),
    ];
    for (gate, pre_gate) in pre.iter_mut().enumerate() {
        params.w[gate].mul_vec_add(z, pre_gate);
        params.u[gate].mul_vec_add(h_prev, pre_gate);
    }

    let i: Vec<f64> = pre[GATE_INPUT].iter().map(|&a| sigmoid(a)).collect();
    let f: Vec<f64> = pre[GATE_FORGET].iter().map(|&a| sigmoid(a)).collect();
    let g: Vec<f64> = pre[GATE_CELL].iter().map(|&a| a.tanh()).collect();
    let o: Vec<f64> = pre[GATE_OUTPUT].iter().map(|&a| sigmoid(a)).collect();

    let mut c = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for k in 0..hd {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }

    Ok(GateCache {
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    })
}

/// Affine readout `x_hat = W_out h + b_out`, no output nonlinearity.
pub fn output_project(h: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    if h.len() != params.config.hidden_dim {
        return Err(Error::shape(format!(
            "readout input length {} != hidden_dim {}",
            h.len(),
            params.config.hidden_dim
        )));
    }
    let mut out = params.b_out.clone();
    params.w_out.mul_vec_add(h, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn zero_params() -> ModelParams {
        ModelParams::zeroed(
            ModelConfig {
                input_dim: 2,
                pb_dim: 1,
                hidden_dim: 3,
                deterministic: false,
                beta: 0.0,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn all_zero_params_give_zero_states() {
        // Gates sit at 0.5, but the tanh candidate is 0, so c and h stay 0.
        let p = zero_params();
        let out = lstm_step(&[0.3, -0.1, 0.7], &[0.0; 3], &[0.0; 3], &p).unwrap();
        assert!(out.c.iter().all(|&v| v == 0.0));
        assert!(out.h.iter().all(|&v| v == 0.0));
        assert!(out.i.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        let mut p = zero_params();
        p.b[GATE_FORGET].iter_mut().for_each(|v| *v = 10.0);
        let c_prev = [1.0, -2.0, 0.5];
        let out = lstm_step(&[0.0; 3], &[0.0; 3], &c_prev, &p).unwrap();
        for (got, want) in out.c.iter().zip(c_prev.iter()) {
            assert!((got - want).abs() < 1e-4, "c {got} vs {want}");
        }
    }

    #[test]
    fn readout_reduces_to_bias() {
        let mut p = zero_params();
        p.b_out = vec![0.25, -0.5];
        let x = output_project(&[1.0, 2.0, 3.0], &p).unwrap();
        assert_eq!(x, vec![0.25, -0.5]);
        let x0 = output_project(&[0.0; 3], &p).unwrap();
        assert_eq!(x0, vec![0.25, -0.5]);
    }

    #[test]
    fn identity_block_readout_copies_hidden() {
        let mut p = zero_params();
        p.w_out.set(0, 0, 1.0);
        p.w_out.set(1, 1, 1.0);
        let x = output_project(&[1.0, 2.0, 3.0], &p).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn shape_errors() {
        let p = zero_params();
        assert!(lstm_step(&[0.0; 2], &[0.0; 3], &[0.0; 3], &p).is_err());
        assert!(lstm_step(&[0.0; 3], &[0.0; 2], &[0.0; 3], &p).is_err());
        assert!(output_project(&[0.0; 2], &p).is_err());
    }
}
