//! Test support: independent oracles used by unit, integration, and
//! acceptance tests. Nothing here touches the analytic backward path —
//! losses are recomputed through the forward rollout only, so central
//! finite differences stay an independent check on the hand-derived
//! gradients.

use crate::model::{backward, generate_with_noise, ModelParams};
use crate::numerics::{Matrix, RngStream};

/// Loss of one sequence under fixed noise: sum-over-time squared error plus
/// the beta-weighted KL of that sequence's PB row (skipped in deterministic
/// mode). Reads mu and sigma from `params`, so perturbing the flat vector
/// moves the loss through every path including the sampled PB.
pub fn single_pass_loss(
    params: &ModelParams,
    seq_index: usize,
    epsilon: &[f64],
    targets: &Matrix,
) -> f64 {
    let mu = params.pb_mu.row(seq_index).to_vec();
    let sigma = params.sigma_row(seq_index);
    let (seq, _) = generate_with_noise(params, &mu, &sigma, epsilon, targets.rows())
        .expect("forward pass in loss oracle");
    let recon: f64 = seq
        .data()
        .iter()
        .zip(targets.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if params.config.deterministic {
        return recon;
    }
    let kl: f64 = params
        .pb_mu
        .row(seq_index)
        .iter()
        .zip(params.pb_log_sigma.row(seq_index).iter())
        .map(|(m, ls)| {
            let s2 = (2.0 * ls).exp();
            m * m + s2 - 1.0 - 2.0 * ls
        })
        .sum::<f64>()
        * 0.5;
    recon + params.config.beta * kl
}

/// Full-epoch loss under fixed noise draws: mean-over-sequences of the
/// summed squared error, plus beta times the Eq.-style KL over all rows.
pub fn epoch_loss(params: &ModelParams, targets: &[Matrix], epsilons: &[Vec<f64>]) -> f64 {
    let n = targets.len() as f64;
    let mut recon = 0.0;
    for (i, target) in targets.iter().enumerate() {
        let mu = params.pb_mu.row(i).to_vec();
        let sigma = params.sigma_row(i);
        let (seq, _) = generate_with_noise(params, &mu, &sigma, &epsilons[i], target.rows())
            .expect("forward pass in loss oracle");
        recon += seq
            .data()
            .iter()
            .zip(target.data().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    recon /= n;
    if params.config.deterministic {
        return recon;
    }
    let kl: f64 = params
        .pb_mu
        .data()
        .iter()
        .zip(params.pb_log_sigma.data().iter())
        .map(|(m, ls)| {
            let s2 = (2.0 * ls).exp();
            m * m + s2 - 1.0 - 2.0 * ls
        })
        .sum::<f64>()
        / (2.0 * n);
    recon + params.config.beta * kl
}

/// Central finite differences of an arbitrary scalar loss over the flat
/// parameter vector.
pub fn fd_flat_gradient(
    loss: impl Fn(&ModelParams) -> f64,
    params: &ModelParams,
    step: f64,
) -> Vec<f64> {
    let flat = params.to_flat();
    let mut work = params.clone();
    let mut grad = vec![0.0; flat.len()];
    let mut probe = flat.clone();
    for k in 0..flat.len() {
        probe[k] = flat[k] + step;
        work.set_from_flat(&probe).unwrap();
        let up = loss(&work);
        probe[k] = flat[k] - step;
        work.set_from_flat(&probe).unwrap();
        let down = loss(&work);
        probe[k] = flat[k];
        grad[k] = (up - down) / (2.0 * step);
    }
    work.set_from_flat(&flat).unwrap();
    grad
}

/// `|a - b|` scaled by the larger magnitude, floored so that gradients that
/// are numerically zero on both routes compare as equal.
pub fn max_relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compare the analytic gradient of [`single_pass_loss`] against central
/// finite differences over every parameter.
pub fn finite_difference_gradient(
    params: &ModelParams,
    seq_index: usize,
    epsilon: &[f64],
    targets: &Matrix,
    step: f64,
) -> FdReport {
    // Analytic route: backward pass plus the closed-form KL derivative.
    let mu = params.pb_mu.row(seq_index).to_vec();
    let sigma = params.sigma_row(seq_index);
    let (seq, cache) = generate_with_noise(params, &mu, &sigma, epsilon, targets.rows()).unwrap();
    let mut d_out = Matrix::zeros(targets.rows(), targets.cols());
    for ((dst, a), b) in d_out
        .data_mut()
        .iter_mut()
        .zip(seq.data().iter())
        .zip(targets.data().iter())
    {
        *dst = 2.0 * (a - b);
    }
    let mut grads = backward(&cache, &d_out, params).unwrap();
    if !params.config.deterministic {
        let beta = params.config.beta;
        for (k, (m, ls)) in params
            .pb_mu
            .row(seq_index)
            .iter()
            .zip(params.pb_log_sigma.row(seq_index).iter())
            .enumerate()
        {
            grads.d_mu[k] += beta * m;
            grads.d_log_sigma[k] += beta * ((2.0 * ls).exp() - 1.0);
        }
    }

    let mut analytic = vec![0.0; params.flat_len()];
    grads.add_into_flat(seq_index, params, &mut analytic);

    let numeric = fd_flat_gradient(
        |p| single_pass_loss(p, seq_index, epsilon, targets),
        params,
        step,
    );

    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for k in 0..analytic.len() {
        let rel = max_relative_error(analytic[k], numeric[k]);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = k;
        }
    }
    FdReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    }
}

/// Compare the full-epoch analytic gradient (forward/backward over every
/// sequence plus the closed-form KL term) against central finite
/// differences of [`epoch_loss`] over every parameter.
pub fn epoch_fd_report(
    params: &ModelParams,
    targets: &[Matrix],
    epsilons: &[Vec<f64>],
    step: f64,
) -> FdReport {
    let (analytic, _) = crate::training::epoch_forward_backward(params, targets, epsilons)
        .expect("analytic epoch gradient");
    let numeric = fd_flat_gradient(|p| epoch_loss(p, targets, epsilons), params, step);
    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for k in 0..analytic.len() {
        let rel = max_relative_error(analytic[k], numeric[k]);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = k;
        }
    }
    FdReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    }
}

/// Monte Carlo estimate of KL(N(mu, sigma^2) || N(0, I)) with its standard
/// error, by averaging log q(z) - log p(z) over `n` draws.
pub fn mc_kl_estimate(
    mu: &[f64],
    sigma: &[f64],
    n: usize,
    rng: &mut RngStream,
) -> (f64, f64) {
    let d = mu.len();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let mut term = 0.0;
        for j in 0..d {
            let eps: f64 = rng.standard_normal();
            let z = mu[j] + sigma[j] * eps;
            // log q - log p; the (-1/2) ln(2 pi) terms cancel.
            term += -sigma[j].ln() - 0.5 * eps * eps + 0.5 * z * z;
        }
        sum += term;
        sum_sq += term * term;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let stderr = (var / n as f64).sqrt();
    (mean, stderr)
}
