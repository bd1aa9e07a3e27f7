//! Loss computation and the training loop.
//!
//! One "epoch" is full batch: gradients are accumulated over all sequences
//! (ascending index, serial-equivalent even when the per-sequence passes run
//! in parallel), then a single Adam step updates the network weights and the
//! per-sequence (mu, ln sigma) jointly through one flat parameter view.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SequenceDataset;
use crate::error::{Error, Result};
use crate::model::{backward, generate_with_noise, ModelConfig, ModelParams};
use crate::numerics::{AdamState, Matrix, RngStream, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};

/// Stream label for weight initialization.
pub const STREAM_INIT: u64 = 0;
/// Stream label for the per-epoch noise draws.
pub const STREAM_TRAIN: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Accumulate over all sequences before stepping (the default). When
    /// false, one Adam step is taken after each sequence, ascending index.
    pub full_batch: bool,
    /// Checkpoint cadence hint for callers that persist; 0 disables.
    pub checkpoint_every: usize,
    /// Optional global-norm gradient clip; off by default.
    pub grad_clip: Option<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: 1e-3,
            seed: 0,
            full_batch: true,
            checkpoint_every: 0,
            grad_clip: None,
            adam_beta1: DEFAULT_BETA1,
            adam_beta2: DEFAULT_BETA2,
            adam_epsilon: DEFAULT_EPSILON,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Reconstruction, KL, and their weighted sum. `total` always equals
/// `recon + beta * kl` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

pub fn total_loss(recon: f64, kl: f64, beta: f64) -> LossBreakdown {
    LossBreakdown {
        recon,
        kl,
        total: recon + beta * kl,
    }
}

/// Summed squared error over timesteps and dimensions, averaged over
/// sequences only.
pub fn reconstruction_loss(targets: &[Matrix], predictions: &[Matrix]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::shape(format!(
            "{} targets vs {} predictions",
            targets.len(),
            predictions.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::InsufficientData {
            context: "reconstruction loss of zero sequences".into(),
        });
    }
    let mut sum = 0.0;
    for (i, (t, p)) in targets.iter().zip(predictions.iter()).enumerate() {
        if t.rows() != p.rows() || t.cols() != p.cols() {
            return Err(Error::shape(format!(
                "sequence {i}: target {}x{} vs prediction {}x{}",
                t.rows(),
                t.cols(),
                p.rows(),
                p.cols()
            )));
        }
        sum += sequence_sq_error(t, p);
    }
    Ok(sum / targets.len() as f64)
}

pub(crate) fn sequence_sq_error(a: &Matrix, b: &Matrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Closed-form KL divergence of per-sequence Gaussians against the unit
/// prior: (1/2N) sum over sequences and dimensions of
/// mu^2 + sigma^2 - 1 - ln sigma^2.
pub fn kl_divergence(mu: &Matrix, log_sigma: &Matrix) -> Result<f64> {
    if mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols() {
        return Err(Error::shape(format!(
            "mu {}x{} vs log_sigma {}x{}",
            mu.rows(),
            mu.cols(),
            log_sigma.rows(),
            log_sigma.cols()
        )));
    }
    if !mu.all_finite() || !log_sigma.all_finite() {
        return Err(Error::NonFinite {
            context: "kl_divergence inputs".into(),
        });
    }
    let n = mu.rows().max(1) as f64;
    let sum: f64 = mu
        .data()
        .iter()
        .zip(log_sigma.data().iter())
        .map(|(m, ls)| {
            let s2 = (2.0 * ls).exp();
            m * m + s2 - 1.0 - 2.0 * ls
        })
        .sum();
    Ok(sum / (2.0 * n))
}

/// One full forward/backward sweep under the given noise draws. Returns the
/// flat gradient of the total loss and the loss breakdown, both computed at
/// the current parameters.
pub fn epoch_forward_backward(
    params: &ModelParams,
    sequences: &[Matrix],
    epsilons: &[Vec<f64>],
) -> Result<(Vec<f64>, LossBreakdown)> {
    let n = sequences.len();
    let passes: Vec<Result<(f64, crate::model::Gradients)>> = sequences
        .par_iter()
        .enumerate()
        .map(|(i, target)| {
            let mu = params.pb_mu.row(i).to_vec();
            let sigma = params.sigma_row(i);
            let (seq, cache) =
                generate_with_noise(params, &mu, &sigma, &epsilons[i], target.rows())?;
            let mut d_out = Matrix::zeros(target.rows(), target.cols());
            let scale = 2.0 / n as f64;
            for ((dst, a), b) in d_out
                .data_mut()
                .iter_mut()
                .zip(seq.data().iter())
                .zip(target.data().iter())
            {
                *dst = scale * (a - b);
            }
            let grads = backward(&cache, &d_out, params)?;
            Ok((sequence_sq_error(target, &seq), grads))
        })
        .collect();

    // Serial reduction in ascending sequence order keeps the sum
    // bitwise-identical across worker counts.
    let mut flat = vec![0.0; params.flat_len()];
    let mut recon_sum = 0.0;
    for (i, pass) in passes.into_iter().enumerate() {
        let (sq_err, grads) = pass?;
        recon_sum += sq_err;
        grads.add_into_flat(i, params, &mut flat);
    }
    let recon = recon_sum / n as f64;

    let beta = params.config.beta;
    let kl = if params.config.deterministic {
        0.0
    } else {
        let kl = kl_divergence(&params.pb_mu, &params.pb_log_sigma)?;
        let mu_off = params.flat_mu_offset();
        let ls_off = mu_off + params.pb_mu.len();
        for (k, (m, ls)) in params
            .pb_mu
            .data()
            .iter()
            .zip(params.pb_log_sigma.data().iter())
            .enumerate()
        {
            flat[mu_off + k] += beta * m / n as f64;
            flat[ls_off + k] += beta * ((2.0 * ls).exp() - 1.0) / n as f64;
        }
        kl
    };

    Ok((flat, total_loss(recon, kl, beta)))
}

/// One training epoch: sample noise per sequence, roll out closed loop,
/// accumulate gradients, and apply the optimizer. Returns the loss of the
/// pre-update forward pass. The epoch index is only used in diagnostics.
pub fn train_epoch(
    params: &mut ModelParams,
    adam: &mut AdamState,
    dataset: &SequenceDataset,
    config: &TrainConfig,
    rng: &mut RngStream,
    epoch: usize,
) -> Result<LossBreakdown> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::InsufficientData {
            context: "training dataset is empty".into(),
        });
    }
    if params.n_sequences() != n {
        return Err(Error::shape(format!(
            "model holds {} PB rows but dataset has {n} sequences",
            params.n_sequences()
        )));
    }
    let pb_dim = params.config.pb_dim;
    let epsilons: Vec<Vec<f64>> = if params.config.deterministic {
        vec![Vec::new(); n]
    } else {
        (0..n).map(|_| rng.gaussian(pb_dim)).collect()
    };

    if config.full_batch {
        let (mut flat_grads, loss) = epoch_forward_backward(params, &dataset.sequences, &epsilons)?;
        if !loss.total.is_finite() {
            return Err(Error::DivergedAtEpoch { epoch });
        }
        clip_in_place(&mut flat_grads, config.grad_clip);
        let mut flat = params.to_flat();
        adam.step(&mut flat, &flat_grads, config.learning_rate)?;
        params.set_from_flat(&flat)?;
        Ok(loss)
    } else {
        // Per-sequence stepping: same scaling as the full-batch objective,
        // one optimizer step per sequence in ascending order.
        let beta = params.config.beta;
        let kl = if params.config.deterministic {
            0.0
        } else {
            kl_divergence(&params.pb_mu, &params.pb_log_sigma)?
        };
        let mut recon_sum = 0.0;
        for (i, target) in dataset.sequences.iter().enumerate() {
            let (mut flat_grads, sq_err) =
                single_sequence_gradient(params, i, target, &epsilons[i], n)?;
            recon_sum += sq_err;
            if !sq_err.is_finite() {
                return Err(Error::DivergedAtEpoch { epoch });
            }
            clip_in_place(&mut flat_grads, config.grad_clip);
            let mut flat = params.to_flat();
            adam.step(&mut flat, &flat_grads, config.learning_rate)?;
            params.set_from_flat(&flat)?;
        }
        Ok(total_loss(recon_sum / n as f64, kl, beta))
    }
}

fn single_sequence_gradient(
    params: &ModelParams,
    seq_index: usize,
    target: &Matrix,
    epsilon: &[f64],
    n: usize,
) -> Result<(Vec<f64>, f64)> {
    let mu = params.pb_mu.row(seq_index).to_vec();
    let sigma = params.sigma_row(seq_index);
    let (seq, cache) = generate_with_noise(params, &mu, &sigma, epsilon, target.rows())?;
    let mut d_out = Matrix::zeros(target.rows(), target.cols());
    let scale = 2.0 / n as f64;
    for ((dst, a), b) in d_out
        .data_mut()
        .iter_mut()
        .zip(seq.data().iter())
        .zip(target.data().iter())
    {
        *dst = scale * (a - b);
    }
    let grads = backward(&cache, &d_out, params)?;
    let mut flat = vec![0.0; params.flat_len()];
    grads.add_into_flat(seq_index, params, &mut flat);
    if !params.config.deterministic {
        let beta = params.config.beta;
        let mu_off = params.flat_mu_offset() + seq_index * params.config.pb_dim;
        let ls_off = mu_off + params.pb_mu.len();
        for (k, (m, ls)) in params
            .pb_mu
            .row(seq_index)
            .iter()
            .zip(params.pb_log_sigma.row(seq_index).iter())
            .enumerate()
        {
            flat[mu_off + k] += beta * m / n as f64;
            flat[ls_off + k] += beta * ((2.0 * ls).exp() - 1.0) / n as f64;
        }
    }
    Ok((flat, sequence_sq_error(target, &seq)))
}

fn clip_in_place(grads: &mut [f64], clip: Option<f64>) {
    let Some(max_norm) = clip else { return };
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Train fresh parameters for the configured number of epochs. Weights are
/// initialized from the seed's init stream, mu = 0 and sigma = 1, and the
/// hook fires after every epoch (callers use it for checkpoint cadence).
pub fn train_with_hook(
    dataset: &SequenceDataset,
    model_config: ModelConfig,
    train_config: &TrainConfig,
    mut hook: impl FnMut(usize, &ModelParams, &LossBreakdown) -> Result<()>,
) -> Result<(ModelParams, Vec<LossBreakdown>)> {
    model_config.validate()?;
    train_config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InsufficientData {
            context: "training dataset is empty".into(),
        });
    }
    if dataset.input_dim() != model_config.input_dim {
        return Err(Error::shape(format!(
            "dataset dimensionality {} != model input_dim {}",
            dataset.input_dim(),
            model_config.input_dim
        )));
    }

    let mut init_rng = RngStream::new(train_config.seed, STREAM_INIT);
    let mut params = ModelParams::init(model_config, dataset.len(), &mut init_rng)?;
    let mut adam = AdamState::with_constants(
        params.flat_len(),
        train_config.adam_beta1,
        train_config.adam_beta2,
        train_config.adam_epsilon,
    );
    let mut train_rng = RngStream::new(train_config.seed, STREAM_TRAIN);

    let mut history = Vec::with_capacity(train_config.epochs);
    for epoch in 1..=train_config.epochs {
        let loss = train_epoch(&mut params, &mut adam, dataset, train_config, &mut train_rng, epoch)?;
        hook(epoch, &params, &loss)?;
        history.push(loss);
    }
    Ok((params, history))
}

pub fn train(
    dataset: &SequenceDataset,
    model_config: ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, Vec<LossBreakdown>)> {
    train_with_hook(dataset, model_config, train_config, |_, _, _| Ok(()))
}
