use std::path::PathBuf;

use clap::Args;

use crate::commands::{load_tagged, parse_float_list};
use crate::{usage, CliResult};
use srnnpb::dataset::{write_sequences, SequenceDataset};
use srnnpb::model::{generate_with_noise, ModelParams};
use srnnpb::numerics::RngStream;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    /// Generate from this training sequence's learned PB distribution.
    #[arg(long)]
    pub seq_index: Option<usize>,

    /// Generate from an explicit mu vector, e.g. "--mu 0.2,-0.4".
    #[arg(long)]
    pub mu: Option<String>,

    /// Samples to draw (with sigma-zero they are identical).
    #[arg(long, default_value_t = 1)]
    pub samples: usize,

    /// Use sigma = 0: the rollout comes from mu exactly.
    #[arg(long)]
    pub sigma_zero: bool,

    /// Rollout length (default: the source sequence's training length).
    #[arg(long)]
    pub steps: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "generated")]
    pub out_dir: PathBuf,
}

pub fn run(args: GenerateArgs) -> CliResult<()> {
    let (params, header, _) = load_tagged(&args.ckpt)?;

    let (mu, sigma, label) = resolve_source(&args, &params)?;
    let steps = match args.steps {
        Some(s) => s,
        None => match args.seq_index {
            Some(i) => header.provenance.sequence_lengths.get(i).copied().ok_or_else(|| {
                usage(format!("sequence index {i} out of range for this checkpoint"))
            })?,
            None => return Err(usage("--steps is required with an explicit --mu".to_string())),
        },
    };

    let mut rng = RngStream::new(args.seed, 0);
    let mut sequences = Vec::with_capacity(args.samples);
    let mut names = Vec::with_capacity(args.samples);
    for k in 0..args.samples {
        let (sigma_used, eps) = if args.sigma_zero || params.config.deterministic {
            (vec![0.0; mu.len()], vec![0.0; mu.len()])
        } else {
            (sigma.clone(), rng.gaussian(mu.len()))
        };
        let (seq, _) = generate_with_noise(&params, &mu, &sigma_used, &eps, steps)?;
        sequences.push(seq);
        names.push(format!("gen-{label}-{k:03}"));
    }

    let dataset = SequenceDataset::new(sequences, names, header.provenance.dim_names.clone());
    write_sequences(&dataset, &args.out_dir)?;
    println!(
        "wrote {} sequence(s) of {} steps to {}",
        args.samples,
        steps,
        args.out_dir.display()
    );
    Ok(())
}

fn resolve_source(
    args: &GenerateArgs,
    params: &ModelParams,
) -> CliResult<(Vec<f64>, Vec<f64>, String)> {
    match (&args.seq_index, &args.mu) {
        (Some(i), None) => {
            if *i >= params.n_sequences() {
                return Err(usage(format!(
                    "sequence index {i} out of range ({} sequences)",
                    params.n_sequences()
                )));
            }
            Ok((
                params.pb_mu.row(*i).to_vec(),
                params.sigma_row(*i),
                format!("seq{i}"),
            ))
        }
        (None, Some(text)) => {
            let mu = parse_float_list(text).map_err(usage)?;
            if mu.len() != params.config.pb_dim {
                return Err(usage(format!(
                    "--mu has {} entries, model pb_dim is {}",
                    mu.len(),
                    params.config.pb_dim
                )));
            }
            let sigma = vec![1.0; mu.len()];
            Ok((mu, sigma, "mu".to_string()))
        }
        _ => Err(usage(
            "exactly one of --seq-index or --mu must be given".to_string(),
        )),
    }
}
