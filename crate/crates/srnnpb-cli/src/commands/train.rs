use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;

use crate::checkpoint::{now_unix, save_checkpoint, Provenance};
use crate::config::{load_file_config, Resolved};
use crate::{usage, CliResult};
use srnnpb::dataset::{load_sequences, normalize, NormalizationMode};
use srnnpb::training::{train_with_hook, LossBreakdown};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of per-sequence CSV files.
    #[arg(long)]
    pub data: PathBuf,

    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,

    /// Optional JSON config file (defaults < file < --paper-defaults <
    /// flags).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Apply the reference experiment profile (D_PB=4, 256 hidden units,
    /// 50,000 epochs, learning rate 0.001).
    #[arg(long)]
    pub paper_defaults: bool,

    /// KL weight.
    #[arg(long)]
    pub beta: Option<f64>,

    /// Train the deterministic variant (PB = mu, no sampling, no KL).
    #[arg(long)]
    pub deterministic: bool,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub pb_dim: Option<usize>,

    #[arg(long)]
    pub hidden: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// none | minmax | zscore
    #[arg(long, default_value = "none")]
    pub normalize: String,

    /// Write a checkpoint every N epochs (0 = only at the end).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,

    /// Optional global-norm gradient clip.
    #[arg(long)]
    pub grad_clip: Option<f64>,

    /// One optimizer step per epoch over all sequences (default) or one per
    /// sequence.
    #[arg(long, value_parser = ["full", "per-sequence"], default_value = "full")]
    pub batch: String,

    /// Loss history CSV path (default: <out>.loss.csv).
    #[arg(long)]
    pub loss_history: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let mut resolved = Resolved::default();
    if let Some(path) = &args.config {
        let file = load_file_config(path)?;
        resolved.apply_file(&file);
    }
    if args.paper_defaults {
        resolved.apply_paper_defaults();
    }
    if let Some(v) = args.beta {
        resolved.model.beta = v;
    }
    if args.deterministic {
        resolved.model.deterministic = true;
    }
    if let Some(v) = args.epochs {
        resolved.train.epochs = v;
    }
    if let Some(v) = args.pb_dim {
        resolved.model.pb_dim = v;
    }
    if let Some(v) = args.hidden {
        resolved.model.hidden_dim = v;
    }
    if let Some(v) = args.lr {
        resolved.train.learning_rate = v;
    }
    if let Some(v) = args.seed {
        resolved.train.seed = v;
    }
    if let Some(v) = args.checkpoint_every {
        resolved.train.checkpoint_every = v;
    }
    if let Some(v) = args.grad_clip {
        resolved.train.grad_clip = Some(v);
    }
    resolved.train.full_batch = args.batch == "full";

    let mode: NormalizationMode = args.normalize.parse()?;
    let raw = load_sequences(&args.data)?;
    let dataset = normalize(&raw, mode)?;
    resolved.model.input_dim = dataset.input_dim();

    if resolved.model.beta < 0.0 || resolved.model.beta.is_nan() {
        return Err(usage(format!("beta must be >= 0, got {}", resolved.model.beta)));
    }
    if resolved.train.learning_rate <= 0.0 {
        return Err(usage("learning rate must be > 0".to_string()));
    }

    let seed = resolved.train.seed;
    let cadence = resolved.train.checkpoint_every;
    let total_epochs = resolved.train.epochs;
    let normalization = dataset.normalization.clone();
    let names = dataset.names.clone();
    let lengths = dataset.lengths();
    let dim_names = dataset.dim_names.clone();

    let make_provenance = |epochs_completed: usize, loss: &LossBreakdown| Provenance {
        seed,
        epochs_completed,
        final_loss: *loss,
        sequence_names: names.clone(),
        sequence_lengths: lengths.clone(),
        dim_names: dim_names.clone(),
        created_unix: now_unix(),
    };

    let mut history_rows: Vec<(usize, LossBreakdown)> = Vec::with_capacity(total_epochs);
    let (params, history) = train_with_hook(
        &dataset,
        resolved.model.clone(),
        &resolved.train,
        |epoch, params, loss| {
            history_rows.push((epoch, *loss));
            if cadence > 0 && epoch % cadence == 0 && epoch != total_epochs {
                let prov = make_provenance(epoch, loss);
                save_checkpoint(params, normalization.as_ref(), &prov, &args.out)
                    .map_err(|e| srnnpb::Error::invalid(e.to_string()))?;
            }
            Ok(())
        },
    )?;

    let final_loss = history.last().expect("at least one epoch");
    let prov = make_provenance(total_epochs, final_loss);
    save_checkpoint(&params, normalization.as_ref(), &prov, &args.out)?;

    let history_path = args
        .loss_history
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", args.out.display())));
    let mut out = String::from("epoch,recon,kl,total\n");
    for (epoch, loss) in &history_rows {
        out.push_str(&format!("{epoch},{},{},{}\n", loss.recon, loss.kl, loss.total));
    }
    let mut f = std::fs::File::create(&history_path).map_err(srnnpb::Error::Io)?;
    f.write_all(out.as_bytes()).map_err(srnnpb::Error::Io)?;

    println!(
        "trained {} sequences for {} epochs: recon {:.6e}, kl {:.6e}, total {:.6e}",
        dataset.len(),
        total_epochs,
        final_loss.recon,
        final_loss.kl,
        final_loss.total
    );
    println!("checkpoint: {}", args.out.display());
    println!("loss history: {}", history_path.display());
    Ok(())
}
