use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;

use crate::commands::load_tagged;
use crate::config::{load_file_config, Resolved};
use crate::{usage, CliResult};
use srnnpb::analysis::{
    format_mean_std, recognition_summary_report, recognition_trial_report, Provenance,
};
use srnnpb::dataset::load_sequences;
use srnnpb::recognition::{run_recognition_experiment, InitMode, TrialOutcome};

#[derive(Debug, Args)]
pub struct RecognizeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    /// Directory of target sequence CSVs.
    #[arg(long)]
    pub targets: PathBuf,

    /// baseline | learned | random | all
    #[arg(long, default_value = "learned")]
    pub init: String,

    #[arg(long)]
    pub trials: Option<usize>,

    #[arg(long)]
    pub iters: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub observed_fraction: Option<f64>,

    #[arg(long)]
    pub candidates: Option<usize>,

    #[arg(long)]
    pub presearch_sigma: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub paper_defaults: bool,

    /// Also write one per-iteration trace CSV per (mode, pattern, trial).
    #[arg(long)]
    pub traces: bool,

    #[arg(long, default_value = "recognition")]
    pub out_dir: PathBuf,
}

pub fn run(args: RecognizeArgs) -> CliResult<()> {
    let (params, _, ckpt_id) = load_tagged(&args.ckpt)?;

    let mut resolved = Resolved::default();
    if let Some(path) = &args.config {
        let file = load_file_config(path)?;
        resolved.apply_file(&file);
    }
    if args.paper_defaults {
        resolved.apply_paper_defaults();
    }
    let mut cfg = resolved.recognition;
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.iters {
        cfg.iterations = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.observed_fraction {
        cfg.observed_fraction = v;
    }
    if let Some(v) = args.candidates {
        cfg.random_candidates = v;
    }
    if let Some(v) = args.presearch_sigma {
        cfg.presearch_sigma = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }

    let modes: Vec<InitMode> = match args.init.as_str() {
        "all" => vec![InitMode::Baseline, InitMode::Learned, InitMode::Random],
        other => vec![other.parse::<InitMode>()?],
    };

    let targets = load_sequences(&args.targets)?;
    if targets.input_dim() != params.config.input_dim {
        return Err(usage(format!(
            "targets have {} dimensions, model expects {}",
            targets.input_dim(),
            params.config.input_dim
        )));
    }

    let outcomes = run_recognition_experiment(&params, &targets.sequences, &cfg, &modes)?;

    let provenance = Provenance::new(
        ckpt_id,
        cfg.seed,
        serde_json::to_value(&cfg).unwrap_or_default(),
    );
    let trials = recognition_trial_report(&outcomes, provenance.clone());
    let summary = recognition_summary_report(&outcomes, provenance);
    let (trials_csv, _) = trials.write_with_sidecar(&args.out_dir)?;
    let (summary_csv, _) = summary.write_with_sidecar(&args.out_dir)?;

    if args.traces {
        write_traces(&outcomes, &args.out_dir, params.config.pb_dim)?;
    }

    for row in &summary.rows {
        let mode = match row[0] as usize {
            0 => "baseline",
            1 => "learned",
            _ => "random",
        };
        println!(
            "{mode}: reconstruction {}  prediction {}",
            format_mean_std(row[1], row[2]),
            format_mean_std(row[3], row[4]),
        );
    }
    println!("per-trial report: {}", trials_csv.display());
    println!("summary report: {}", summary_csv.display());
    Ok(())
}

/// Trace CSV columns: s, mu..., sigma..., pb..., recon_loss, l_min, fired.
fn write_traces(outcomes: &[TrialOutcome], dir: &PathBuf, pb_dim: usize) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(srnnpb::Error::Io)?;
    for o in outcomes {
        let mut text = String::from("s");
        for j in 0..pb_dim {
            text.push_str(&format!(",mu_{j}"));
        }
        for j in 0..pb_dim {
            text.push_str(&format!(",sigma_{j}"));
        }
        for j in 0..pb_dim {
            text.push_str(&format!(",pb_{j}"));
        }
        text.push_str(",recon_loss,l_min,early_update\n");
        for rec in &o.result.trace {
            text.push_str(&rec.iteration.to_string());
            for v in rec.mu.iter().chain(rec.sigma.iter()).chain(rec.pb.iter()) {
                text.push_str(&format!(",{v}"));
            }
            text.push_str(&format!(
                ",{},{},{}\n",
                rec.recon_loss,
                rec.l_min,
                u8::from(rec.early_update_fired)
            ));
        }
        let name = format!(
            "trace-{}-p{:02}-t{:02}.csv",
            o.init_mode.label(),
            o.pattern,
            o.trial
        );
        let mut f = std::fs::File::create(dir.join(name)).map_err(srnnpb::Error::Io)?;
        f.write_all(text.as_bytes()).map_err(srnnpb::Error::Io)?;
    }
    Ok(())
}
