use std::path::PathBuf;

use clap::Args;

use crate::commands::{load_tagged, parse_float_list};
use crate::{usage, CliResult};
use srnnpb::analysis::{
    correlation_landscape, pb_density_curves, pb_pca_projection, reconstruction_report,
    smoothness_metric, CorrelationGridSpec, Provenance,
};
use srnnpb::dataset::load_sequences;
use srnnpb::numerics::RngStream;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    /// density | pca | landscape | reconstruction | smoothness
    #[arg(long)]
    pub kind: String,

    /// Training data directory (required by landscape / reconstruction).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Sequence index for density and landscape reports.
    #[arg(long, default_value_t = 0)]
    pub seq_index: usize,

    /// PB dimensions of the landscape axes, e.g. "0,1".
    #[arg(long, default_value = "0,1")]
    pub dims: String,

    #[arg(long, default_value_t = 20)]
    pub grid_points: usize,

    #[arg(long, default_value_t = 1.0)]
    pub span: f64,

    /// Samples per sequence (pca / reconstruction) or points per curve
    /// (density).
    #[arg(long, default_value_t = 100)]
    pub samples: usize,

    /// Density x range, e.g. "-4,4".
    #[arg(long, default_value = "-4,4")]
    pub x_range: String,

    /// Evaluate the reconstruction report with sigma forced to zero.
    #[arg(long)]
    pub sigma_zero: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "analysis")]
    pub out_dir: PathBuf,
}

pub fn run(args: AnalyzeArgs) -> CliResult<()> {
    let (params, _, ckpt_id) = load_tagged(&args.ckpt)?;
    let provenance = Provenance::new(
        ckpt_id,
        args.seed,
        serde_json::json!({
            "kind": args.kind,
            "seq_index": args.seq_index,
            "grid_points": args.grid_points,
            "span": args.span,
            "samples": args.samples,
        }),
    );

    let report = match args.kind.as_str() {
        "density" => {
            if args.seq_index >= params.n_sequences() {
                return Err(usage(format!(
                    "sequence index {} out of range ({} sequences)",
                    args.seq_index,
                    params.n_sequences()
                )));
            }
            let range = parse_float_list(&args.x_range).map_err(usage)?;
            if range.len() != 2 || range[0] >= range[1] {
                return Err(usage("--x-range must be \"lo,hi\" with lo < hi".to_string()));
            }
            let mu = params.pb_mu.row(args.seq_index).to_vec();
            let sigma = params.sigma_row(args.seq_index);
            pb_density_curves(&mu, &sigma, (range[0], range[1]), args.samples, provenance)?
        }
        "pca" => {
            let mut rng = RngStream::new(args.seed, 0);
            pb_pca_projection(&params, args.samples, &mut rng, provenance)?
        }
        "landscape" | "smoothness" => {
            let data = args
                .data
                .as_ref()
                .ok_or_else(|| usage("--data is required for landscape analyses".to_string()))?;
            let dataset = load_sequences(data)?;
            let target = dataset
                .sequences
                .get(args.seq_index)
                .ok_or_else(|| usage(format!("sequence index {} out of range", args.seq_index)))?;
            let dims = parse_float_list(&args.dims).map_err(usage)?;
            if dims.len() != 2 {
                return Err(usage("--dims must name two PB dimensions".to_string()));
            }
            let spec = CorrelationGridSpec {
                sequence_index: args.seq_index,
                axis_dims: (dims[0] as usize, dims[1] as usize),
                grid_points: args.grid_points,
                span: args.span,
            };
            let grid = correlation_landscape(&params, target, &spec, provenance)?;
            if args.kind == "smoothness" {
                let value = smoothness_metric(&grid)?;
                println!("smoothness: {value:.6}");
            }
            grid
        }
        "reconstruction" => {
            let data = args.data.as_ref().ok_or_else(|| {
                usage("--data is required for the reconstruction report".to_string())
            })?;
            let dataset = load_sequences(data)?;
            let mut rng = RngStream::new(args.seed, 0);
            let report = reconstruction_report(
                &params,
                &dataset,
                args.samples,
                args.sigma_zero,
                &mut rng,
                provenance,
            )?;
            let (mean, std) = report.column_stats("loss")?;
            println!(
                "reconstruction loss: {}",
                srnnpb::analysis::format_mean_std(mean, std)
            );
            report
        }
        other => {
            return Err(usage(format!(
                "unknown analysis kind '{other}' (density | pca | landscape | reconstruction | smoothness)"
            )))
        }
    };

    let (csv_path, json_path) = report.write_with_sidecar(&args.out_dir)?;
    println!("report: {}", csv_path.display());
    println!("sidecar: {}", json_path.display());
    Ok(())
}
