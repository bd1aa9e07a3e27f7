//! Command-line front end: training, generation, recognition, and analysis
//! over the sequence-learning library, plus the checkpoint format.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! divergence.

pub mod checkpoint;
pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};

use checkpoint::CheckpointError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "srnnpb",
    about = "Sequence learning with stochastic parametric biases",
    version
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: SRNNPB_WORKERS or all
    /// cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a directory of sequence CSVs and write a checkpoint.
    Train(commands::train::TrainArgs),
    /// Generate sequences from a checkpoint in closed loop.
    Generate(commands::generate::GenerateArgs),
    /// Recognize target sequences by prediction-error minimization.
    Recognize(commands::recognize::RecognizeArgs),
    /// Emit analysis reports (density, pca, landscape, reconstruction,
    /// smoothness).
    Analyze(commands::analyze::AnalyzeArgs),
}

/// Errors from command execution, carrying their exit class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Lib(#[from] srnnpb::Error),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(err) => match err {
                srnnpb::Error::InvalidArgument { .. } => EXIT_USAGE,
                srnnpb::Error::DivergedAtEpoch { .. }
                | srnnpb::Error::DivergedAtIteration { .. }
                | srnnpb::Error::NonFinite { .. } => EXIT_DIVERGED,
                _ => EXIT_DATA,
            },
            CliError::Checkpoint(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse and run. Prints a single-line diagnostic to stderr on failure and
/// returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            eprintln!("error: {}", one_line(&e.to_string()));
            return EXIT_USAGE;
        }
    };

    init_workers(cli.workers);

    let outcome = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Generate(args) => commands::generate::run(args),
        Command::Recognize(args) => commands::recognize::run(args),
        Command::Analyze(args) => commands::analyze::run(args),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn one_line(s: &str) -> String {
    s.lines().next().unwrap_or("").to_string()
}

fn init_workers(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("SRNNPB_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // A later call fails once the global pool exists; that is fine for
        // repeated invocations inside one test process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}
