use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod run;

#[derive(Parser, Debug)]
#[command(name = "vlrb", version, about = "Quality/cost routing benchmark pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic log, price sheet and embedding file.
    Synth(SynthArgs),
    /// Build the dense store from a JSONL log and a price sheet.
    Ingest(IngestArgs),
    /// Assign every sample to train/dev/test.
    Split(SplitArgs),
    /// Train a router, selecting λ (and k) on the dev split.
    Train(TrainArgs),
    /// Score checkpoints and baselines on the test split.
    Evaluate(EvaluateArgs),
    /// Rank every evaluated router.
    Leaderboard(RunArgs),
    /// Fit the accuracy/cost frontier over the evaluated routers.
    Pareto(RunArgs),
    /// Run the property and oracle checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long, default_value_t = 6)]
    models: usize,
    #[arg(long, default_value_t = 4)]
    datasets: usize,
    /// Strength of the cluster/specialist match in [0, 1].
    #[arg(long, default_value_t = 0.9)]
    affinity: f64,
    #[arg(long, default_value_t = 16)]
    dim_text: usize,
    #[arg(long, default_value_t = 16)]
    dim_image: usize,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    router: String,
    #[arg(long, default_value = "concat")]
    fusion: String,
    /// Train at one λ instead of sweeping the grid.
    #[arg(long, conflicts_with = "lambda_grid")]
    lambda: Option<String>,
    /// Comma-separated λ values, e.g. `0,10,100,inf`.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Neighbor count; swept over 5,10,25,50 when omitted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent training runs, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 5)]
    trials: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Only this checkpoint set; all of them when omitted.
    #[arg(long)]
    router: Option<String>,
    #[arg(long, default_value_t = vlrb::metrics::DEFAULT_BETA)]
    beta: f64,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    BadArgs(String),
    Missing(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(format!("{}: not found", path.display()))
        } else {
            CliError::Validation(format!("{}: {e}", path.display()))
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::BadArgs(_) => 2,
            CliError::Missing(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::BadArgs(_) => "bad_arguments",
            CliError::Missing(_) => "missing_artifact",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::BadArgs(m) | CliError::Missing(m) => m,
        }
    }
}

impl From<vlrb::Error> for CliError {
    fn from(e: vlrb::Error) -> Self {
        match e {
            vlrb::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Missing(io.to_string()),
            e @ (vlrb::Error::InvalidArgument(_) | vlrb::Error::InvalidConfig(_)) => CliError::BadArgs(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

fn fail(e: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": e.kind(), "code": e.code(), "message": e.message() });
    eprintln!("{body}");
    ExitCode::from(e.code())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("VLRB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::BadArgs(format!("VLRB_THREADS must be a positive integer, got `{raw}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::BadArgs(e.to_string().trim_end().to_string())),
    };
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Ingest(a) => commands::ingest(&a),
        Command::Split(a) => commands::split(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Leaderboard(a) => commands::leaderboard(&a),
        Command::Pareto(a) => commands::pareto(&a),
        Command::Verify(a) => commands::verify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
