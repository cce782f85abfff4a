//! `potr` command-line tool: synthetic data, training, evaluation,
//! prediction with attention export, and the NAR/AR throughput benchmark.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::UsageError;

#[derive(Parser, Debug)]
#[command(name = "potr", version, about = "Non-autoregressive pose transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every verb accepts.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input dataset (POSE, or CSV with --labels/--joints/--representation).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `key=value` file overriding defaults; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Layout of CSV inputs.
#[derive(Args, Debug, Clone, Default)]
pub struct CsvFlags {
    /// Labels sidecar for CSV input, one integer per sequence.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Joints per frame in CSV input.
    #[arg(long)]
    pub joints: Option<usize>,
    /// positions_3d or rotation_matrices.
    #[arg(long)]
    pub representation: Option<String>,
    #[arg(long)]
    pub frame_rate: Option<f64>,
}

/// Architecture overrides.
#[derive(Args, Debug, Clone, Default)]
pub struct ModelFlags {
    /// linear, gcn_enc, gcn_dec or gcn_full.
    #[arg(long)]
    pub codec: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Observed frames T.
    #[arg(long)]
    pub input_len: Option<usize>,
    /// Predicted frames T'.
    #[arg(long)]
    pub target_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labelled dataset as a POSE file.
    Generate(commands::GenerateArgs),
    /// Train a model; writes a checkpoint and a CSV log into --out.
    Train(commands::TrainArgs),
    /// Score a checkpoint against the zero-velocity baseline.
    Eval(commands::EvalArgs),
    /// Forecast one sequence and export its attention maps.
    Predict(commands::PredictArgs),
    /// Time NAR and AR forward passes.
    Bench(commands::BenchArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(e.downcast_ref::<potr::PotrError>(), Some(potr::PotrError::Config(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
