use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Sparse additive models: two-step group lasso with GIC tuning.
#[derive(Debug, Parser)]
#[command(name = "hdgam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV file and write it as JSON.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Run a simulation scenario and write a metrics table.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    pub data: std::path::PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response: String,
    /// bernoulli, poisson, gamma or gaussian.
    #[arg(long)]
    pub family: String,
    /// Basis functions per feature.
    #[arg(long, default_value_t = 9)]
    pub m: usize,
    /// Spline order (degree + 1).
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 0.0)]
    pub smooth_lambda: f64,
    #[arg(long, default_value_t = 50)]
    pub path_len: usize,
    /// Write the adaptive path with its GIC values to this CSV.
    #[arg(long)]
    pub emit_path: Option<std::path::PathBuf>,
    #[arg(long, default_value = "model.json")]
    pub out: std::path::PathBuf,
    /// Recorded in the model file; fitting itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: std::path::PathBuf,
    #[arg(long)]
    pub data: std::path::PathBuf,
    #[arg(long, default_value = "preds.csv")]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("which").required(true).args(["scenario", "custom"])))]
pub struct SimulateArgs {
    /// ex1-case1, ex1-case2, ex1-case3, ex2-cor03, ex2-cor07, ex3,
    /// ex4-poisson, ex4-gamma or easy.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Free-form scenario: n,p,s,family,t,scale.
    #[arg(long)]
    pub custom: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "table.csv")]
    pub out: std::path::PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("HDGAM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
        {
            log::warn!("could not cap worker threads: {e}");
        }
    }

    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => commands::fit(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::Simulate(args) => commands::simulate(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
