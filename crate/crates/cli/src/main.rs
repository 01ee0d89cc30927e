//! `hlora`: discover, plan, verify and analyze LoRA placements for hybrid
//! attention/recurrent models.
//!
//! Exit status is 0 on success, 1 when a verification or analysis fails and
//! 2 for unreadable or invalid input.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "hlora",
    version,
    about = "Component-aware LoRA placement planner and result analyzer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and classify a model, printing the classified descriptor.
    Discover(DiscoverArgs),
    /// Compile placement conditions into target lists and budgets.
    Plan(PlanArgs),
    /// Check an adapter attachment report against a target list.
    Verify(VerifyArgs),
    /// Write the attachment report a correct harness would produce.
    SimulateAttach(SimulateArgs),
    /// Derive deltas, forgetting, efficiency, Pareto fronts, recipes and
    /// bootstrap intervals from evaluation results.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Safetensors header, descriptor document or classified descriptor.
    #[arg(long, env = "HLORA_MODEL")]
    model: PathBuf,
    /// Classification rules (JSON); defaults to the bundled tables.
    #[arg(long, env = "HLORA_RULES")]
    rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiscoverArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output file; stdout when absent.
    #[arg(long, env = "HLORA_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Condition name, or `all` for the six canonical conditions.
    #[arg(long, env = "HLORA_CONDITION", default_value = "all")]
    condition: String,
    #[arg(long, env = "HLORA_RANK", default_value_t = 16)]
    rank: u64,
    #[arg(long, env = "HLORA_ALPHA", default_value_t = 32.0)]
    alpha: f64,
    #[arg(long, env = "HLORA_DROPOUT", default_value_t = 0.05)]
    dropout: f64,
    /// json, csv or markdown.
    #[arg(long, env = "HLORA_FORMAT", default_value = "json")]
    format: String,
    /// Directory receiving one target list per condition plus the budget table.
    #[arg(long, env = "HLORA_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Target list produced by `plan`.
    #[arg(long, env = "HLORA_TARGETS")]
    targets: PathBuf,
    #[arg(long, env = "HLORA_MODEL")]
    model: PathBuf,
    /// Attachment report produced by the training harness.
    #[arg(long, env = "HLORA_REPORT")]
    report: PathBuf,
    #[arg(long, env = "HLORA_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, env = "HLORA_TARGETS")]
    targets: PathBuf,
    #[arg(long, env = "HLORA_MODEL")]
    model: PathBuf,
    /// Report factors at this rank instead of the planned one.
    #[arg(long, env = "HLORA_RANK")]
    rank: Option<u64>,
    #[arg(long, env = "HLORA_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Evaluation results, CSV or JSON.
    #[arg(long, env = "HLORA_RESULTS")]
    results: PathBuf,
    /// No-fine-tuning accuracies, CSV or JSON.
    #[arg(long, env = "HLORA_BASELINES")]
    baselines: PathBuf,
    /// Trainable parameters per condition (model, condition, params_m).
    #[arg(long, env = "HLORA_BUDGETS")]
    budgets: PathBuf,
    /// Overrides such as `gsm8k=GSM8K,ultrachat=none`.
    #[arg(long, env = "HLORA_TARGET_MAP")]
    target_map: Option<String>,
    #[arg(long, env = "HLORA_THRESHOLD", default_value_t = 0.95)]
    threshold: f64,
    #[arg(long, env = "HLORA_SEED", default_value_t = 3407)]
    seed: u64,
    #[arg(long, env = "HLORA_RESAMPLES", default_value_t = 10_000)]
    resamples: usize,
    /// csv, json, markdown or svg.
    #[arg(long, env = "HLORA_FORMAT", default_value = "markdown")]
    format: String,
    /// Directory receiving the rendered artifacts.
    #[arg(long, env = "HLORA_OUT")]
    out: Option<PathBuf>,
    /// Published recipes to flag disagreements against.
    #[arg(long, env = "HLORA_REFERENCE_RECIPES")]
    reference_recipes: Option<PathBuf>,
    /// Per-instance outcome vectors (JSON) for paired bootstrap intervals.
    #[arg(long, env = "HLORA_INSTANCES")]
    instances: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Discover(a) => commands::discover(a),
        Command::Plan(a) => commands::plan(a),
        Command::Verify(a) => commands::verify(a),
        Command::SimulateAttach(a) => commands::simulate_attach(a),
        Command::Analyze(a) => commands::analyze(a),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
