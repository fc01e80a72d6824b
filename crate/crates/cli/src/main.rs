mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use config::FileConfig;

/// Maps to the process exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Endpoint(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Endpoint(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Endpoint(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "keymaze", version, about = "Key-and-door maze tasks: generate, prompt, run, evaluate, report")]
struct Cli {
    /// TOML file with a table per subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log level for stderr diagnostics.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate task instances as JSONL.
    Generate(GenerateArgs),
    /// Render the evaluation prompt for each task.
    Prompt(PromptArgs),
    /// Sample completions from a chat-completions endpoint.
    Run(RunArgs),
    /// Verify responses against their tasks.
    Evaluate(EvaluateArgs),
    /// Bin verdicts by logical depth and fit the decay length.
    Report(ReportArgs),
    /// Certify ground-truth optimality with breadth-first search.
    OracleCheck(OracleCheckArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    /// Target number of locked doors (0..=7).
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=7))]
    backtracks: Option<u32>,
    /// Distracting-to-supporting fact ratio in [0, 1].
    #[arg(long)]
    noise: Option<f64>,
    /// Fraction of fact positions to permute in [0, 1].
    #[arg(long)]
    shuffle: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    /// Master seed; instance i uses a seed derived from (seed, i).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resample until each instance has exactly the target door count.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    exact_backtracks: Option<bool>,
    /// Resampling budget per instance for --exact-backtracks.
    #[arg(long)]
    max_attempts: Option<u32>,
}

#[derive(Args, Serialize)]
struct PromptArgs {
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include the guidance section (default true).
    #[arg(long)]
    guidance: Option<bool>,
    /// Number of worked examples to include (0..=3).
    #[arg(long)]
    few_shot: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Response file; an existing file is resumed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per task.
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    guidance: Option<bool>,
    #[arg(long)]
    few_shot: Option<usize>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    max_output_tokens: Option<u32>,
    /// Name of the environment variable holding the bearer token.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    max_attempts: Option<u32>,
    #[arg(long)]
    backoff_base_ms: Option<u64>,
}

impl RunArgs {
    fn overlay(&self) -> Value {
        json!({
            "tasks": self.tasks,
            "out": self.out,
            "runs": self.runs,
            "guidance": self.guidance,
            "few_shot": self.few_shot,
            "endpoint": {
                "base_url": self.base_url,
                "model_name": self.model,
                "temperature": self.temperature,
                "top_p": self.top_p,
                "max_output_tokens": self.max_output_tokens,
                "api_key_env_var_name": self.api_key_env,
                "max_concurrent_requests": self.concurrency,
                "retry": { "max_attempts": self.max_attempts, "backoff_base_ms": self.backoff_base_ms },
            },
        })
    }
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Verdict JSONL output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    #[arg(long)]
    verdicts: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    bin_width: Option<usize>,
    /// Writes PREFIX.csv, PREFIX.svg, PREFIX.fit.txt and PREFIX.violations.csv.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct OracleCheckArgs {
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    with_distractors: Option<bool>,
}

fn flags<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("flag structs serialize")
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => {
            let mut overlay = flags(&a);
            // precedence for the seed: flag, [generate].seed, master_seed
            if a.seed.is_none() && !file.section_has("generate", "seed") {
                if let Some(seed) = file.master_seed() {
                    overlay["seed"] = seed.clone();
                }
            }
            commands::generate(&file.resolve("generate", overlay)?)
        }
        Command::Prompt(a) => commands::prompt(&file.resolve("prompt", flags(&a))?),
        Command::Run(a) => commands::run(&file.resolve("run", a.overlay())?),
        Command::Evaluate(a) => commands::evaluate(&file.resolve("evaluate", flags(&a))?),
        Command::Report(a) => commands::report(&file.resolve("report", flags(&a))?),
        Command::OracleCheck(a) => commands::oracle_check(&file.resolve("oracle-check", flags(&a))?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
