//! Thin command-line driver over the library pipeline. Exit codes: 0 on
//! success, 1 for validation problems (bad config, wrong stage order,
//! missing prerequisites), 2 for runtime failures.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use toolken::config::{RunConfig, Task};
use toolken::pipeline::{self, PipelineError, RunDir};

#[derive(Parser)]
#[command(name = "toolken", about = "Tool-augmented language modeling at desk scale")]
struct Cli {
    /// Run directory holding all artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Optional config file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-key overrides, e.g. `--set stage2.lr=0.01` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Task family.
    #[arg(long, global = true, default_value = "reasoning")]
    task: String,
    /// Master seed, fanned out to every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate corpora, registry, and vocabulary.
    GenData,
    /// Stage 1: train and freeze the vocabulary head.
    TrainBackbone,
    /// Stage 2: train and freeze toolken embeddings on fold 1.
    TrainToolkens,
    /// Mine hard negatives on fold 2 with the stage-2 model.
    Mine,
    /// Stage 3: train the rerank head.
    TrainRerank,
    /// Decode the test split, writing one trace per task.
    Decode,
    /// Evaluate base and reranked models on the test split.
    Eval,
    /// Sweep the retrieval size k, measuring recall and latency.
    Ablate,
    /// Render report tables from existing artifacts.
    Report,
}

fn build_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let task = match cli.task.as_str() {
        "reasoning" => Task::Reasoning,
        "selection" => Task::Selection,
        other => {
            return Err(toolken::config::ConfigError::BadValue {
                key: "task".into(),
                value: other.into(),
                reason: "expected reasoning|selection".into(),
            }
            .into())
        }
    };
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path, task)?,
        None => RunConfig::default_for(task),
    };
    if let Some(seed) = cli.seed {
        config.set("seed", &seed.to_string())?;
    }
    for pair in &cli.sets {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(toolken::config::ConfigError::Malformed {
                line: 0,
                text: pair.clone(),
            }
            .into());
        };
        config.set(key.trim(), value.trim())?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let config = build_config(cli)?;
    let dir = RunDir::new(&cli.out);
    match cli.command {
        Command::GenData => pipeline::gen_data(&config, &dir),
        Command::TrainBackbone => pipeline::train_backbone(&config, &dir),
        Command::TrainToolkens => pipeline::train_toolkens(&config, &dir),
        Command::Mine => pipeline::mine(&config, &dir),
        Command::TrainRerank => pipeline::train_rerank(&config, &dir),
        Command::Decode => pipeline::decode_all(&config, &dir),
        Command::Eval => pipeline::eval_run(&config, &dir),
        Command::Ablate => pipeline::ablate(&config, &dir),
        Command::Report => pipeline::write_report(&dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
