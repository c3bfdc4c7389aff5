//! `sgr`: build, inspect and evaluate graph-structured reasoning data.
//!
//! Exit status: 0 on success, 1 when items fail (e.g. an invalid record in
//! `validate`), 2 on configuration or usage errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgr_core::bench::EvalError;
use sgr_core::client::ClientError;
use sgr_core::merge::MergeError;
use sgr_core::pipeline::dataset::PipelineError;

use config::{ConfigError, GlobalArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "sgr", version, about = "Graph-structured reasoning datasets and evaluation")]
#[command(after_help = "The API credential is read from the environment variable named by \
--credential-env (default SGR_API_KEY); it is never accepted as a flag.")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Strict-parse and validate reasoning templates
    Validate {
        /// A template document, or JSONL with a `graph_reasoning`/`completion` field
        file: PathBuf,
    },
    /// Write one Graphviz DOT file per record
    Viz {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample k candidate graphs per question
    Sample {
        /// JSONL of {question, label, source_id?}
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge sampled candidates into one graph per question
    Merge {
        /// Output of `sample`
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full dataset pipeline: sample, merge, filter, split
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for train.jsonl, valid.jsonl and report.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert upstream benchmark files to {question, label} items
    Ingest {
        #[arg(long)]
        bench: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on benchmark items under a reasoning paradigm
    Eval {
        /// Benchmark name; with --data the raw files are ingested first,
        /// with --items only that benchmark's items are kept
        #[arg(long)]
        bench: Option<String>,
        /// Upstream benchmark files
        #[arg(long, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Items produced by `ingest`
        #[arg(long, conflicts_with = "data")]
        items: Option<PathBuf>,
        /// Directory for report.txt, report.json and records.jsonl
        #[arg(long)]
        out: PathBuf,
    },
    /// Score completions with the format and answer rewards
    Score {
        /// JSONL of {completion, label?}
        #[arg(long)]
        completions: PathBuf,
        /// Labels, one per line (plain text or {"label": ...}), if not inline
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn is_config_error(err: &anyhow::Error) -> bool {
    let client_config = |e: &ClientError| matches!(e, ClientError::Auth(_) | ClientError::InvalidConfig(_));
    err.chain().any(|cause| {
        cause.is::<ConfigError>()
            || cause.downcast_ref::<ClientError>().is_some_and(client_config)
            || matches!(cause.downcast_ref::<PipelineError>(), Some(PipelineError::Client(e)) if client_config(e))
            || matches!(cause.downcast_ref::<EvalError>(), Some(EvalError::Client(e)) if client_config(e))
            || matches!(cause.downcast_ref::<MergeError>(), Some(MergeError::Client(e)) if client_config(e))
    })
}

async fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = RunConfig::resolve(&cli.global)?;
    tracing::debug!(?config, "resolved configuration");
    match cli.command {
        Command::Validate { file } => commands::validate(&file),
        Command::Viz { file, out } => commands::viz(&file, &out),
        Command::Sample { input, out } => commands::sample(&config, &input, &out).await,
        Command::Merge { input, out } => commands::merge(&config, &input, &out).await,
        Command::Build { input, out } => commands::build(&config, &input, &out).await,
        Command::Ingest { bench, files, out } => commands::ingest(&bench, &files, &out),
        Command::Eval {
            bench,
            data,
            items,
            out,
        } => commands::eval(&config, bench.as_deref(), &data, items.as_deref(), &out).await,
        Command::Score {
            completions,
            labels,
            out,
        } => commands::score(&config, &completions, labels.as_deref(), &out),
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    let mut last = out.clone();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli).await {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
