mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edlx_core::document::LineLabel;

/// Line classification and section extraction for clinical PDF letters.
///
/// Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
/// 3 training error, 4 PDF or input parse error, 5 model file error,
/// 6 section dictionary error. Set EDLX_LOG (error, warn, info, debug) to
/// control diagnostics on stderr.
#[derive(Parser, Debug)]
#[command(name = "edlx", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads. 1 runs sequentially; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Where to write the run manifest (defaults next to the outputs).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled synthetic corpus of PDFs.
    Gen {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
    /// Train the line classifier, one model per seed.
    Train {
        /// Corpus directory or corpus.jsonl file.
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated list (0,1,2) or range (0..5).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "model")]
        out: PathBuf,
    },
    /// Extract the text of one label from PDFs or JSONL documents.
    Extract {
        /// A PDF, a directory of PDFs, or a .jsonl document file.
        input: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value = "body")]
        label: LineLabel,
        /// Keep lines inside the fixed page rectangle instead of classifying.
        #[arg(long)]
        naive: bool,
        /// Output directory for per-document text and extraction.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split extracted text into titled sections.
    Sections {
        /// A .txt file or an extraction.jsonl written by `extract`.
        input: PathBuf,
        /// Section dictionary TSV (term, tab, section type).
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Output file for the sections JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score line labels against a gold corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        weights: Option<PathBuf>,
        /// Labeled JSONL documents to score instead of running a model.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Also compare section detection against the mask baseline.
        #[arg(long, requires = "weights")]
        sections: bool,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score the full model and both ablations.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        /// Held-out corpus used for scoring.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
    /// Time parse, classify and aggregate over a directory of PDFs.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Output file for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EDLX_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
