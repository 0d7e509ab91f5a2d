//! `formx` — training-free form classification and key-value extraction
//! over OCR geometry.
//!
//! Subcommands: `classify`, `extract`, `eval`, `gen`, `config`. Batch
//! output is newline-delimited JSON, one object per input document, in
//! input order. Exit codes: 0 success, 2 usage or input-schema error,
//! 1 internal failure.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use config::FlagOverrides;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "formx",
    version,
    about = "Classify scanned forms and extract key-value fields from OCR bounding boxes",
    propagate_version = true
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Attach alignment and scaling reports to extraction output.
    #[arg(long, global = true)]
    diagnostics: bool,

    /// Skip the global alignment stage.
    #[arg(long, global = true)]
    no_align: bool,

    /// Skip the per-segment scaling stage.
    #[arg(long, global = true)]
    no_scale: bool,

    /// Seed for dataset generation.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for batch commands (0 = one per CPU).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label OCR documents against a template bank.
    Classify {
        /// Bank file with one text (or vector) per class.
        #[arg(long, value_name = "PATH")]
        bank: PathBuf,
        /// OCR documents to label.
        #[arg(required = true, value_name = "OCR_JSON")]
        docs: Vec<PathBuf>,
    },
    /// Extract key-value fields from OCR documents using one template.
    Extract {
        /// Template definition (.kie.json).
        #[arg(long, value_name = "PATH")]
        template: PathBuf,
        /// OCR documents to extract from.
        #[arg(required = true, value_name = "OCR_JSON")]
        docs: Vec<PathBuf>,
    },
    /// Score a dataset manifest and print the metrics table.
    Eval {
        /// JSON-lines manifest produced by `gen` (or hand-written).
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Comma-separated pipeline variants to compare (full, no_align,
        /// no_scale); prints one table per variant.
        #[arg(long, value_name = "VARIANTS", value_delimiter = ',')]
        ablate: Option<Vec<String>>,
    },
    /// Generate a synthetic dataset: templates, forms, truth, manifest.
    Gen {
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Template layout spec (JSON); omit for the built-in six classes.
        #[arg(long, value_name = "PATH")]
        spec: Option<PathBuf>,
        /// Noisy forms to generate per template.
        #[arg(long, value_name = "N", default_value_t = 10)]
        count: usize,
    },
    /// Validate the effective configuration; --dump prints it as TOML.
    Config {
        /// Print the merged configuration (defaults, file, flags).
        #[arg(long)]
        dump: bool,
    },
}

fn run(cli: &Cli) -> Result<(), error::CliError> {
    let flags = FlagOverrides {
        diagnostics: cli.diagnostics,
        no_align: cli.no_align,
        no_scale: cli.no_scale,
        seed: cli.seed,
        jobs: cli.jobs,
    };
    let cfg = config::load(cli.config.as_deref(), &flags)?;

    #[cfg(feature = "parallel")]
    if cfg.run.jobs > 0 {
        // Sizing can only happen before the pool exists; a second call
        // (tests invoking run() twice) just keeps the first size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.jobs)
            .build_global();
    }

    match &cli.command {
        Command::Classify { bank, docs } => commands::classify(bank, docs, &cfg),
        Command::Extract { template, docs } => commands::extract(template, docs, &cfg),
        Command::Eval { manifest, ablate } => {
            commands::eval(manifest, ablate.as_deref(), &cfg)
        }
        Command::Gen { out, spec, count } => {
            commands::gen(out, spec.as_deref(), *count, &cfg)
        }
        Command::Config { dump } => commands::config(*dump, cli.config.as_deref(), &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("formx: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
