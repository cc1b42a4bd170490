use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use polimarket::par::Execution;
use polimarket::polmetrics::CategoryLevel;
use polimarket_workbench::{config, pipeline, service, Invalid, PipelineConfig};

/// Market-network politics pipeline and labeling service.
///
/// Every stage reads and writes fixed artifact names in the configured work
/// directory. Settings come from the TOML file given with --config and may
/// be overridden with POLIMARKET_* environment variables, using `__` for
/// nesting (for example POLIMARKET_METRICS__REPLICATES=200).
///
/// Exit status: 0 success, 1 runtime failure, 2 usage error, 3 invalid
/// configuration or input.
#[derive(Debug, Parser)]
#[command(name = "polimarket", version)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, short, global = true, env = "POLIMARKET_CONFIG")]
    config: Option<PathBuf>,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Level {
    Main,
    Big,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the corpus and fuzzy-match seed titles.
    Ingest,
    /// Run the sampling waves and store the graph with seed labels.
    Sample,
    /// Compute k-cores (all configured orders unless --k is given).
    Kcore {
        #[arg(long)]
        k: Option<usize>,
        /// Snapshot to decompose instead of the sampled graph.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Add co-review edges to the innermost core.
    Augment {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the relational classifier on seed and human labels.
    Train {
        /// Use the configuration chosen by `search`.
        #[arg(long)]
        tuned: bool,
    },
    /// Random hyperparameter search.
    Search {
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Score products, write the acceptance curve and merge confident labels.
    Classify,
    /// Relevance, alignment and polarization per category.
    Metrics {
        #[arg(long, value_enum, default_value = "both")]
        level: Level,
    },
    /// Lifestyle scores per product and category.
    Lifestyle,
    /// Build and transform review-level covariates.
    Features,
    /// Beta regression of lifestyle scores on the covariates.
    Fit {
        /// Model terms, e.g. "product_alignment + product_relevance + product_alignment:product_relevance".
        #[arg(long)]
        formula: Option<String>,
    },
    /// Serve the labeling API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Write edge-list and node-table CSVs.
    Export {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the sampling and politics summary.
    Report,
    /// Print the commented configuration template.
    Config,
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Config = cli.command {
        print!("{}", config::TEMPLATE);
        return Ok(());
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Fit { formula: Some(f) } => cfg.fit.formula = f.clone(),
        Command::Serve { bind: Some(b) } => cfg.service.bind = b.clone(),
        _ => {}
    }
    cfg.validate()?;
    let summary = match cli.command {
        Command::Ingest => pipeline::ingest(&cfg, exec)?,
        Command::Sample => pipeline::sample(&cfg, exec)?,
        Command::Kcore { k, input } => pipeline::kcore(&cfg, k, input.as_deref(), exec)?,
        Command::Augment { input } => pipeline::augment(&cfg, input.as_deref(), exec)?,
        Command::Train { tuned } => pipeline::train(&cfg, tuned, exec)?,
        Command::Search { budget } => pipeline::search(&cfg, budget, exec)?,
        Command::Classify => pipeline::classify(&cfg, exec)?,
        Command::Metrics { level } => {
            let levels = match level {
                Level::Main => vec![CategoryLevel::Main],
                Level::Big => vec![CategoryLevel::Big],
                Level::Both => vec![CategoryLevel::Big, CategoryLevel::Main],
            };
            pipeline::metrics(&cfg, &levels, exec)?
        }
        Command::Lifestyle => pipeline::lifestyle(&cfg)?,
        Command::Features => pipeline::features(&cfg, exec)?,
        Command::Fit { .. } => pipeline::fit(&cfg, exec)?,
        Command::Serve { .. } => {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(service::serve(&cfg, exec))?;
            "service stopped".into()
        }
        Command::Export { input } => pipeline::export(&cfg, input.as_deref())?,
        Command::Report => pipeline::report(&cfg)?,
        Command::Config => unreachable!(),
    };
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POLIMARKET_LOG", level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = if e.downcast_ref::<Invalid>().is_some() {
                ("validation", 3)
            } else {
                ("runtime", 1)
            };
            eprintln!("{}", serde_json::json!({ "error": class, "message": format!("{e:#}") }));
            ExitCode::from(code)
        }
    }
}
