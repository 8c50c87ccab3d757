//! `dualoie` command line: synthetic data, training, extraction, scoring,
//! the coefficient sweep, analysis reports, the chat-model baseline and the
//! annotation simulation.

pub mod annotate;
mod commands;
pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use dualoie_core::dataset::CorpusFormat;
use dualoie_core::metrics::GroupBy;
use dualoie_llm::LlmMode;

pub use annotate::ModelAnnotationTrainer;
pub use config::RunConfig;
pub use sweep::{loss_grid, GridRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dualoie", version, about = "Dual open information extraction toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `--set model.gamma=0` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Replaces every component seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "LEVEL")]
    pub log_level: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its train/dev/test split.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Sentences to generate (overrides synth.size).
        #[arg(long)]
        size: Option<usize>,
    },
    /// Load a corpus, normalize it and write the training pairs.
    Prep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<CorpusFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; optionally score it on a test file afterwards.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract triplets with a trained model.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold; writes score.json and groups.csv.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score every row of the loss-coefficient grid.
    Sweep {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores sliced by triplet count, category or implicitness.
    GroupReport {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grouping (repeatable; default all): m, category, implicit.
        #[arg(long = "by")]
        by: Vec<GroupBy>,
    },
    /// Per-sentence BLEU of the triplets-to-sentence direction against
    /// extraction F1, with their correlation.
    DualCorr {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Existing predictions; extracted with the model when absent.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare extraction with predicted and with gold prompts.
    GoldPrompt {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the prompted chat-model baseline.
    LlmBaseline {
        #[arg(long)]
        input: PathBuf,
        /// Exemplar pool for few-shot and chain-of-thought prompts.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        mode: Option<LlmMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate iterative implicit-triplet annotation.
    AnnotateSim {
        /// Gold corpus to draw pools from; synthetic when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Prep { .. } => "prep",
            Command::Train { .. } => "train",
            Command::Extract { .. } => "extract",
            Command::Score { .. } => "score",
            Command::Sweep { .. } => "sweep",
            Command::GroupReport { .. } => "group-report",
            Command::DualCorr { .. } => "dual-corr",
            Command::GoldPrompt { .. } => "gold-prompt",
            Command::LlmBaseline { .. } => "llm-baseline",
            Command::AnnotateSim { .. } => "annotate-sim",
        }
    }

    pub fn out_dir(&self) -> &PathBuf {
        match self {
            Command::Gen { out, .. }
            | Command::Prep { out, .. }
            | Command::Train { out, .. }
            | Command::Extract { out, .. }
            | Command::Score { out, .. }
            | Command::Sweep { out, .. }
            | Command::GroupReport { out, .. }
            | Command::DualCorr { out, .. }
            | Command::GoldPrompt { out, .. }
            | Command::LlmBaseline { out, .. }
            | Command::AnnotateSim { out, .. } => out,
        }
    }
}

fn print_usage_help(argv: &[OsString]) {
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    let sub = argv.iter().skip(1).filter_map(|a| a.to_str()).find(|a| names.iter().any(|n| n == a));
    let help = match sub.and_then(|s| cmd.find_subcommand_mut(s)) {
        Some(sc) => sc.render_help(),
        None => cmd.render_help(),
    };
    eprintln!("{help}");
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .parse_env("DUALOIE_LOG")
        .format_timestamp(None)
        .is_test(cfg!(test))
        .try_init();
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            eprintln!("{}", e.render());
            print_usage_help(&argv);
            return EXIT_USAGE;
        }
    };
    let cfg = match RunConfig::load(cli.common.config.as_deref(), &cli.common.overrides, cli.common.seed) {
        Ok(mut c) => {
            if let Some(level) = &cli.common.log_level {
                c.log_level = level.clone();
            }
            c
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            print_usage_help(&argv);
            return EXIT_USAGE;
        }
    };
    init_logging(&cfg.log_level);
    let invocation =
        commands::Invocation { argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(), cli: &cli };
    match commands::dispatch(&invocation, &cfg) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{} failed: {e:#}", cli.command.name());
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
