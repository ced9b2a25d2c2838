//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::{exit_code, EXIT_OK};
use crate::stages::{run_analyze, run_pipeline, run_surprisal, run_train, ModelSource};

pub const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nweights format 1\nvocabulary format 1\nsurprisal table format 1\nreport format 1"
);

#[derive(Debug, Parser)]
#[command(
    name = "n400",
    version,
    long_version = LONG_VERSION,
    about = "Train a word-level LSTM, compute target-word surprisal, and test it against expected N400 patterns"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Significance level for selection and contrasts.
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Option<f64>,
    /// Comma-separated experiments to process (default: all).
    #[arg(long, value_delimiter = ',', value_name = "IDS")]
    pub experiments: Option<Vec<String>>,
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Weight file to write (train) or read (other stages).
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Training corpus, one sentence per line.
    #[arg(long, value_name = "FILE")]
    pub train_corpus: Option<PathBuf>,
    /// Directory of *.tsv stimulus files and <experiment>.design files.
    #[arg(long, value_name = "DIR")]
    pub corpus_dir: Option<PathBuf>,
    /// Directory of <experiment>[.<variant>].pattern files.
    #[arg(long, value_name = "DIR")]
    pub patterns_dir: Option<PathBuf>,
    /// Surprisal table to write (surprisal) or read (analyze).
    #[arg(long, value_name = "FILE")]
    pub surprisals: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let o = Overrides {
            seed: self.seed,
            alpha: self.alpha,
            experiments: self.experiments.clone(),
            output_dir: self.output_dir.clone(),
            model: self.model.clone(),
            train_corpus: self.train_corpus.clone(),
            corpus_dir: self.corpus_dir.clone(),
            patterns_dir: self.patterns_dir.clone(),
            surprisals: self.surprisals.clone(),
        };
        RunConfig::load(self.config.as_deref(), &o)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a language model and write weights, vocabulary and training log.
    Train(Common),
    /// Score every stimulus target word with a trained model.
    Surprisal(Common),
    /// Fit mixed models to a surprisal table and compare with expected patterns.
    Analyze(Common),
    /// Train (or reuse) a model, compute surprisals, analyze.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Train even if a model with matching settings exists.
        #[arg(long, conflicts_with = "model")]
        retrain: bool,
    },
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(c) => run_train(&c.load()?).map(drop),
        Command::Surprisal(c) => run_surprisal(&c.load()?).map(drop),
        Command::Analyze(c) => run_analyze(&c.load()?).map(drop),
        Command::Pipeline { common, retrain } => {
            let cfg = common.load()?;
            let source = if common.model.is_some() {
                ModelSource::Given
            } else {
                ModelSource::Default { retrain: *retrain }
            };
            run_pipeline(&cfg, source).map(drop)
        }
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e:#}");
            exit_code(&e)
        }
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie strictly between 0 and 1, got {a}"))
    }
}
