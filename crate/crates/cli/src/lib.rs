//! `emoforge` command-line driver.
//!
//! Exit codes: 0 success, 1 validation or parse failures, 2 configuration
//! errors, 3 backend or transport failures.

/// `println!` that ignores a closed stdout, so `emoforge stats x | head` exits quietly.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use emoforge_core::Kind;

use config::{Overrides, Provider};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

pub fn fail<T>(code: u8, message: impl std::fmt::Display) -> Result<T, Failure> {
    Err(Failure { code, error: anyhow::anyhow!("{message}") })
}

#[derive(Debug, Parser)]
#[command(name = "emoforge", version, about = "Emotion visual-instruction data generation and evaluation")]
pub struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Taxonomy name (built-in) or path to a label file.
    #[arg(long, global = true)]
    pub taxonomy: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset from attribute and caption files.
    Generate(GenerateArgs),
    /// Check every record of a dataset file.
    Validate { path: PathBuf },
    /// Check that held-in and held-out datasets share no image ids.
    Split {
        /// `name=path` of the held-in dataset.
        #[arg(long)]
        held_in: String,
        /// `name=path` of a held-out dataset; repeatable.
        #[arg(long)]
        held_out: Vec<String>,
    },
    /// Keep a stratified fraction of a dataset's images.
    Sample {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Print dataset counts as JSON.
    Stats { path: PathBuf },
    /// Score a predictions file against gold labels.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Machine-readable summary file.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Per-prediction parse results.
        #[arg(long)]
        parsed: Option<PathBuf>,
    },
    /// Instruction sensitivity over run files of per-task accuracies.
    Sensitivity {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Use the sample (n - 1) standard deviation.
        #[arg(long)]
        sample_std: bool,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Print summaries, optionally with the reference result tables.
    Report {
        /// Summary files written by `eval` or `sensitivity`.
        summaries: Vec<PathBuf>,
        #[arg(long)]
        fixtures: bool,
        /// Also write the merged report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write one instruction/output row per turn.
    Export {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub completions_log: Option<PathBuf>,
    #[arg(long)]
    pub quarantine: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub provider: Option<Provider>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model_name: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Mock provider: fraction of malformed replies.
    #[arg(long)]
    pub corruption_rate: Option<f64>,
    #[arg(long)]
    pub seed_examples: Option<PathBuf>,
    #[arg(long)]
    pub seeds_per_request: Option<usize>,
    /// Comma-separated subset of categorical,conversation,reasoning.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<Kind>>,
    /// Generate for a stratified fraction of the input images only.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Do not re-ask once when a reply fails to parse.
    #[arg(long)]
    pub no_regenerate: bool,
    /// Ignore the completions log and query the backend again.
    #[arg(long)]
    pub fresh: bool,
}

impl GenerateArgs {
    fn overrides(&self, cli: &Cli) -> Overrides {
        Overrides {
            provider: self.provider,
            endpoint: self.endpoint.clone(),
            model_name: self.model_name.clone(),
            max_in_flight: self.max_in_flight,
            corruption_rate: self.corruption_rate,
            taxonomy: cli.taxonomy.clone(),
            seed_examples: self.seed_examples.clone(),
            seeds_per_request: self.seeds_per_request,
            no_regenerate: self.no_regenerate,
            kinds: self.kinds.clone(),
            sample_fraction: self.fraction,
            seed: cli.seed,
            attributes: self.attributes.clone(),
            captions: self.captions.clone(),
            output: self.output.clone(),
            completions_log: self.completions_log.clone(),
            quarantine: self.quarantine.clone(),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}
