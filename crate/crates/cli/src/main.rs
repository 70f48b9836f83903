//! `streamhar`: synthesize, train, run, correct, evaluate and tune.

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "streamhar", version, about = "Streaming activity recognition over smart-home sensor events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output file, or output directory for `evaluate`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    beta: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// sw, tw, swmi, swtw, dw, pwpa, all, or a comma-separated list.
    #[arg(long, global = true)]
    baseline: Option<String>,
    /// Fail on malformed lines and unpaired annotations instead of skipping them.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic annotated stream.
    Synth {
        /// home_a, home_b, interruption_pair or confusable_pair.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Fit the engine and correction densities into one model file.
    Train {
        /// Profile whose default alpha applies when none is given.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Run a model over a stream and print engine outputs as JSON lines.
    Run {
        /// Read events from standard input, one per line, and flush after each.
        #[arg(long)]
        live: bool,
    },
    /// Relabel the completed segments of a JSON-lines run output.
    Correct {
        /// Run output to correct; standard input when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score the engine (and optional baselines) on a split or by cross-validation.
    Evaluate,
    /// Sweep beta or alpha and print one accuracy column per candidate.
    Tune {
        target: TuneTarget,
        /// Comma-separated candidate values.
        #[arg(long, value_delimiter = ',')]
        candidates: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TuneTarget {
    Beta,
    Alpha,
}

/// Why a command failed, and the exit code that goes with it.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Domain { module: &'static str, message: String },
}

impl Failure {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }

    pub fn domain(module: &'static str, e: impl fmt::Display) -> Self {
        Self::Domain {
            module,
            message: e.to_string(),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Self::Domain { .. } => 1,
            Self::Config(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config: {m}"),
            Self::Io(m) => write!(f, "i/o failure: {m}"),
            Self::Domain { module, message } => write!(f, "{module} error: {message}"),
        }
    }
}

macro_rules! domain_errors {
    ($($t:ty => $name:literal),* $(,)?) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::domain($name, e)
            }
        })*
    };
}

domain_errors! {
    streamhar::events::EventsError => "events",
    streamhar::hhmm::HhmmError => "hhmm",
    streamhar::correction::CorrectionError => "correction",
    streamhar::eval::EvalError => "eval",
    streamhar::baselines::BaselineError => "baselines",
    streamhar::model::ModelError => "model",
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let (profile, episodes) = match &cli.command {
        Command::Synth { profile, episodes } => (profile.clone(), *episodes),
        Command::Train { profile } => (profile.clone(), None),
        _ => (None, None),
    };
    cfg.apply(Overrides {
        train: cli.train,
        test: cli.test,
        model: cli.model,
        out: cli.out,
        beta: cli.beta,
        alpha: cli.alpha,
        seed: cli.seed,
        folds: cli.folds,
        baseline: cli.baseline,
        strict: cli.strict,
        profile,
        episodes,
    });
    cfg.validate()?;
    log::debug!("configuration: {cfg:?}");
    match cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Run { live: false } => commands::run(&cfg),
        Command::Run { live: true } => commands::run_live(&cfg),
        Command::Correct { input } => commands::correct(&cfg, input.as_deref()),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Tune { target, candidates } => match target {
            TuneTarget::Beta => commands::tune_beta(&cfg, &candidates),
            TuneTarget::Alpha => commands::tune_alpha(&cfg, &candidates),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
