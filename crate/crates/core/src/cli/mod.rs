//! Command-line front end: `groundstate`, `evolve`, `stability`, `check`, `diag`.
//!
//! Exit codes: 0 success, 1 numerical or convergence failure, 2 usage or
//! validation error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::error::NlsError;
use config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NUMERICAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "nlsorbit", version, about = "Ground states, dynamics and orbital stability for coupled NLS systems")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `output.directory`.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Progress messages on stderr; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the energy on the mass constraint manifold.
    Groundstate,
    /// Evolve a field dump in time.
    Evolve {
        /// Initial state (field dump).
        #[arg(long)]
        initial: PathBuf,
    },
    /// Ground state followed by a delta-epsilon perturbation sweep.
    Stability,
    /// Consistency and hypothesis checks for the configured nonlinearity.
    Check,
    /// Energy identities and cross-checks on seeded states.
    Diag,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Groundstate => "groundstate",
            Command::Evolve { .. } => "evolve",
            Command::Stability => "stability",
            Command::Check => "check",
            Command::Diag => "diag",
        }
    }
}

/// A command failure together with its exit code.
#[derive(Debug)]
pub(crate) enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<NlsError> for Failure {
    fn from(e: NlsError) -> Self {
        match e {
            NlsError::InvalidGrid(_)
            | NlsError::GridMismatch
            | NlsError::ComponentMismatch { .. }
            | NlsError::InvalidInput(_)
            | NlsError::MissingInfinitySpec(_)
            | NlsError::InvalidHypothesisParams(_)
            | NlsError::Dump(_)
            | NlsError::Io(_) => Failure::Usage(e.to_string()),
            NlsError::NonFinite { .. }
            | NlsError::InconsistentNonlinearity { .. }
            | NlsError::DivergentEnergy { .. }
            | NlsError::ZeroMass(_)
            | NlsError::EmptyOrbit(_)
            | NlsError::BlowUp { .. } => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Shared state of one invocation.
pub(crate) struct Run {
    pub cfg: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub root: PathBuf,
    pub command: &'static str,
    pub verbose: u8,
}

impl Run {
    /// Comment header carried by every text output.
    pub fn header(&self) -> String {
        format!(
            "# nlsorbit {}\n# command {}\n# config-sha256 {}\n# seed {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.config_hash,
            self.seed
        )
    }

    /// Run-scoped output directory, created on demand.
    pub fn dir(&self, sub: &str) -> std::io::Result<PathBuf> {
        let d = self.root.join(self.command).join(sub);
        fs::create_dir_all(&d)?;
        Ok(d)
    }

    pub fn write_text(&self, path: &Path, body: &str) -> std::io::Result<()> {
        let mut text = self.header();
        text.push_str(body);
        fs::write(path, text)
    }

    pub fn log(&self, level: u8, msg: impl AsRef<str>) {
        if self.verbose >= level {
            eprintln!("[nlsorbit {}] {}", self.command, msg.as_ref());
        }
    }
}

fn prepare(cli: &Cli) -> Result<Run, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("missing --config <path>".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let digest = Sha256::digest(text.as_bytes());
    let config_hash = digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    let root = cli.output.clone().unwrap_or_else(|| cfg.output.directory.clone());
    Ok(Run {
        seed: cfg.seed,
        cfg,
        config_hash,
        root,
        command: cli.command.name(),
        verbose: cli.verbose,
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = prepare(&cli).and_then(|run| match &cli.command {
        Command::Groundstate => commands::groundstate(&run),
        Command::Evolve { initial } => commands::evolve(&run, initial),
        Command::Stability => commands::stability(&run),
        Command::Check => commands::check(&run),
        Command::Diag => commands::diag(&run),
    });
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("failed: {msg}");
            EXIT_NUMERICAL
        }
    }
}
