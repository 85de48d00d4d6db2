mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use toposqt::linalg::RESIDUAL_TOL;

#[derive(Parser, Debug)]
#[command(name = "toposqt", version, about = "Topos representations of finite quantum and classical systems")]
pub struct Cli {
    /// Equality tolerance for residual checks.
    #[arg(long, global = true, env = "TOPOSQT_TOL", default_value_t = RESIDUAL_TOL)]
    pub tol: f64,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Write the result to this file instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Dot,
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// System definition JSON.
    pub system: PathBuf,
    /// Leave the trivial context out of the generated poset.
    #[arg(long)]
    pub no_trivial: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the context poset of a quantum system.
    Contexts {
        #[command(flatten)]
        system: SystemArgs,
        /// Also write the Hasse diagram in DOT form here.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Outer daseinisation of a symbol at every context.
    Das {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        op: String,
        #[arg(long)]
        context: Option<String>,
    },
    /// Sieve-valued truth value of a proposition in a state.
    Truth {
        #[command(flatten)]
        system: SystemArgs,
        /// JSON array of amplitudes; each entry a number or `[re, im]`.
        #[arg(long)]
        state: String,
        /// A projection symbol, or `NAME=VALUE` for the eigenprojection of `NAME` at `VALUE`.
        #[arg(long)]
        prop: String,
        #[arg(long)]
        at: String,
    },
    /// Run invariant suites.
    Check {
        /// Suite names separated by commas, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Add `ε·1` to the summed operator in the lemma suite.
        #[arg(long)]
        perturb: Option<f64>,
    },
    /// Translate an arrow of a disjoint sum back to its first summand.
    TranslateSum {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        op1: String,
        #[arg(long)]
        op2: String,
    },
    /// Translate `A⊗1` on a composite back to the first factor.
    TranslateTensor {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        op: String,
        /// Quantum system on the composite whose symbols generate extra contexts.
        #[arg(long)]
        entangled: Option<PathBuf>,
    },
    /// Search for contexts where translation and ampliation disagree.
    GapSearch {
        /// Source of the operator; a qubit `σ_z` when absent.
        #[arg(long, requires = "op")]
        system: Option<PathBuf>,
        #[arg(long, requires = "system")]
        op: Option<String>,
        /// Dimension of the second factor.
        #[arg(long, default_value_t = 2)]
        n2: usize,
        /// Families separated by commas: documented, controlled, entangled, product-only.
        #[arg(long, default_value = "documented,controlled,entangled,product-only")]
        families: String,
        /// Random draws per random family.
        #[arg(long, default_value_t = 24)]
        budget: usize,
    },
    /// Dump the spectral presheaf of a quantum system.
    Export {
        #[command(flatten)]
        system: SystemArgs,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    CheckFailed(String),
    #[error("{0}")]
    Usage(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unknown symbol: {0}")]
    UnknownSymbol(String),
    #[error("bad state: {0}")]
    BadState(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::UnknownSymbol(_) => 4,
            CliError::BadState(_) => 5,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
