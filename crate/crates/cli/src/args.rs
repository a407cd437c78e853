use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "stokes-recon", version, about = "Source reconstruction for penalized unsteady Stokes flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward solve of a benchmark source; writes snapshots, norms and observations.
    #[command(allow_negative_numbers = true)]
    Forward {
        #[command(flatten)]
        common: Common,
        /// Run with a vanishing source.
        #[arg(long)]
        zero_source: bool,
    },
    /// Fixed-point reconstruction from generated or stored observations.
    #[command(allow_negative_numbers = true)]
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Observation file written by `forward`.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Curl counterexamples: distinct sources with matching exterior data.
    #[command(allow_negative_numbers = true)]
    Counterexample {
        #[command(flatten)]
        common: Common,
    },
    /// Runs the oracle suite and prints a pass/fail table.
    #[command(allow_negative_numbers = true)]
    Validate {
        #[command(flatten)]
        common: Common,
        /// Coarse subset: gradient, control, duality, contraction on h = 0.3.
        #[arg(long)]
        quick: bool,
        /// Flip the sign of the adjoint load, so the gradient check must fail.
        #[arg(long)]
        corrupt: bool,
    },
    /// Reconstruction for several values of c.
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of c values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        c_values: Vec<f64>,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Forward { common, .. }
            | Command::Reconstruct { common, .. }
            | Command::Counterexample { common }
            | Command::Validate { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Forward { .. } => "forward",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Counterexample { .. } => "counterexample",
            Command::Validate { .. } => "validate",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// Flags shared by every command; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub example: Option<u32>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Run exactly k_max iterations regardless of tau.
    #[arg(long)]
    pub force_k: bool,
    /// Update the two source components as one scalar unknown.
    #[arg(long)]
    pub tied: bool,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
