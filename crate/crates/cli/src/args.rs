use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "robcert",
    version,
    about = "Robustness certificates and generalization bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train each learner and emit its certificates over the gamma grid.
    Certify(CommonArgs),
    /// Evaluate every applicable bound on freshly computed certificates.
    Bound(CommonArgs),
    /// Run the Monte-Carlo gap, certificate soundness and quantile checks.
    Verify(CommonArgs),
    /// Quantile and truncated-mean sandwich coverage.
    Quantile(CommonArgs),
    /// Doeblin chain diagnostics, bound and violation rate.
    Markov(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Certify(_) => "certify",
            Command::Bound(_) => "bound",
            Command::Verify(_) => "verify",
            Command::Quantile(_) => "quantile",
            Command::Markov(_) => "markov",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Certify(a)
            | Command::Bound(a)
            | Command::Verify(a)
            | Command::Quantile(a)
            | Command::Markov(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML suite file.
    #[arg(long)]
    pub config: PathBuf,
    /// CSV dataset replacing the generated training sample (certify, bound).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the JSON report and CSV plot data.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Base seed overriding every experiment's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the trial pool (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Fail with exit code 1 when a statistical assertion fails.
    #[arg(long)]
    pub validate: bool,
    /// Run only the named experiment.
    #[arg(long)]
    pub experiment: Option<String>,
}
