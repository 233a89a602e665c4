//! `htlcgp`: runs single payments, jamming experiments and investment
//! sweeps, and prints the contract script templates.

mod commands;
mod files;
mod ranges;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use htlcgp_core::model::{Amount, PenaltyRate};
use htlcgp_core::protocol::Protocol;

#[derive(Parser, Debug)]
#[command(name = "htlcgp", version, about = "Griefing-penalty payment simulator and experiments")]
struct Cli {
    /// Experiment configuration, TOML or JSON (attack and sweep).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override; takes precedence over HTLCGP_SEED and the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one payment scenario and write its trace and ledger.
    Simulate(SimulateArgs),
    /// Jam the most central node and write RoI tables.
    Attack(AttackArgs),
    /// Budget multiple against path length or penalty rate.
    Sweep(SweepArgs),
    /// Print a contract script template.
    RenderScript {
        #[arg(long, value_enum)]
        kind: ScriptKind,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario file, TOML or JSON.
    scenario: PathBuf,
    /// Replaces the scenario's protocol.
    #[arg(long)]
    protocol: Option<Protocol>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// Lightning graph dump to attack instead of the synthetic topology.
    #[arg(long, conflicts_with = "synthetic")]
    snapshot: Option<PathBuf>,
    /// Use the configured synthetic hub-and-spoke topology (default).
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    strategy: u8,
    /// Fixed budget for the value and rate tables (msat, or sat/btc suffix).
    #[arg(long)]
    budget: Option<Amount>,
    /// Fixed payment value for the budget and rate tables.
    #[arg(long)]
    tx_value: Option<Amount>,
    /// Fixed penalty rate per minute for the value and budget tables.
    #[arg(long)]
    gamma: Option<PenaltyRate>,
    /// Protocols to evaluate, comma separated.
    #[arg(long, value_delimiter = ',')]
    protocol: Vec<Protocol>,
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<Amount>,
    #[arg(long, value_delimiter = ',')]
    tx_values: Vec<Amount>,
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<PenaltyRate>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RatioAxis {
    Pathlen,
    Gamma,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    ratio_vs: RatioAxis,
    /// Hop counts for the path-length table, e.g. `4..=20` or `5,10,15`.
    #[arg(long)]
    path_lengths: Option<String>,
    /// Hop counts for the rate table.
    #[arg(long)]
    hops: Option<String>,
    /// Rates for the rate table, comma separated.
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<PenaltyRate>,
    /// Fixed rate for the path-length table.
    #[arg(long)]
    gamma: Option<PenaltyRate>,
    /// Payment values, comma separated.
    #[arg(long, value_delimiter = ',')]
    values: Vec<Amount>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScriptKind {
    Cancellation,
    Payment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args, cli.seed),
        Command::Attack(args) => commands::attack(&args, cli.config.as_deref(), cli.seed),
        Command::Sweep(args) => commands::sweep(&args, cli.config.as_deref(), cli.seed),
        Command::RenderScript { kind } => commands::render_script(kind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
