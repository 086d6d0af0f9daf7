//! `merton`: analytic, plan, simulate, backtest, compare and validate pipelines.
//!
//! Exit codes: 0 success, 2 invalid input (usage or spec validation), 3 solver
//! failure, 4 I/O error.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use merton_ce::conic::BackendKind;
use merton_ce::sim::Scheme;
use serde::Serialize;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "merton", version = env!("MERTON_VERSION"), about = "Merton consumption-investment planning and validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form policy: θ_ce, r_ce and the a_t and c/w curves.
    Analytic(AnalyticArgs),
    /// Solve the certainty-equivalent plan and write the trajectory.
    Plan(PlanArgs),
    /// Monte Carlo simulation of one policy.
    Simulate(SimulateArgs),
    /// MPC against the known optimal policy on common random numbers.
    Backtest(BacktestArgs),
    /// Analytic vs CE plan vs MPC: first-period policies and realized utilities.
    Compare(CompareArgs),
    /// Check a spec and list every violation.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpecArgs {
    /// Problem spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Extension block `NAME=FILE` or `NAME=JSON`, e.g. `mortality=life.json` or `rho=0.3`.
    #[arg(long = "extension", value_name = "NAME=FILE|JSON")]
    pub extensions: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Conic backend: clarabel or soc-tower.
    #[arg(long, default_value = "clarabel")]
    pub backend: BackendKind,
    /// Feasibility and gap tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimArgs {
    /// Number of Monte Carlo paths.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub paths: u64,
    /// Simulation step in years.
    #[arg(long = "h-sim", default_value_t = 1.0 / 250.0)]
    pub h_sim: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// euler-maruyama or exact-lognormal.
    #[arg(long, default_value = "euler-maruyama")]
    pub scheme: Scheme,
    #[arg(long)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MpcArgs {
    /// Replan interval Δ in years.
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    /// Period length of each replanned program.
    #[arg(long = "plan-step", default_value_t = 0.05)]
    pub plan_step: f64,
    /// Fixed number of periods per replanned program (overrides --plan-step).
    #[arg(long = "plan-periods")]
    pub plan_periods: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Number of grid points on [0, T].
    #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(u64).range(2..))]
    pub samples: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlanArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Number of plan periods.
    #[arg(short = 'K', long = "periods", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub periods: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Known optimal policy (base problem or mortality only).
    Analytic,
    /// Open-loop CE plan ratios.
    Plan,
    Mpc,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub mpc: MpcArgs,
    #[arg(long, value_enum, default_value = "analytic")]
    pub policy: PolicyKind,
    /// Plan periods for `--policy plan`.
    #[arg(short = 'K', long = "periods", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub periods: u64,
    /// Number of leading paths written to paths.csv.
    #[arg(long, default_value_t = 10)]
    pub record: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub mpc: MpcArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub mpc: MpcArgs,
    /// Plan periods of the CE plan.
    #[arg(short = 'K', long = "periods", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub periods: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analytic(a) => commands::analytic(a),
        Command::Plan(a) => commands::plan(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Backtest(a) => commands::backtest(a),
        Command::Compare(a) => commands::compare(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn plan_periods_override_step() {
        let cli = Cli::try_parse_from(["merton", "backtest", "--spec", "s.json", "--plan-periods", "8"]).unwrap();
        let Command::Backtest(a) = cli.command else { panic!() };
        assert_eq!(a.mpc.plan_periods, Some(8));
        assert!(Cli::try_parse_from(["merton", "plan", "--spec", "s.json", "-K", "0"]).is_err());
    }
}
