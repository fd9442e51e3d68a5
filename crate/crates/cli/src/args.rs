use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "imc-hit",
    version,
    about = "Lower and upper expected hitting times for interval-bounded rate matrix sets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that the target is absorbing and lower reachable from every state.
    Check(CheckArgs),
    /// Solve for the lower and upper expected hitting times.
    Solve(SolveArgs),
    /// Measure discretisation error over a grid of step sizes (CSV on stdout).
    Converge(ConvergeArgs),
    /// Estimate a hitting time by simulation and compare it with the bounds.
    Simulate(SimulateArgs),
    /// Report contractivity constants and quasicontractivity checks.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model file (JSON).
    pub model: PathBuf,

    /// Write the machine-readable report here; `-` sends it to stdout and
    /// moves the text summary to stderr.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Vi,
    Pi,
    Both,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodArg,

    /// Stopping tolerance for value iteration and policy iteration.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,

    /// Value-iteration step; defaults to 0.9 over the operator norm bound.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubjectArg {
    AllLower,
    AllUpper,
    Imprecise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    Lower,
    Upper,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: Common,

    /// Strictly decreasing step sizes.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025,0.0125")]
    pub deltas: Vec<f64>,

    #[arg(long, value_enum, default_value = "all-lower")]
    pub member: SubjectArg,

    /// Which bound to discretise with `--member imprecise`.
    #[arg(long, value_enum, default_value = "lower")]
    pub orientation: OrientationArg,

    /// Tolerance of the inner operator exponential with `--member imprecise`.
    #[arg(long, default_value_t = 1e-6)]
    pub inner_tol: f64,

    /// Outer fixed-point tolerance with `--member imprecise`.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,

    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    /// Homogeneous: one fixed member.
    Hm,
    /// Inhomogeneous: members switch on a fixed time schedule.
    M,
    /// History dependent: a member is chosen at every jump.
    I,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// Random members (hm, m) or a random extreme member per jump (i).
    Random,
    /// The member that realises the lower bound.
    Lower,
    /// The member that realises the upper bound.
    Upper,
    /// Alternate between the lower and upper realising members (m, i).
    Alternating,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, value_enum, default_value = "hm")]
    pub regime: RegimeArg,

    #[arg(long, value_enum, default_value = "random")]
    pub strategy: StrategyArg,

    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Start state label; defaults to the first non-target state.
    #[arg(long)]
    pub start: Option<String>,

    /// Censoring horizon; defaults to 20 times the upper bound at the start.
    #[arg(long)]
    pub horizon: Option<f64>,

    /// Dwell time between switches in the `m` regime.
    #[arg(long, default_value_t = 0.1)]
    pub switch_every: f64,

    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,

    /// Random members checked for quasicontractivity, besides the two
    /// all-lower and all-upper members.
    #[arg(long, default_value_t = 8)]
    pub members: usize,

    /// Random test functions per member.
    #[arg(long, default_value_t = 16)]
    pub functions: usize,

    #[arg(long, default_value_t = 1e-6)]
    pub slack: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
