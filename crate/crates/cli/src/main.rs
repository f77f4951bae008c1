use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Ventilator allocation under epidemic uncertainty.
#[derive(Debug, Parser)]
#[command(name = "ventalloc", version, about)]
struct Cli {
    /// Log filter, e.g. `info` or `ventalloc=debug`. RUST_LOG also works.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the epidemic along scenario paths for a fixed allocation.
    Simulate(SimulateArgs),
    /// Solve the allocation model.
    Optimize(OptimizeArgs),
    /// Lower and upper bounds from single-scenario subproblems.
    Bounds(BoundsArgs),
    /// Write the allocation model as MPS or LP.
    ExportMps(ExportArgs),
    /// Check a config and print it with all defaults filled in.
    Validate(ValidateArgs),
    /// Scenario tree commands.
    Tree {
        #[command(subcommand)]
        command: TreeCommand,
    },
}

#[derive(Debug, Subcommand)]
enum TreeCommand {
    /// Print the nodes and scenarios of the configured tree.
    Inspect(InspectArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Source {
    /// Run configuration (JSON).
    #[arg(long, short, conflicts_with = "fixture", required_unless_present = "fixture")]
    pub config: Option<PathBuf>,
    /// Bundled configuration by name.
    #[arg(long, short, value_parser = clap::builder::PossibleValuesParser::new(ventalloc::fixtures::NAMES))]
    pub fixture: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Overrides {
    /// Ventilator budget in currency units.
    #[arg(long, allow_negative_numbers = true)]
    pub budget: Option<f64>,
    /// CVaR confidence level.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Weight of the risk term.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Intervention policy: none, mask, lockdown, mask+lockdown, lockdown+mask,
    /// or one name per period separated by commas.
    #[arg(long)]
    pub policy: Option<String>,
    /// Number of branching stages in the tree.
    #[arg(long)]
    pub stages: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Limits {
    /// Wall-clock limit for the solver, in seconds.
    #[arg(long, allow_negative_numbers = true)]
    pub time_limit: Option<f64>,
    /// Relative optimality gap at which the search stops.
    #[arg(long, allow_negative_numbers = true)]
    pub gap: Option<f64>,
    /// Branch-and-bound node limit.
    #[arg(long)]
    pub node_limit: Option<usize>,
}

impl Limits {
    pub fn apply(&self, solver: &mut ventalloc::config::SolverConfig) {
        if let Some(t) = self.time_limit {
            solver.time_limit_secs = Some(t);
        }
        if let Some(g) = self.gap {
            solver.gap = g;
        }
        if let Some(n) = self.node_limit {
            solver.node_limit = Some(n);
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Scenario path: one branch for every stage (`medium`) or one per stage
    /// (`low,medium,high`). All scenarios when omitted.
    #[arg(long, conflicts_with = "scenario")]
    pub path: Option<String>,
    /// Scenario index.
    #[arg(long)]
    pub scenario: Option<usize>,
    /// Allocation plan as JSON, `plan[period - 1][region]`. Zero when omitted.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Directory for trajectories.csv, summary.json and config.resolved.json.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub limits: Limits,
    /// Directory for allocations.csv, trajectories.csv, optimize.json and config.resolved.json.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub limits: Limits,
    /// Comma-separated scenario indices. All scenarios when omitted.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Vec<usize>,
    /// Also run the full model under --full-time-limit, seeded with the best
    /// upper-bound plan, and report how much of its gap the bounds close.
    #[arg(long)]
    pub compare_full: bool,
    /// Time limit for the comparison solve, in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub full_time_limit: f64,
    /// Directory for bounds.json and config.resolved.json.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    Fixed,
    Free,
    Lp,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_enum, default_value_t = ExportFormat::Free)]
    pub format: ExportFormat,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write the model census as JSON.
    #[arg(long)]
    pub census: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub overrides: Overrides,
    /// CSV with `predicted,observed` columns; runs a paired t-test on them.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TreeFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_enum, default_value_t = TreeFormat::Table)]
    pub format: TreeFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if let Some(filter) = &cli.log {
        logger.parse_filters(filter);
    }
    logger.target(env_logger::Target::Stderr).init();

    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::ExportMps(a) => commands::export(a),
        Command::Validate(a) => commands::validate(a),
        Command::Tree { command: TreeCommand::Inspect(a) } => commands::inspect(a),
    };
    match result {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("error: {e}");
            commands::exit_code(&e).into()
        }
    }
}
