use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ventalloc::bounds::{compute_bounds, evaluate_plan, formulate, solve_full, GapComparison};
use ventalloc::config::{Instance, PolicySpec, RunConfig};
use ventalloc::epidemic::Trajectory;
use ventalloc::error::Category;
use ventalloc::milp::export::{to_lp, to_mps, MpsFormat};
use ventalloc::milp::{assignment_from_plan, extract_solution, Allocation};
use ventalloc::report::{paired_t_test, write_allocations, write_trajectories, OptimizeReport};
use ventalloc::scenario_tree::Branch;
use ventalloc::solver::MipStatus;

use crate::{
    BoundsArgs, ExportArgs, ExportFormat, InspectArgs, Limits, OptimizeArgs, Overrides, SimulateArgs, Source,
    TreeFormat, ValidateArgs,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
/// A solver limit stopped the search but an incumbent was found and written.
pub const EXIT_LIMIT: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Core(ventalloc::Error),
    Io { path: PathBuf, err: std::io::Error },
    Usage(String),
    /// Solver stopped at a limit with nothing to report.
    NoIncumbent(MipStatus),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, err } => write!(f, "{}: {err}", path.display()),
            CliError::Usage(msg) => f.write_str(msg),
            CliError::NoIncumbent(s) => write!(f, "solver stopped ({s:?}) without a feasible allocation"),
        }
    }
}

impl From<ventalloc::Error> for CliError {
    fn from(e: ventalloc::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult = Result<u8, CliError>;

pub fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Core(e) => match e.category() {
            Category::Config => EXIT_CONFIG,
            Category::Infeasible => EXIT_INFEASIBLE,
            Category::Other => EXIT_OTHER,
        },
        CliError::Usage(_) => EXIT_CONFIG,
        CliError::Io { .. } | CliError::NoIncumbent(_) => EXIT_OTHER,
    }
}

fn load(source: &Source, ov: &Overrides, limits: Option<&Limits>) -> Result<RunConfig, CliError> {
    let mut cfg = match (&source.config, &source.fixture) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => ventalloc::fixtures::load(name)?,
        (None, None) => return Err(CliError::Usage("pass --config or --fixture".into())),
    };
    if let Some(b) = ov.budget {
        cfg = cfg.with_budget(b);
    }
    if let Some(a) = ov.alpha {
        cfg.risk.alpha = a;
    }
    if let Some(l) = ov.lambda {
        cfg.risk.lambda = l;
    }
    if let Some(p) = &ov.policy {
        cfg.policy = PolicySpec::Named(p.clone());
    }
    if let Some(s) = ov.stages {
        cfg.tree.stages = s;
    }
    if let Some(l) = limits {
        l.apply(&mut cfg.solver);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|err| CliError::Io { path: path.to_path_buf(), err })
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|err| CliError::Io { path: dir.to_path_buf(), err })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> ventalloc::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn region_names(cfg: &RunConfig) -> Vec<String> {
    cfg.regions.iter().map(|r| r.name.clone()).collect()
}

fn print_text(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        // A closed reader (`| head`) is not a failure of ours.
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "<stdout>".into(), err: e }),
        _ => Ok(()),
    }
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    print_text(&(serde_json::to_string_pretty(value).expect("output serializes") + "\n"))
}

/// `medium` follows one branch at every stage; `low,high` names each stage.
fn parse_path(inst: &Instance, spec: &str) -> Result<usize, CliError> {
    let branching = inst.tree.branching();
    let branches: Vec<Branch> = spec
        .split(',')
        .map(|s| Branch::parse(s, branching).ok_or_else(|| CliError::Usage(format!("unknown branch `{s}` in --path"))))
        .collect::<Result<_, _>>()?;
    let w = if branches.len() == 1 && inst.tree.stages() != 1 {
        inst.tree.uniform_path(branches[0])?
    } else {
        inst.tree.find_path(&branches)?
    };
    Ok(w)
}

fn read_plan(path: &Path, inst: &Instance) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|err| CliError::Io { path: path.to_path_buf(), err })?;
    let plan: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(ventalloc::Error::from)?;
    let (stages, regions) = (inst.tree.stages(), inst.params.num_regions());
    if plan.len() != stages || plan.iter().any(|row| row.len() != regions) {
        return Err(ventalloc::Error::Dimension(format!("plan must be {stages} periods by {regions} regions")).into());
    }
    Ok(plan)
}

#[derive(Serialize)]
struct ScenarioSummary {
    scenario: usize,
    probability: f64,
    impacts: Vec<f64>,
    total_impact: f64,
    cumulative_infections: f64,
    depleted: bool,
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let cfg = load(&a.source, &a.overrides, None)?;
    let inst = cfg.instance()?;
    let plan = match &a.plan {
        Some(p) => read_plan(p, &inst)?,
        None => vec![vec![0.0; inst.params.num_regions()]; inst.tree.stages()],
    };
    let selection: Vec<usize> = match (&a.path, a.scenario) {
        (Some(spec), _) => vec![parse_path(&inst, spec)?],
        (None, Some(w)) => {
            inst.tree.scenario(w)?;
            vec![w]
        }
        (None, None) => (0..inst.tree.num_scenarios()).collect(),
    };
    let eval = evaluate_plan(&inst, &plan)?;
    let scenarios: Vec<ScenarioSummary> = selection
        .iter()
        .map(|&w| {
            let t = &eval.trajectories[w];
            ScenarioSummary {
                scenario: w,
                probability: inst.tree.scenarios()[w].probability,
                impacts: t.impacts(),
                total_impact: t.total_impact(),
                cumulative_infections: t.cumulative_infections(t.num_stages() - 1),
                depleted: t.depleted,
            }
        })
        .collect();
    let summary = json!({
        "name": cfg.name,
        "plan": plan,
        "expected_impact": eval.split.expected_impact,
        "expected_risk": eval.split.expected_risk,
        "objective": eval.split.objective,
        "depleted": eval.depleted,
        "scenarios": scenarios,
    });
    if eval.depleted {
        warn!("a susceptible pool ran dry; new infections were capped");
    }
    if let Some(dir) = &a.out {
        let runs: Vec<(usize, &Trajectory)> = selection.iter().map(|&w| (w, &eval.trajectories[w])).collect();
        let csv = csv_bytes(|b| write_trajectories(b, &region_names(&cfg), &runs))?;
        prepare_dir(dir)?;
        write_file(&dir.join("trajectories.csv"), &csv)?;
        write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&summary).unwrap().as_bytes())?;
        write_file(&dir.join("config.resolved.json"), cfg.to_json().as_bytes())?;
    }
    print_json(&summary)?;
    Ok(EXIT_OK)
}

pub fn optimize(a: OptimizeArgs) -> CliResult {
    let cfg = load(&a.source, &a.overrides, Some(&a.limits))?;
    let inst = cfg.instance()?;
    let form = formulate(&inst)?;
    let census = form.model.census();
    info!("model {}: {} rows, {} columns", cfg.name, census.constraints, census.variables);
    let res = solve_full(&inst, &form, cfg.solver.limits(), None)?;
    let solution = res.values().map(|x| extract_solution(&form, x, &inst.tree)).transpose()?;
    let report = OptimizeReport::new(&cfg.name, cfg.budget, inst.risk, res.clone(), census, solution.as_ref());
    match (res.status, &solution) {
        (MipStatus::Infeasible, _) => {
            print_json(&report)?;
            return Err(ventalloc::Error::Infeasible.into());
        }
        (status, None) => return Err(CliError::NoIncumbent(status)),
        _ => {}
    }
    let sol = solution.as_ref().expect("checked above");
    if let Some(dir) = &a.out {
        let regions = region_names(&cfg);
        let alloc = csv_bytes(|b| write_allocations(b, &regions, &sol.bundles))?;
        let trajs: Vec<Trajectory> =
            sol.trajectories.iter().map(|s| Trajectory { states: s.clone(), depleted: false }).collect();
        let runs: Vec<(usize, &Trajectory)> = trajs.iter().enumerate().collect();
        let traj = csv_bytes(|b| write_trajectories(b, &regions, &runs))?;
        prepare_dir(dir)?;
        write_file(&dir.join("allocations.csv"), &alloc)?;
        write_file(&dir.join("trajectories.csv"), &traj)?;
        write_file(&dir.join("optimize.json"), report.to_json().as_bytes())?;
        write_file(&dir.join("config.resolved.json"), cfg.to_json().as_bytes())?;
    }
    print_json(&report)?;
    if res.status.limit_hit() {
        warn!("stopped at {:?} with gap {:.3e}", res.status, res.gap);
        return Ok(EXIT_LIMIT);
    }
    Ok(EXIT_OK)
}

pub fn bounds(a: BoundsArgs) -> CliResult {
    let cfg = load(&a.source, &a.overrides, Some(&a.limits))?;
    let inst = cfg.instance()?;
    let selection: Vec<usize> =
        if a.scenarios.is_empty() { (0..inst.tree.num_scenarios()).collect() } else { a.scenarios.clone() };
    let mut rep = compute_bounds(&inst, &selection, cfg.solver.limits())?;
    if rep.lower_bound.is_none() {
        warn!("no lower bound: it needs every scenario selected and solved to optimality");
    }
    if a.compare_full {
        let form = formulate(&inst)?;
        let plan = &rep.scenarios.iter().find(|b| b.scenario == rep.best_scenario).expect("best is listed").allocation;
        let alloc = Allocation::uniform(inst.tree.num_scenarios(), plan);
        let seed = assignment_from_plan(&form, &inst.params, &inst.initial, &inst.tree, &inst.policy, &alloc)?;
        let mut limits = cfg.solver.limits();
        limits.time = Some(std::time::Duration::from_secs_f64(a.full_time_limit.max(0.0)));
        let full = solve_full(&inst, &form, limits, Some(&seed))?;
        rep.versus_full = Some(GapComparison::new(&full, rep.lower_bound, rep.upper_bound));
    }
    let text = rep.to_json();
    if let Some(dir) = &a.out {
        prepare_dir(dir)?;
        write_file(&dir.join("bounds.json"), text.as_bytes())?;
        write_file(&dir.join("config.resolved.json"), cfg.to_json().as_bytes())?;
    }
    print_text(&(text + "\n"))?;
    Ok(EXIT_OK)
}

pub fn export(a: ExportArgs) -> CliResult {
    let cfg = load(&a.source, &a.overrides, None)?;
    let inst = cfg.instance()?;
    let model = formulate(&inst)?.model;
    let text = match a.format {
        ExportFormat::Fixed => to_mps(&model, MpsFormat::Fixed),
        ExportFormat::Free => to_mps(&model, MpsFormat::Free),
        ExportFormat::Lp => to_lp(&model),
    };
    let census = serde_json::to_string_pretty(&model.census()).expect("census serializes");
    match &a.output {
        Some(p) => write_file(p, text.as_bytes())?,
        None => print_text(&text)?,
    }
    if let Some(p) = &a.census {
        write_file(p, census.as_bytes())?;
    }
    Ok(EXIT_OK)
}

#[derive(Deserialize)]
struct Pair {
    predicted: f64,
    observed: f64,
}

pub fn validate(a: ValidateArgs) -> CliResult {
    let cfg = load(&a.source, &a.overrides, None)?;
    let inst = cfg.instance()?;
    let census = formulate(&inst)?.model.census();
    let t_test = match &a.series {
        Some(path) => {
            let mut rd = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_path(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let pairs: Vec<Pair> = rd
                .deserialize()
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let (p, o): (Vec<f64>, Vec<f64>) = pairs.iter().map(|q| (q.predicted, q.observed)).unzip();
            Some(paired_t_test(&p, &o)?)
        }
        None => None,
    };
    let config: serde_json::Value = serde_json::from_str(&cfg.to_json()).expect("config round-trips");
    print_json(&json!({
        "config": config,
        "scenarios": inst.tree.num_scenarios(),
        "census": census,
        "t_test": t_test,
    }))?;
    Ok(EXIT_OK)
}

pub fn inspect(a: InspectArgs) -> CliResult {
    let cfg = load(&a.source, &a.overrides, None)?;
    let inst = cfg.instance()?;
    let dump = inst.tree.to_dump();
    match a.format {
        TreeFormat::Json => print_json(&dump)?,
        TreeFormat::Table => {
            use std::fmt::Write as _;
            let mut t = String::new();
            let _ = writeln!(t, "stages {}  branching {}  scenarios {}", dump.stages, dump.branching, dump.scenarios.len());
            let _ = writeln!(t, "{:>5} {:>5} {:>6} {:>7} {:>12} {:>12} {:>10}", "node", "stage", "parent", "branch", "sigma2", "prob", "std");
            for n in &dump.nodes {
                let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
                let branch = n.branch.as_deref().unwrap_or("root");
                let _ = writeln!(
                    t,
                    "{:>5} {:>5} {:>6} {:>7} {:>12.6} {:>12.6} {:>10.6}",
                    n.id, n.stage, parent, branch, n.value, n.prob, n.std
                );
            }
            print_text(&t)?;
        }
    }
    Ok(EXIT_OK)
}
