//! Best-bound branch-and-bound over the simplex relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::simplex::{Basis, LpData, LpSolution, LpStatus, Simplex, SimplexOptions};
use crate::error::{Error, Result};
use crate::milp::{MilpModel, VarKind, FEAS_TOL, INT_TOL};

/// Largest row count the dense factorization is allowed to take on.
pub const MAX_ROWS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MipLimits {
    #[serde(with = "opt_secs")]
    pub time: Option<Duration>,
    /// Relative gap at which the search stops.
    pub gap: f64,
    pub nodes: Option<usize>,
}

mod opt_secs {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }
}

impl MipLimits {
    /// Stop only when the tree is exhausted.
    pub fn exact() -> Self {
        MipLimits { gap: 0.0, ..MipLimits::default() }
    }
}

impl Default for MipLimits {
    fn default() -> Self {
        MipLimits { time: None, gap: 1e-4, nodes: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MipStatus {
    Optimal,
    Infeasible,
    TimeLimit,
    NodeLimit,
}

impl MipStatus {
    pub fn limit_hit(&self) -> bool {
        matches!(self, MipStatus::TimeLimit | MipStatus::NodeLimit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MipResult {
    pub status: MipStatus,
    #[serde(skip)]
    pub incumbent: Option<LpSolution>,
    pub objective: Option<f64>,
    /// Best proven lower bound.
    pub bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
    pub lp_iterations: usize,
    #[serde(serialize_with = "secs")]
    pub wall_time: Duration,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl MipResult {
    pub fn values(&self) -> Option<&[f64]> {
        self.incumbent.as_ref().map(|s| s.values.as_slice())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

struct Node {
    bound: f64,
    id: usize,
    changes: Vec<(usize, f64, f64)>,
    basis: Rc<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then oldest node.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.id.cmp(&self.id))
    }
}

pub(crate) fn check_size(model: &MilpModel) -> Result<()> {
    if model.num_constraints() > MAX_ROWS {
        return Err(Error::TooLarge { rows: model.num_constraints(), limit: MAX_ROWS });
    }
    Ok(())
}

/// Solves `model` to the requested gap or until a limit is hit.
pub fn solve_mip(model: &MilpModel, limits: MipLimits) -> Result<MipResult> {
    solve_mip_warm(model, limits, None)
}

/// Validates a starting assignment. The error names the worst violated row.
pub fn warm_start(model: &MilpModel, assignment: &[f64]) -> Result<LpSolution> {
    model.check_feasible(assignment, FEAS_TOL)?;
    let mut values = assignment.to_vec();
    for (v, var) in values.iter_mut().zip(&model.variables) {
        if var.kind.is_integral() {
            *v = v.round();
        }
    }
    Ok(LpSolution { status: LpStatus::Optimal, objective: model.objective_value(&values), values, iterations: 0 })
}

struct Search<'a> {
    model: &'a MilpModel,
    integers: Vec<usize>,
    incumbent: Option<LpSolution>,
}

impl Search<'_> {
    fn cutoff(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }

    /// Accepts `x` as incumbent if it is feasible and strictly better.
    fn offer(&mut self, mut x: Vec<f64>, source: &str) -> bool {
        for &j in &self.integers {
            x[j] = x[j].round();
        }
        if self.model.check_feasible(&x, FEAS_TOL).is_err() {
            return false;
        }
        let obj = self.model.objective_value(&x);
        if obj < self.cutoff() - 1e-9 * obj.abs().max(1.0) {
            log::debug!("new incumbent {obj:.9} from {source}");
            self.incumbent = Some(LpSolution { status: LpStatus::Optimal, objective: obj, values: x, iterations: 0 });
            return true;
        }
        false
    }

    /// Rounds fractional integers one at a time in whichever direction keeps
    /// every row within its range, given the other values. Returns the
    /// rounded point when every integer could be placed.
    fn round_by_rows(&self, x: &[f64], activity: &mut [f64], rows_of: &[Vec<(usize, f64)>]) -> Option<Vec<f64>> {
        let mut x = x.to_vec();
        for &j in &self.integers {
            let v = x[j];
            if (v - v.round()).abs() <= INT_TOL {
                continue;
            }
            let var = &self.model.variables[j];
            let mut cands = [v.floor(), v.ceil()];
            if v - v.floor() > 0.5 {
                cands.swap(0, 1);
            }
            let mut placed = false;
            for c in cands {
                if c < var.lower - INT_TOL || c > var.upper + INT_TOL {
                    continue;
                }
                let shift = c - v;
                let ok = rows_of[j].iter().all(|&(i, a)| {
                    let (lo, hi) = self.model.constraints[i].range();
                    let act = activity[i] + a * shift;
                    let tol = FEAS_TOL * act.abs().max(1.0);
                    act >= lo - tol && act <= hi + tol
                });
                if ok {
                    for &(i, a) in &rows_of[j] {
                        activity[i] += a * shift;
                    }
                    x[j] = c;
                    placed = true;
                    break;
                }
            }
            if !placed {
                return None;
            }
        }
        Some(x)
    }
}

/// Model-specific help for the search.
#[derive(Default)]
pub struct MipHooks<'a> {
    /// Maps a node's relaxed point to a feasible assignment, if it can.
    pub complete: Option<&'a (dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync)>,
    /// Integer variables branched on before any other.
    pub priority: Vec<usize>,
}

/// Branch-and-bound, optionally seeded with a feasible assignment.
pub fn solve_mip_warm(model: &MilpModel, limits: MipLimits, seed: Option<&[f64]>) -> Result<MipResult> {
    solve_mip_hooked(model, limits, seed, &MipHooks::default())
}

pub fn solve_mip_hooked(
    model: &MilpModel,
    limits: MipLimits,
    seed: Option<&[f64]>,
    hooks: &MipHooks,
) -> Result<MipResult> {
    check_size(model)?;
    let start = Instant::now();
    let data = LpData::from_model(model)?;
    let integers: Vec<usize> =
        (0..model.num_vars()).filter(|&j| model.variables[j].kind.is_integral()).collect();
    let mut first = vec![false; model.num_vars()];
    for &j in &hooks.priority {
        if !model.variables.get(j).is_some_and(|v| v.kind.is_integral()) {
            return Err(Error::Model(format!("branching priority names non-integer column {j}")));
        }
        first[j] = true;
    }
    for &j in &integers {
        let v = &model.variables[j];
        if !v.lower.is_finite() || !v.upper.is_finite() {
            return Err(Error::Model(format!("integer variable {} needs finite bounds", v.name)));
        }
    }
    let mut rows_of: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (i, row) in model.constraints.iter().enumerate() {
        for &(j, a) in &row.terms {
            rows_of[j].push((i, a));
        }
    }
    let mut search = Search { model, integers, incumbent: None };
    if let Some(x) = seed {
        let sol = warm_start(model, x)?;
        log::info!("warm start incumbent {:.9}", sol.objective);
        search.incumbent = Some(sol);
    }

    let mut lp = Simplex::new(&data, SimplexOptions::default());
    let root_status = lp.solve_primal();
    let mut nodes_explored = 1usize;
    let finish = |search: Search, status: MipStatus, bound: f64, nodes: usize, iters: usize| {
        let objective = search.incumbent.as_ref().map(|s| s.objective);
        let bound = match objective {
            Some(o) if status == MipStatus::Optimal => bound.min(o),
            _ => bound,
        };
        let gap = objective.map_or(f64::INFINITY, |o| relative_gap(o, bound));
        let res = MipResult {
            status,
            incumbent: search.incumbent,
            objective,
            bound,
            gap,
            nodes_explored: nodes,
            lp_iterations: iters,
            wall_time: start.elapsed(),
        };
        log::info!(
            "done: status {:?} nodes {} bound {:.9} incumbent {:?} gap {:.3e} elapsed {:.2}s",
            res.status,
            res.nodes_explored,
            res.bound,
            res.objective,
            res.gap,
            res.wall_time.as_secs_f64()
        );
        res
    };
    match root_status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(finish(search, MipStatus::Infeasible, f64::INFINITY, 1, lp.iterations));
        }
        LpStatus::Unbounded => return Err(Error::Unbounded),
        LpStatus::IterationLimit => return Err(Error::IterationLimit(lp.iterations)),
        LpStatus::Cutoff => unreachable!("primal solve has no cutoff"),
    }
    let root_bound = lp.objective();
    log::info!(
        "root relaxation {:.9} after {} iterations ({} rows, {} columns, {} integer)",
        root_bound,
        lp.iterations,
        data.m,
        data.n,
        search.integers.len()
    );

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    // The root is processed inline: its LP is already solved.
    let mut current: Option<(Vec<(usize, f64, f64)>, f64)> = Some((Vec::new(), root_bound));
    let mut last_log = Instant::now();
    let mut global_bound = root_bound;
    // Smallest bound among nodes dropped only because of the gap tolerance.
    let mut pruned = f64::INFINITY;
    loop {
        if let Some((changes, node_bound)) = current.take() {
            let bound = lp.objective();
            let x = lp.values().to_vec();
            let _ = node_bound;
            // Most fractional integer, priority columns first, ties to the lowest index.
            let mut branch: Option<(usize, bool, f64)> = None;
            for &j in &search.integers {
                let f = x[j] - x[j].floor();
                let dist = f.min(1.0 - f);
                if dist <= INT_TOL {
                    continue;
                }
                let better = match branch {
                    None => true,
                    Some((_, p, d)) => (first[j] && !p) || (first[j] == p && dist > d + 1e-12),
                };
                if better {
                    branch = Some((j, first[j], dist));
                }
            }
            if branch.is_some() {
                if let Some(c) = hooks.complete.and_then(|f| f(&x)) {
                    search.offer(c, "completion");
                }
            }
            let branch = branch.map(|(j, _, d)| (j, d));
            match branch {
                None => {
                    search.offer(x, "relaxation");
                }
                Some((j, _)) => {
                    let mut activity: Vec<f64> = model.constraints.iter().map(|r| r.activity(&x)).collect();
                    if let Some(r) = search.round_by_rows(&x, &mut activity, &rows_of) {
                        search.offer(r, "rounding");
                    }
                    let cut = search.cutoff();
                    if bound >= cut - prune_tol(cut, limits.gap) {
                        pruned = pruned.min(bound);
                    } else {
                        let basis = Rc::new(lp.basis());
                        let v = x[j];
                        let (lo, hi) = current_bounds(&lp, j);
                        let mut down = changes.clone();
                        down.push((j, lo, v.floor()));
                        let mut up = changes;
                        up.push((j, v.ceil(), hi));
                        for ch in [down, up] {
                            heap.push(Node { bound, id: next_id, changes: ch, basis: Rc::clone(&basis) });
                            next_id += 1;
                        }
                    }
                }
            }
        }

        let cut = search.cutoff();
        while let Some(n) = heap.peek() {
            if n.bound < cut - prune_tol(cut, limits.gap) {
                break;
            }
            pruned = pruned.min(n.bound);
            heap.pop();
        }
        let open = heap.peek().map_or(cut, |n| n.bound).min(pruned).min(cut);
        global_bound = open.max(global_bound.min(cut));
        let gap = relative_gap(cut, global_bound);
        if last_log.elapsed() > Duration::from_secs(5) {
            log::info!(
                "nodes {} open {} bound {:.9} incumbent {:.9} gap {:.3e} elapsed {:.1}s",
                nodes_explored,
                heap.len(),
                global_bound,
                cut,
                gap,
                start.elapsed().as_secs_f64()
            );
            last_log = Instant::now();
        }
        if heap.is_empty() || gap <= limits.gap {
            let status = if search.incumbent.is_some() { MipStatus::Optimal } else { MipStatus::Infeasible };
            let bound = if heap.is_empty() { pruned.min(cut) } else { global_bound };
            return Ok(finish(search, status, bound, nodes_explored, lp.iterations));
        }
        if limits.nodes.is_some_and(|n| nodes_explored >= n) {
            return Ok(finish(search, MipStatus::NodeLimit, global_bound, nodes_explored, lp.iterations));
        }
        if limits.time.is_some_and(|t| start.elapsed() >= t) {
            return Ok(finish(search, MipStatus::TimeLimit, global_bound, nodes_explored, lp.iterations));
        }

        let node = heap.pop().expect("heap is not empty");
        nodes_explored += 1;
        lp.set_bounds(&node.changes);
        lp.set_basis(&node.basis);
        let cut = search.cutoff();
        match lp.solve_dual(cut) {
            LpStatus::Optimal => {
                current = Some((node.changes, node.bound));
            }
            LpStatus::Infeasible | LpStatus::Cutoff => {}
            LpStatus::Unbounded => return Err(Error::Unbounded),
            LpStatus::IterationLimit => return Err(Error::IterationLimit(lp.iterations)),
        }
    }
}

fn prune_tol(incumbent: f64, gap: f64) -> f64 {
    if !incumbent.is_finite() {
        return 0.0;
    }
    (gap * incumbent.abs().max(1.0)).max(1e-9 * incumbent.abs().max(1.0))
}

fn current_bounds(lp: &Simplex, j: usize) -> (f64, f64) {
    (lp.lower[j], lp.upper[j])
}

/// Integer feasibility check shared with callers that post-process incumbents.
pub fn is_integral(model: &MilpModel, x: &[f64]) -> bool {
    model
        .variables
        .iter()
        .zip(x)
        .all(|(v, &val)| v.kind == VarKind::Continuous || (val - val.round()).abs() <= INT_TOL)
}
