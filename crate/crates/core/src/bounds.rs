//! Scenario-decomposition bounds.
//!
//! A scenario subproblem prices only one scenario of the deterministic
//! equivalent. The sum of their optima bounds the full optimum from below.
//! Each subproblem's allocation path, applied to every scenario, is a
//! feasible plan whose exact objective bounds it from above.
//!
//! Any budget-feasible allocation on one path extends to the others (copy
//! the shared decisions, send nothing afterwards), so the other scenarios'
//! rows never bind. The subproblem is therefore solved on the scenario's own
//! path, scaled by its probability, which leaves the optimum unchanged and
//! keeps the branch-and-bound away from variables with no objective weight.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Instance;
use crate::epidemic::Trajectory;
use crate::error::{Error, Result};
use crate::milp::{build, simulate_all, solve_allocation, Allocation, Formulation};
use crate::risk::{evaluate_objective, ObjectiveSplit};
use crate::solver::{relative_gap, MipLimits, MipResult, MipStatus};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioBound {
    pub scenario: usize,
    pub probability: f64,
    pub status: MipStatus,
    /// Subproblem optimum, already weighted by the scenario probability.
    pub z_omega: f64,
    /// Subproblem dual bound; equals `z_omega` when solved to optimality.
    pub z_bound: f64,
    /// Ventilators along this scenario's path, `[period - 1][region]`.
    pub allocation: Vec<Vec<f64>>,
    /// Full objective with `allocation` applied in every scenario.
    pub eval_full: f64,
    pub eval: ObjectiveSplit,
    /// Whether the plan drains a susceptible pool in some scenario.
    pub depleted: bool,
}

/// Full-problem objective of one allocation plan used in every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEvaluation {
    pub split: ObjectiveSplit,
    pub trajectories: Vec<Trajectory>,
    pub depleted: bool,
}

/// Simulates `plan[k - 1][r]` in every scenario and scores it with exact CVaR.
pub fn evaluate_plan(inst: &Instance, plan: &[Vec<f64>]) -> Result<PlanEvaluation> {
    let cost: f64 = plan.iter().flatten().sum::<f64>() * inst.params.vent_cost;
    if cost > inst.params.budget * (1.0 + 1e-12) + 1e-9 {
        return Err(Error::Budget { cost, budget: inst.params.budget });
    }
    let alloc = Allocation::uniform(inst.tree.num_scenarios(), plan);
    let trajectories = simulate_all(&inst.params, &inst.initial, &inst.tree, &inst.policy, &alloc)?;
    let impacts: Vec<Vec<f64>> = trajectories.iter().map(|t| t.impacts()).collect();
    let split = evaluate_objective(&inst.tree, &impacts, &inst.risk)?;
    let depleted = trajectories.iter().any(|t| t.depleted);
    Ok(PlanEvaluation { split, trajectories, depleted })
}

pub fn formulate(inst: &Instance) -> Result<Formulation> {
    build(&inst.params, &inst.initial, &inst.tree, &inst.policy, inst.risk)
}

/// Full deterministic-equivalent solve of `inst`.
pub fn solve_full(inst: &Instance, form: &Formulation, limits: MipLimits, seed: Option<&[f64]>) -> Result<MipResult> {
    solve_allocation(form, &inst.params, &inst.initial, &inst.tree, &inst.policy, limits, seed)
}

/// Model of scenario `w` alone, with objective weighted by its probability.
pub fn path_formulation(inst: &Instance, w: usize) -> Result<Formulation> {
    let p = inst.tree.scenario(w)?.probability;
    let path = inst.tree.path_tree(w)?;
    let mut form = build(&inst.params, &inst.initial, &path, &inst.policy, inst.risk)?;
    for (_, c) in form.model.objective.iter_mut() {
        *c *= p;
    }
    form.model.name = format!("{}_scenario_{w}", form.model.name);
    Ok(form)
}

/// Solves the subproblem of scenario `w` and evaluates its allocation path.
pub fn scenario_subproblem(inst: &Instance, w: usize, limits: MipLimits) -> Result<ScenarioBound> {
    let scenario = inst.tree.scenario(w)?;
    let form = path_formulation(inst, w)?;
    let path = inst.tree.path_tree(w)?;
    let res = solve_allocation(&form, &inst.params, &inst.initial, &path, &inst.policy, limits, None)?;
    let x = match (res.status, res.values()) {
        (MipStatus::Infeasible, _) | (_, None) => {
            return Err(Error::Model(format!(
                "subproblem of scenario {w} has no feasible point; the zero allocation should always be feasible"
            )))
        }
        (_, Some(x)) => x,
    };
    let ix = &form.index;
    let allocation: Vec<Vec<f64>> =
        (1..=ix.stages).map(|k| (0..ix.regions).map(|r| x[ix.y(k, r, 0)].round() + 0.0).collect()).collect();
    let eval = evaluate_plan(inst, &allocation)?;
    Ok(ScenarioBound {
        scenario: w,
        probability: scenario.probability,
        status: res.status,
        z_omega: res.objective.unwrap_or(f64::INFINITY),
        z_bound: res.bound,
        allocation,
        eval_full: eval.split.objective,
        eval: eval.split,
        depleted: eval.depleted,
    })
}

/// Sum of the subproblem dual bounds, refused unless every scenario of the
/// tree was solved to its requested gap. At gap zero this is `Σ_ω Z^ω`.
pub fn lower_bound(bounds: &[ScenarioBound], num_scenarios: usize) -> Result<f64> {
    let mut seen = vec![false; num_scenarios];
    for b in bounds {
        if b.status != MipStatus::Optimal {
            return Err(Error::NotOptimal(format!(
                "scenario {} stopped with status {:?}; the lower bound needs every optimum",
                b.scenario, b.status
            )));
        }
        if let Some(s) = seen.get_mut(b.scenario) {
            *s = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::NotOptimal(format!("scenario {missing} was not solved; the lower bound needs all of them")));
    }
    Ok(bounds.iter().map(|b| b.z_bound).sum())
}

/// Best evaluated plan: `(min_ω eval_full, argmin scenario)`.
pub fn upper_bound(bounds: &[ScenarioBound]) -> Result<(f64, usize)> {
    bounds
        .iter()
        .filter(|b| b.eval_full.is_finite())
        .min_by(|a, b| a.eval_full.total_cmp(&b.eval_full).then(a.scenario.cmp(&b.scenario)))
        .map(|b| (b.eval_full, b.scenario))
        .ok_or_else(|| Error::NotOptimal("no scenario subproblem produced an allocation".into()))
}

/// Gap of a time-limited full solve before and after applying the bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapComparison {
    pub full_objective: Option<f64>,
    pub full_bound: f64,
    pub full_gap: f64,
    pub combined_upper: f64,
    pub combined_lower: f64,
    pub combined_gap: f64,
    pub gap_closed: f64,
}

impl GapComparison {
    pub fn new(full: &MipResult, lower: Option<f64>, upper: f64) -> Self {
        let full_gap = full.objective.map_or(f64::INFINITY, |o| relative_gap(o, full.bound));
        let combined_upper = full.objective.map_or(upper, |o| o.min(upper));
        let combined_lower = lower.map_or(full.bound, |l| l.max(full.bound));
        let combined_gap = relative_gap(combined_upper, combined_lower);
        let gap_closed = if full_gap.is_finite() { full_gap - combined_gap } else { f64::INFINITY };
        GapComparison {
            full_objective: full.objective,
            full_bound: full.bound,
            full_gap,
            combined_upper,
            combined_lower,
            combined_gap,
            gap_closed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub scenarios: Vec<ScenarioBound>,
    /// Absent when some subproblem was not solved to optimality or only a
    /// subset of scenarios was selected.
    pub lower_bound: Option<f64>,
    pub upper_bound: f64,
    pub best_scenario: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub versus_full: Option<GapComparison>,
}

impl BoundsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Solves the selected scenario subproblems in parallel and assembles both bounds.
pub fn compute_bounds(inst: &Instance, selection: &[usize], limits: MipLimits) -> Result<BoundsReport> {
    if selection.is_empty() {
        return Err(Error::param("scenarios", "select at least one scenario"));
    }
    for &w in selection {
        inst.tree.scenario(w)?;
    }
    let mut scenarios: Vec<ScenarioBound> = selection
        .par_iter()
        .map(|&w| scenario_subproblem(inst, w, limits))
        .collect::<Result<_>>()?;
    scenarios.sort_by_key(|b| b.scenario);
    scenarios.dedup_by_key(|b| b.scenario);
    let lower_bound = lower_bound(&scenarios, inst.tree.num_scenarios()).ok();
    let (upper_bound, best_scenario) = upper_bound(&scenarios)?;
    Ok(BoundsReport { scenarios, lower_bound, upper_bound, best_scenario, versus_full: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn single_scenario_tree_is_exact() {
        let mut cfg = fixtures::load("reduced_2region").unwrap();
        cfg.tree.stages = 0;
        cfg.policy = crate::config::PolicySpec::Explicit(vec![]);
        let inst = cfg.instance().unwrap();
        let rep = compute_bounds(&inst, &[0], MipLimits::exact()).unwrap();
        let lb = rep.lower_bound.unwrap();
        assert!((lb - rep.upper_bound).abs() <= 1e-6 * lb.abs().max(1.0));
    }

    #[test]
    fn refuses_non_optimal() {
        let b = ScenarioBound {
            scenario: 0,
            probability: 1.0,
            status: MipStatus::TimeLimit,
            z_omega: 1.0,
            z_bound: 0.5,
            allocation: vec![],
            eval_full: 1.0,
            eval: ObjectiveSplit { expected_impact: 1.0, expected_risk: 0.0, objective: 1.0 },
            depleted: false,
        };
        assert!(lower_bound(&[b.clone()], 1).is_err());
        let ok = ScenarioBound { status: MipStatus::Optimal, ..b };
        assert!(lower_bound(&[ok.clone()], 2).is_err());
        assert_eq!(lower_bound(&[ok], 1).unwrap(), 0.5);
    }
}
