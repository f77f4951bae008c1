use serde::Serialize;

use super::build::{Allocation, Formulation};
use super::FEAS_TOL;
use crate::epidemic::CompartmentState;
use crate::error::Result;
use crate::risk::stage_cvar;
use crate::scenario_tree::{NodeId, ScenarioTree};

/// Ventilators sent to each region in period `stage` for the scenarios of one bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleAllocation {
    pub stage: usize,
    /// Node at depth `stage - 1` whose scenarios share this decision.
    pub node: NodeId,
    pub first_scenario: usize,
    pub last_scenario: usize,
    pub probability: f64,
    pub ventilators: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub bundles: Vec<BundleAllocation>,
    /// `trajectories[ω][j][r]`.
    pub trajectories: Vec<Vec<Vec<CompartmentState>>>,
    /// `Σ_ω p^ω Σ_j Σ_r (I + F)`.
    pub expected_impact: f64,
    /// Exact stage-wise CVaR of the stage impacts, without the λ weight.
    pub expected_risk: f64,
    /// `Σ_ω p^ω Σ_j (η + z / (1 - α))` as carried by the assignment.
    pub model_risk: f64,
    pub objective: f64,
}

impl Solution {
    pub fn total_ventilators(&self, w: usize) -> f64 {
        self.allocation.total(w)
    }
}

/// Reads allocations, trajectories and the objective split from a feasible assignment.
pub fn extract_solution(form: &Formulation, x: &[f64], tree: &ScenarioTree) -> Result<Solution> {
    form.model.check_feasible(x, FEAS_TOL)?;
    let ix = &form.index;
    let allocation = Allocation::from_assignment(ix, x);
    let mut bundles = Vec::new();
    for k in 1..=ix.stages {
        for &n in tree.level(k - 1) {
            let node = tree.node(n)?;
            bundles.push(BundleAllocation {
                stage: k,
                node: n,
                first_scenario: node.bundle.start,
                last_scenario: node.bundle.end - 1,
                probability: node.path_prob,
                ventilators: allocation.per_scenario[node.bundle.start][k - 1].clone(),
            });
        }
    }
    let trajectories: Vec<_> = (0..ix.scenarios).map(|w| form.trajectory(x, w)).collect();
    let impacts: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|t| t.iter().map(|stage| stage.iter().map(CompartmentState::impact).sum()).collect())
        .collect();
    let expected_impact = impacts
        .iter()
        .zip(&form.probabilities)
        .map(|(row, p)| p * row.iter().sum::<f64>())
        .sum();
    let expected_risk = stage_cvar(tree, &impacts, form.risk.alpha)?.total();
    let model_risk = (0..ix.scenarios)
        .map(|w| {
            form.probabilities[w]
                * (0..=ix.stages).map(|j| x[ix.eta(j, w)] + x[ix.z(j, w)] / (1.0 - form.risk.alpha)).sum::<f64>()
        })
        .sum();
    Ok(Solution {
        allocation,
        bundles,
        trajectories,
        expected_impact,
        expected_risk,
        model_risk,
        objective: form.model.objective_value(x),
    })
}
