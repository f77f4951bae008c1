//! Exact CVaR evaluation over discrete distributions.
//!
//! The optimization model carries CVaR through auxiliary `η`/`z` variables.
//! This module computes the same quantities directly from sorted tails so
//! fixed allocations can be scored without an LP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario_tree::ScenarioTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Confidence level α.
    pub alpha: f64,
    /// Mean-risk trade-off weight λ.
    pub lambda: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig { alpha: 0.6, lambda: 1.0 }
    }
}

impl RiskConfig {
    pub fn neutral() -> Self {
        RiskConfig { alpha: 0.0, lambda: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Risk(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Risk(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// CVaR of a discrete distribution together with the minimizing `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarValue {
    pub var: f64,
    pub cvar: f64,
}

/// `min_η η + E[(v - η)+] / (1 - α)` for outcomes `values` with weights `probs`.
///
/// Weights are normalized internally, so conditional distributions can be
/// passed with their unconditional probabilities.
pub fn cvar(values: &[f64], probs: &[f64], alpha: f64) -> Result<CvarValue> {
    if values.len() != probs.len() || values.is_empty() {
        return Err(Error::Dimension("cvar needs one probability per outcome".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Risk(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let mass: f64 = probs.iter().sum();
    if !(mass > 0.0) || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Risk("probabilities must be non-negative with positive mass".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let tail = 1.0 - alpha;
    let mut remaining = tail;
    let mut acc = 0.0;
    let mut var = values[order[order.len() - 1]];
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let p = probs[i] / mass;
        let take = p.min(remaining);
        acc += take * values[i];
        remaining -= take;
        var = values[i];
    }
    // Rounding can leave a sliver of tail mass after the last outcome.
    if remaining > 0.0 {
        acc += remaining * var;
    }
    Ok(CvarValue { var, cvar: acc / tail })
}

/// Stage-wise CVaR of stage impacts over the scenario set.
///
/// Each stage has one value-at-risk `η_j` shared by every scenario, and the
/// risk term is `CVaR_α` of the stage-`j` impact distribution over all
/// scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRisk {
    /// `CVaR_α(impact_j)` for each stage.
    pub per_stage: Vec<f64>,
    /// Minimizing value-at-risk of each stage.
    pub eta: Vec<f64>,
    /// `z[ω][j] = max(impact - η_j, 0)`.
    pub z: Vec<Vec<f64>>,
}

impl StageRisk {
    pub fn total(&self) -> f64 {
        self.per_stage.iter().sum()
    }
}

/// Evaluates the stage-wise risk of `impacts[ω][j]` for `j = 0..=J̄`.
pub fn stage_cvar(tree: &ScenarioTree, impacts: &[Vec<f64>], alpha: f64) -> Result<StageRisk> {
    let stages = tree.stages();
    if impacts.len() != tree.num_scenarios() || impacts.iter().any(|row| row.len() != stages + 1) {
        return Err(Error::Dimension(format!(
            "impacts must be {} scenarios x {} stages",
            tree.num_scenarios(),
            stages + 1
        )));
    }
    let probs: Vec<f64> = tree.scenarios().iter().map(|s| s.probability).collect();
    let mut per_stage = vec![0.0; stages + 1];
    let mut eta = vec![0.0; stages + 1];
    let mut z = vec![vec![0.0; stages + 1]; impacts.len()];
    for j in 0..=stages {
        let vals: Vec<f64> = impacts.iter().map(|row| row[j]).collect();
        let c = cvar(&vals, &probs, alpha)?;
        per_stage[j] = c.cvar;
        eta[j] = c.var;
        for (w, row) in impacts.iter().enumerate() {
            z[w][j] = (row[j] - c.var).max(0.0);
        }
    }
    Ok(StageRisk { per_stage, eta, z })
}

/// Expected impact `Σ_ω p^ω Σ_j impact` and stage-wise risk for a set of scenario impacts.
pub fn evaluate_objective(tree: &ScenarioTree, impacts: &[Vec<f64>], risk: &RiskConfig) -> Result<ObjectiveSplit> {
    risk.validate()?;
    let expected_impact = tree
        .scenarios()
        .iter()
        .map(|s| s.probability * impacts[s.id].iter().sum::<f64>())
        .sum();
    let expected_risk = stage_cvar(tree, impacts, risk.alpha)?.total();
    Ok(ObjectiveSplit { expected_impact, expected_risk, objective: expected_impact + risk.lambda * expected_risk })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSplit {
    pub expected_impact: f64,
    /// Risk term without the λ weight.
    pub expected_risk: f64,
    pub objective: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_cvar(values: &[f64], probs: &[f64], alpha: f64) -> f64 {
        // Independent oracle: the objective is piecewise linear in η with
        // breakpoints at the outcomes, so scanning them finds the infimum.
        let mass: f64 = probs.iter().sum();
        values
            .iter()
            .map(|&eta| {
                eta + values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p / mass * (v - eta).max(0.0))
                    .sum::<f64>()
                    / (1.0 - alpha)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn point_mass_and_mean() {
        let c = cvar(&[5.0], &[1.0], 0.9).unwrap();
        assert_eq!((c.var, c.cvar), (5.0, 5.0));
        let c = cvar(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0], 0.0).unwrap();
        assert!((c.cvar - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nine_outcome_toy_matches_grid() {
        let vals = [12.0, 3.0, 7.5, 9.0, 1.0, 4.0, 15.0, 6.0, 2.5];
        let probs = [0.09, 0.12, 0.09, 0.12, 0.16, 0.12, 0.09, 0.12, 0.09];
        let c = cvar(&vals, &probs, 0.6).unwrap();
        assert!((c.cvar - grid_cvar(&vals, &probs, 0.6)).abs() < 1e-9);
    }

    #[test]
    fn rejects_alpha_one() {
        assert!(cvar(&[1.0], &[1.0], 1.0).is_err());
        assert!(RiskConfig { alpha: 1.0, lambda: 1.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn sorted_tail_equals_infimum(
            pairs in proptest::collection::vec((-100.0f64..100.0, 0.01f64..1.0), 1..12),
            alpha in 0.0f64..0.99,
        ) {
            let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let probs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let c = cvar(&vals, &probs, alpha).unwrap();
            let oracle = grid_cvar(&vals, &probs, alpha);
            prop_assert!((c.cvar - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
            let mass: f64 = probs.iter().sum();
            let at_var = c.var + vals.iter().zip(&probs).map(|(v, p)| p / mass * (v - c.var).max(0.0)).sum::<f64>() / (1.0 - alpha);
            prop_assert!((at_var - c.cvar).abs() <= 1e-9 * (1.0 + oracle.abs()));
        }

        #[test]
        fn cvar_monotone_in_alpha(
            pairs in proptest::collection::vec((0.0f64..100.0, 0.01f64..1.0), 1..10),
            a in 0.0f64..0.99, b in 0.0f64..0.99,
        ) {
            let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let probs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let c_lo = cvar(&vals, &probs, lo).unwrap().cvar;
            let c_hi = cvar(&vals, &probs, hi).unwrap().cvar;
            prop_assert!(c_hi >= c_lo - 1e-9);
        }
    }
}
