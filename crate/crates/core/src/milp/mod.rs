//! Generic mixed-integer linear model plus the ventilator allocation
//! formulation built on top of it.

mod build;
pub mod export;
mod linearize;
mod solution;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub use build::{
    assignment_from_plan, build, floor_allocation, simulate_all, solve_allocation, Allocation, Compartment, ExpectedCensus, Flow, Formulation, VarIndex,
};
pub use linearize::{linearize_min, LinExpr};
pub use solution::{extract_solution, BundleAllocation, Solution};

pub type VarId = usize;

/// Feasibility tolerance used when checking assignments.
pub const FEAS_TOL: f64 = 1e-6;
/// Integrality tolerance.
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_integral(&self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub family: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub family: &'static str,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }

    /// Row bounds `[lo, hi]` on the activity.
    pub fn range(&self) -> (f64, f64) {
        match self.sense {
            Sense::Le => (f64::NEG_INFINITY, self.rhs),
            Sense::Ge => (self.rhs, f64::INFINITY),
            Sense::Eq => (self.rhs, self.rhs),
        }
    }
}

/// Minimization model. Variables and rows keep insertion order, which is
/// also the export order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MilpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(VarId, f64)>,
    /// Constant added to the objective.
    pub objective_offset: f64,
}

/// Counts of variables and rows by family.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Census {
    pub variables: usize,
    pub constraints: usize,
    pub integer_variables: usize,
    pub binary_variables: usize,
    pub nonzeros: usize,
    pub variables_by_family: BTreeMap<String, usize>,
    pub constraints_by_family: BTreeMap<String, usize>,
}

/// Worst row or bound violation of an assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub what: String,
    pub amount: f64,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel { name: name.into(), ..Default::default() }
    }

    pub fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64, family: &'static str) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.variables.push(Variable { name, kind, lower, upper, family });
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: String,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        family: &'static str,
    ) -> usize {
        self.constraints.push(Constraint { name, terms: merge_terms(terms), sense, rhs, family });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn has_integers(&self) -> bool {
        self.variables.iter().any(|v| v.kind.is_integral())
    }

    /// Copy with every integer and binary variable relaxed to continuous.
    pub fn relaxed(&self) -> MilpModel {
        let mut m = self.clone();
        for v in &mut m.variables {
            v.kind = VarKind::Continuous;
        }
        m
    }

    pub fn with_objective(&self, objective: Vec<(VarId, f64)>, offset: f64) -> MilpModel {
        let mut m = self.clone();
        m.objective = merge_terms(objective);
        m.objective_offset = offset;
        m
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    pub fn census(&self) -> Census {
        let mut c = Census {
            variables: self.variables.len(),
            constraints: self.constraints.len(),
            ..Default::default()
        };
        for v in &self.variables {
            *c.variables_by_family.entry(v.family.to_string()).or_default() += 1;
            match v.kind {
                VarKind::Integer => c.integer_variables += 1,
                VarKind::Binary => c.binary_variables += 1,
                VarKind::Continuous => {}
            }
        }
        for row in &self.constraints {
            *c.constraints_by_family.entry(row.family.to_string()).or_default() += 1;
            c.nonzeros += row.terms.len();
        }
        c
    }

    /// Structural checks: references, bounds, finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Model(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
        }
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(Error::Model(format!("row {} has non-finite rhs", row.name)));
            }
            for &(j, a) in &row.terms {
                if j >= n {
                    return Err(Error::Model(format!("row {} references undeclared variable {j}", row.name)));
                }
                if !a.is_finite() {
                    return Err(Error::Model(format!("row {} has a non-finite coefficient", row.name)));
                }
            }
        }
        if self.objective.iter().any(|&(j, c)| j >= n || !c.is_finite()) {
            return Err(Error::Model("objective references an undeclared variable or non-finite cost".into()));
        }
        Ok(())
    }

    /// Largest violation of bounds, rows and integrality.
    pub fn max_violation(&self, x: &[f64]) -> Violation {
        let mut worst = Violation { what: String::new(), amount: 0.0 };
        let mut note = |what: &dyn Fn() -> String, amount: f64| {
            if amount > worst.amount {
                worst = Violation { what: what(), amount };
            }
        };
        for (j, v) in self.variables.iter().enumerate() {
            let val = x[j];
            note(&|| format!("bounds of {}", v.name), (v.lower - val).max(val - v.upper).max(0.0));
            if v.kind.is_integral() {
                note(&|| format!("integrality of {}", v.name), (val - val.round()).abs());
            }
        }
        for row in &self.constraints {
            let viol = row.violation(x);
            // Relative to the row magnitude once terms exceed 1.
            let scale = row.terms.iter().map(|&(j, a)| (a * x[j]).abs()).fold(row.rhs.abs(), f64::max).max(1.0);
            note(&|| row.name.clone(), viol / scale);
        }
        worst
    }

    /// Fails with the worst violation when `x` is not feasible within `tol`.
    pub fn check_feasible(&self, x: &[f64], tol: f64) -> Result<()> {
        if x.len() != self.variables.len() {
            return Err(Error::Dimension(format!(
                "assignment has {} values for {} variables",
                x.len(),
                self.variables.len()
            )));
        }
        let v = self.max_violation(x);
        if v.amount > tol {
            return Err(Error::InfeasibleAssignment { constraint: v.what, violation: v.amount });
        }
        Ok(())
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }
}

/// Sorts terms by variable and merges duplicates; exact-zero coefficients are dropped.
pub fn merge_terms(mut terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (j, a) in terms {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}
