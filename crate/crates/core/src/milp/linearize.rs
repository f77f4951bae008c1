use super::{MilpModel, Sense, VarId, VarKind};
use crate::error::{Error, Result};

/// Affine expression `Σ a_j x_j + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new(terms: Vec<(VarId, f64)>, constant: f64) -> Self {
        LinExpr { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

/// Constrains `target = min(a, b)` with a new binary `δ` (1 selects `b`):
///
/// ```text
/// target <= a            target >= a - M δ
/// target <= b            target >= b - M (1 - δ)
/// ```
///
/// `big_m` must bound `|a - b|` over the feasible region. Returns `δ`.
pub fn linearize_min(
    model: &mut MilpModel,
    target: VarId,
    a: &LinExpr,
    b: &LinExpr,
    big_m: f64,
    name: &str,
) -> Result<VarId> {
    if !(big_m > 0.0) || !big_m.is_finite() {
        return Err(Error::BigM { what: name.into(), value: big_m });
    }
    let delta = model.add_var(format!("d{name}"), VarKind::Binary, 0.0, 1.0, "linearization");
    let minus = |e: &LinExpr| e.terms.iter().map(|&(j, c)| (j, -c)).collect::<Vec<_>>();

    let mut t = vec![(target, 1.0)];
    t.extend(minus(a));
    model.add_constraint(format!("{name}_le_a"), t.clone(), Sense::Le, a.constant, "linearize_min");
    let mut t2 = vec![(target, 1.0)];
    t2.extend(minus(b));
    model.add_constraint(format!("{name}_le_b"), t2.clone(), Sense::Le, b.constant, "linearize_min");
    t.push((delta, big_m));
    model.add_constraint(format!("{name}_ge_a"), t, Sense::Ge, a.constant, "linearize_min");
    t2.push((delta, -big_m));
    model.add_constraint(format!("{name}_ge_b"), t2, Sense::Ge, b.constant - big_m, "linearize_min");
    Ok(delta)
}
