//! Bounded revised simplex (primal and dual) over `A x - s = 0`.
//!
//! Every row gets a logical variable `s_i = a_i x` whose bounds are the row
//! range, so the working problem is `min cᵀx` over `[A | -I] (x, s) = 0`
//! with simple bounds on all `n + m` columns.

use serde::Serialize;

use super::lu::Factor;
use crate::error::{Error, Result};
use crate::milp::{MilpModel, Sense};

const PIVOT_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const STALL_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// Dual simplex stopped because the objective passed the cutoff.
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Problem data shared by every node of a search.
#[derive(Debug, Clone)]
pub struct LpData {
    pub n: usize,
    pub m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub offset: f64,
}

impl LpData {
    /// LP relaxation of `model`.
    pub fn from_model(model: &MilpModel) -> Result<LpData> {
        model.validate()?;
        let n = model.num_vars();
        let m = model.num_constraints();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in model.constraints.iter().enumerate() {
            for &(j, a) in &row.terms {
                cols[j].push((i, a));
            }
        }
        let mut cost = vec![0.0; n + m];
        for &(j, c) in &model.objective {
            cost[j] += c;
        }
        let mut lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
        for row in &model.constraints {
            let (lo, hi) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Eq => (row.rhs, row.rhs),
            };
            lower.push(lo);
            upper.push(hi);
        }
        Ok(LpData { n, m, cols, cost, lower, upper, offset: model.objective_offset })
    }

    fn column(&self, j: usize, buf: &mut Vec<(usize, f64)>) {
        if j < self.n {
            buf.extend_from_slice(&self.cols[j]);
        } else {
            buf.push((j - self.n, -1.0));
        }
    }

    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * y[i]).sum()
        } else {
            -y[j - self.n]
        }
    }

    fn scatter(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                out[i] = a;
            }
        } else {
            out[j - self.n] = -1.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free column resting at zero.
    Free,
}

/// Basis snapshot used to warm-start child nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub status: Vec<Status>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_iterations: 200_000 }
    }
}

pub struct Simplex<'a> {
    data: &'a LpData,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    basic: Vec<usize>,
    status: Vec<Status>,
    x: Vec<f64>,
    factor: Option<Factor>,
    opts: SimplexOptions,
    pub iterations: usize,
    bland: bool,
    stall: usize,
    buf: Vec<(usize, f64)>,
}

enum Pricing {
    Optimal,
    Enter(usize, f64),
}

impl<'a> Simplex<'a> {
    /// All-logical starting basis with structurals at a finite bound.
    pub fn new(data: &'a LpData, opts: SimplexOptions) -> Self {
        let (n, m) = (data.n, data.m);
        let mut status = vec![Status::Basic; n + m];
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            let (l, u) = (data.lower[j], data.upper[j]);
            let (st, v) = if l.is_finite() {
                (Status::Lower, l)
            } else if u.is_finite() {
                (Status::Upper, u)
            } else {
                (Status::Free, 0.0)
            };
            status[j] = st;
            x[j] = v;
        }
        let basic = (n..n + m).collect();
        Simplex {
            data,
            lower: data.lower.clone(),
            upper: data.upper.clone(),
            basic,
            status,
            x,
            factor: None,
            opts,
            iterations: 0,
            bland: false,
            stall: 0,
            buf: Vec::new(),
        }
    }

    pub fn basis(&self) -> Basis {
        Basis { basic: self.basic.clone(), status: self.status.clone() }
    }

    /// Installs a basis and moves nonbasic columns onto their current bounds.
    pub fn set_basis(&mut self, basis: &Basis) {
        self.basic.clone_from(&basis.basic);
        self.status.clone_from(&basis.status);
        self.factor = None;
    }

    /// Restores the original bounds and applies `changes` in order.
    pub fn set_bounds(&mut self, changes: &[(usize, f64, f64)]) {
        self.lower.clone_from(&self.data.lower);
        self.upper.clone_from(&self.data.upper);
        for &(j, l, u) in changes {
            self.lower[j] = l;
            self.upper[j] = u;
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.data.n]
    }

    pub fn objective(&self) -> f64 {
        self.data.offset + (0..self.data.n).map(|j| self.data.cost[j] * self.x[j]).sum::<f64>()
    }

    fn tol(&self, bound: f64) -> f64 {
        PRIMAL_TOL * (1.0 + bound.abs())
    }

    /// Places nonbasic columns on the bound named by their status.
    fn snap_nonbasic(&mut self) {
        let total = self.data.n + self.data.m;
        for j in 0..total {
            let (l, u) = (self.lower[j], self.upper[j]);
            match self.status[j] {
                Status::Basic => {}
                Status::Lower | Status::Upper | Status::Free => {
                    let want = if self.status[j] == Status::Upper { u } else { l };
                    let (st, v) = if self.status[j] != Status::Free && want.is_finite() {
                        (self.status[j], want)
                    } else if l.is_finite() {
                        (Status::Lower, l)
                    } else if u.is_finite() {
                        (Status::Upper, u)
                    } else {
                        (Status::Free, 0.0)
                    };
                    self.status[j] = st;
                    self.x[j] = v;
                }
            }
        }
    }

    fn refactor(&mut self) {
        loop {
            let data = self.data;
            let basic = &self.basic;
            match Factor::new(data.m, |k, buf| data.column(basic[k], buf)) {
                Ok(f) => {
                    self.factor = Some(f);
                    break;
                }
                Err(sing) => {
                    // Swap the dependent column for a logical of an unpivoted row.
                    let row = sing
                        .rows
                        .iter()
                        .copied()
                        .find(|&r| self.status[data.n + r] != Status::Basic)
                        .expect("an unpivoted row has a nonbasic logical");
                    let out = self.basic[sing.position];
                    self.basic[sing.position] = data.n + row;
                    self.status[data.n + row] = Status::Basic;
                    self.status[out] = Status::Lower;
                    log::debug!("basis repair: column {out} replaced by logical of row {row}");
                    self.snap_nonbasic();
                }
            }
        }
        self.snap_nonbasic();
        self.recompute_primal();
    }

    fn recompute_primal(&mut self) {
        let m = self.data.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.data.n + m {
            if self.status[j] != Status::Basic && self.x[j] != 0.0 {
                let v = self.x[j];
                self.buf.clear();
                self.data.column(j, &mut self.buf);
                for &(i, a) in &self.buf {
                    rhs[i] -= a * v;
                }
            }
        }
        self.factor.as_ref().expect("factored").ftran(&mut rhs);
        for (k, &j) in self.basic.iter().enumerate() {
            self.x[j] = rhs[k];
        }
    }

    fn ensure_factor(&mut self) {
        let stale = self.factor.as_ref().map_or(true, |f| f.num_updates() >= REFACTOR_EVERY);
        if stale {
            self.refactor();
        }
    }

    /// Signed infeasibility of basic position `k`: negative below, positive above.
    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - self.tol(self.lower[j]) {
            v - self.lower[j]
        } else if v > self.upper[j] + self.tol(self.upper[j]) {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn duals(&self, phase1: bool) -> Vec<f64> {
        let mut y: Vec<f64> = self
            .basic
            .iter()
            .map(|&j| {
                if phase1 {
                    let inf = self.infeasibility(j);
                    if inf < 0.0 {
                        -1.0
                    } else if inf > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.data.cost[j]
                }
            })
            .collect();
        self.factor.as_ref().expect("factored").btran(&mut y);
        y
    }

    fn price(&self, y: &[f64], phase1: bool) -> Pricing {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.data.n + self.data.m {
            let st = self.status[j];
            if st == Status::Basic || (self.lower[j] == self.upper[j] && st != Status::Free) {
                continue;
            }
            let c = if phase1 { 0.0 } else { self.data.cost[j] };
            let d = c - self.data.dot(j, y);
            let dir = match st {
                Status::Lower if d < -DUAL_TOL => 1.0,
                Status::Upper if d > DUAL_TOL => -1.0,
                Status::Free if d.abs() > DUAL_TOL => -d.signum(),
                _ => continue,
            };
            if self.bland {
                return Pricing::Enter(j, dir);
            }
            if best.map_or(true, |(_, s, _)| d.abs() > s) {
                best = Some((j, d.abs(), dir));
            }
        }
        match best {
            Some((j, _, dir)) => Pricing::Enter(j, dir),
            None => Pricing::Optimal,
        }
    }

    /// Primal simplex from the current basis. Handles infeasible starts with a
    /// composite phase 1.
    pub fn solve_primal(&mut self) -> LpStatus {
        self.bland = false;
        self.stall = 0;
        let m = self.data.m;
        let mut alpha = vec![0.0; m];
        self.ensure_factor();
        loop {
            if self.iterations >= self.opts.max_iterations {
                return LpStatus::IterationLimit;
            }
            self.ensure_factor();
            let phase1 = self.basic.iter().any(|&j| self.infeasibility(j) != 0.0);
            let y = self.duals(phase1);
            let (q, dir) = match self.price(&y, phase1) {
                Pricing::Optimal if phase1 => {
                    // Confirm on a fresh factorization before declaring infeasibility.
                    if self.factor.as_ref().is_some_and(|f| f.num_updates() > 0) {
                        self.refactor();
                        continue;
                    }
                    return LpStatus::Infeasible;
                }
                Pricing::Optimal => {
                    if self.factor.as_ref().is_some_and(|f| f.num_updates() > 0) {
                        self.refactor();
                        if self.basic.iter().any(|&j| self.infeasibility(j) != 0.0) {
                            continue;
                        }
                        let y = self.duals(false);
                        if matches!(self.price(&y, false), Pricing::Enter(..)) {
                            continue;
                        }
                    }
                    return LpStatus::Optimal;
                }
                Pricing::Enter(q, dir) => (q, dir),
            };
            self.data.scatter(q, &mut alpha);
            self.factor.as_ref().expect("factored").ftran(&mut alpha);
            self.iterations += 1;

            // Harris two-pass ratio test. Infeasible basics stop at the bound
            // they are heading for, which keeps phase 1 monotone.
            let range = self.upper[q] - self.lower[q];
            let mut theta_max = if range.is_finite() { range } else { f64::INFINITY };
            let mut limits: Vec<(usize, f64, f64, bool)> = Vec::new();
            for (k, &j) in self.basic.iter().enumerate() {
                let delta = -dir * alpha[k];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
                let inf = self.infeasibility(j);
                let (target, to_upper) = if delta > 0.0 {
                    if inf < 0.0 {
                        (l, false)
                    } else if inf > 0.0 || !u.is_finite() {
                        continue;
                    } else {
                        (u, true)
                    }
                } else if inf > 0.0 {
                    (u, true)
                } else if inf < 0.0 || !l.is_finite() {
                    continue;
                } else {
                    (l, false)
                };
                let exact = ((target - v) / delta).max(0.0);
                let relaxed = ((target - v + delta.signum() * self.tol(target)) / delta).max(0.0);
                theta_max = theta_max.min(relaxed);
                limits.push((k, exact, delta, to_upper));
            }
            let mut leave: Option<(usize, f64, bool)> = None;
            let mut best_mag = 0.0;
            for &(k, exact, delta, to_upper) in &limits {
                if exact <= theta_max {
                    let better = if self.bland {
                        leave.map_or(true, |(kk, _, _)| self.basic[k] < self.basic[kk])
                    } else {
                        delta.abs() > best_mag
                    };
                    if better {
                        best_mag = delta.abs();
                        leave = Some((k, exact, to_upper));
                    }
                }
            }
            let flip = range.is_finite() && leave.map_or(true, |(_, t, _)| range <= t);
            if leave.is_none() && !flip {
                if phase1 {
                    // The entering direction only worsens infeasible rows we
                    // skipped; should not happen with a correct phase-1 price.
                    self.refactor();
                    continue;
                }
                return LpStatus::Unbounded;
            }
            let theta = if flip { range } else { leave.expect("leaving row").1 };
            if theta <= 1e-12 {
                self.stall += 1;
                if self.stall > STALL_LIMIT && !self.bland {
                    log::debug!("switching to Bland's rule after {} stalled pivots", self.stall);
                    self.bland = true;
                }
            } else {
                self.stall = 0;
            }
            if theta != 0.0 {
                self.x[q] += dir * theta;
                for (k, &j) in self.basic.iter().enumerate() {
                    self.x[j] -= dir * theta * alpha[k];
                }
            }
            if flip {
                self.status[q] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                continue;
            }
            let (k, _, to_upper) = leave.expect("leaving row");
            let out = self.basic[k];
            self.status[out] = if to_upper { Status::Upper } else { Status::Lower };
            self.x[out] = if to_upper { self.upper[out] } else { self.lower[out] };
            self.basic[k] = q;
            self.status[q] = Status::Basic;
            self.factor.as_mut().expect("factored").update(k, &alpha);
        }
    }

    /// Dual simplex from a dual-feasible basis, followed by a primal pass
    /// to mop up any dual infeasibility left by rounding. Stops early with
    /// [`LpStatus::Cutoff`] once the objective exceeds `cutoff`.
    pub fn solve_dual(&mut self, cutoff: f64) -> LpStatus {
        let (n, m) = (self.data.n, self.data.m);
        let mut alpha = vec![0.0; m];
        let mut rho = vec![0.0; m];
        self.ensure_factor();
        loop {
            if self.iterations >= self.opts.max_iterations {
                return LpStatus::IterationLimit;
            }
            self.ensure_factor();
            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64)> = None;
            for (k, &j) in self.basic.iter().enumerate() {
                let inf = self.infeasibility(j);
                if inf != 0.0 && leave.map_or(true, |(_, b)| inf.abs() > b.abs()) {
                    leave = Some((k, inf));
                }
            }
            let Some((p, inf)) = leave else {
                break;
            };
            let y = self.duals(false);
            rho.iter_mut().for_each(|v| *v = 0.0);
            rho[p] = 1.0;
            self.factor.as_ref().expect("factored").btran(&mut rho);
            let to_lower = inf < 0.0;
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            let mut t_max = f64::INFINITY;
            for j in 0..n + m {
                let st = self.status[j];
                if st == Status::Basic || (self.lower[j] == self.upper[j] && st != Status::Free) {
                    continue;
                }
                let a = self.data.dot(j, &rho);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let d = self.data.cost[j] - self.data.dot(j, &y);
                // Effective sign of α in the direction that repairs row p.
                let s = if to_lower { -a } else { a };
                let ratio = match st {
                    Status::Lower if s > 0.0 => d.max(0.0) / s,
                    Status::Upper if s < 0.0 => (-d).max(0.0) / -s,
                    Status::Free => 0.0,
                    _ => continue,
                };
                let relaxed = match st {
                    Status::Lower => (d + DUAL_TOL) / s,
                    Status::Upper => (-d + DUAL_TOL) / -s,
                    _ => 0.0,
                };
                t_max = t_max.min(relaxed.max(0.0));
                cands.push((j, ratio, a));
            }
            let mut enter: Option<(usize, f64)> = None;
            for &(j, ratio, a) in &cands {
                if ratio <= t_max && enter.map_or(true, |(_, b)| a.abs() > b.abs()) {
                    enter = Some((j, a));
                }
            }
            let Some((q, _)) = enter else {
                return LpStatus::Infeasible;
            };
            self.data.scatter(q, &mut alpha);
            self.factor.as_ref().expect("factored").ftran(&mut alpha);
            self.iterations += 1;
            let jp = self.basic[p];
            let target = if to_lower { self.lower[jp] } else { self.upper[jp] };
            if alpha[p].abs() <= PIVOT_TOL {
                // FTRAN disagrees with the row computation; refresh and retry.
                self.refactor();
                continue;
            }
            let step = (self.x[jp] - target) / alpha[p];
            self.x[q] += step;
            for (k, &j) in self.basic.iter().enumerate() {
                self.x[j] -= step * alpha[k];
            }
            self.x[jp] = target;
            self.status[jp] = if to_lower { Status::Lower } else { Status::Upper };
            self.basic[p] = q;
            self.status[q] = Status::Basic;
            self.factor.as_mut().expect("factored").update(p, &alpha);
            if cutoff.is_finite() && self.objective() > cutoff {
                return LpStatus::Cutoff;
            }
        }
        self.solve_primal()
    }

    pub fn solution(&self, status: LpStatus) -> LpSolution {
        LpSolution { status, objective: self.objective(), values: self.values().to_vec(), iterations: self.iterations }
    }

    /// Max reduced-cost violation at the current basis (0 at an optimum).
    pub fn dual_infeasibility(&mut self) -> f64 {
        self.ensure_factor();
        let y = self.duals(false);
        let mut worst: f64 = 0.0;
        for j in 0..self.data.n + self.data.m {
            if self.status[j] == Status::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.data.cost[j] - self.data.dot(j, &y);
            let v = match self.status[j] {
                Status::Lower => (-d).max(0.0),
                Status::Upper => d.max(0.0),
                _ => d.abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Solves the LP relaxation of `model` from scratch.
pub fn solve_lp(model: &MilpModel) -> Result<LpSolution> {
    solve_lp_with(model, SimplexOptions::default())
}

pub fn solve_lp_with(model: &MilpModel, opts: SimplexOptions) -> Result<LpSolution> {
    super::mip::check_size(model)?;
    let data = LpData::from_model(model)?;
    let mut s = Simplex::new(&data, opts);
    let status = s.solve_primal();
    if status == LpStatus::IterationLimit {
        return Err(Error::IterationLimit(s.iterations));
    }
    Ok(s.solution(status))
}
