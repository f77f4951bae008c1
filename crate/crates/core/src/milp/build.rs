use super::linearize::{linearize_min, LinExpr};
use super::{MilpModel, Sense, VarId, VarKind};
use crate::epidemic::{
    simulate, transmission_schedule, CompartmentState, EpidemicParams, InterventionPolicy, Rates, Trajectory,
};
use crate::error::{Error, Result};
use crate::risk::{stage_cvar, RiskConfig};
use crate::scenario_tree::ScenarioTree;
use crate::solver::{solve_mip_hooked, MipHooks, MipLimits, MipResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Compartment {
    S,
    I,
    X,
    H,
    C,
    R,
    F,
}

impl Compartment {
    pub const ALL: [Compartment; 7] =
        [Compartment::S, Compartment::I, Compartment::X, Compartment::H, Compartment::C, Compartment::R, Compartment::F];

    pub fn name(&self) -> &'static str {
        ["S", "I", "X", "H", "C", "R", "F"][*self as usize]
    }

    pub fn of(&self, st: &CompartmentState) -> f64 {
        st.stocks()[*self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flow {
    O,
    Cbar,
    Ibar,
    K,
    U,
    Imig,
}

impl Flow {
    pub const ALL: [Flow; 6] = [Flow::O, Flow::Cbar, Flow::Ibar, Flow::K, Flow::U, Flow::Imig];

    pub fn name(&self) -> &'static str {
        ["O", "Cbar", "Ibar", "K", "U", "Imig"][*self as usize]
    }

    pub fn of(&self, st: &CompartmentState) -> f64 {
        match self {
            Flow::O => st.o,
            Flow::Cbar => st.cbar,
            Flow::Ibar => st.ibar,
            Flow::K => st.k,
            Flow::U => st.u,
            Flow::Imig => st.imig,
        }
    }
}

// Layout of one (ω, j, r) cell: 7 states, then for j >= 1 the 6 flows, y,
// and the two linearization binaries.
const FLOW_OFF: usize = 7;
const Y_OFF: usize = 13;
const DELTA_O_OFF: usize = 14;
const DELTA_C_OFF: usize = 15;

/// Maps (family, stage, region, scenario) to variable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct VarIndex {
    pub stages: usize,
    pub regions: usize,
    pub scenarios: usize,
    cells: Vec<VarId>,
    risk: Vec<VarId>,
}

impl VarIndex {
    fn cell(&self, j: usize, r: usize, w: usize) -> VarId {
        self.cells[(w * (self.stages + 1) + j) * self.regions + r]
    }

    pub fn state(&self, c: Compartment, j: usize, r: usize, w: usize) -> VarId {
        self.cell(j, r, w) + c as usize
    }

    /// Flow of period `k >= 1`.
    pub fn flow(&self, f: Flow, k: usize, r: usize, w: usize) -> VarId {
        debug_assert!(k >= 1);
        self.cell(k, r, w) + FLOW_OFF + f as usize
    }

    /// Ventilators added for period `k >= 1`.
    pub fn y(&self, k: usize, r: usize, w: usize) -> VarId {
        debug_assert!(k >= 1);
        self.cell(k, r, w) + Y_OFF
    }

    pub fn delta_o(&self, k: usize, r: usize, w: usize) -> VarId {
        self.cell(k, r, w) + DELTA_O_OFF
    }

    pub fn delta_c(&self, k: usize, r: usize, w: usize) -> VarId {
        self.cell(k, r, w) + DELTA_C_OFF
    }

    pub fn eta(&self, j: usize, w: usize) -> VarId {
        self.risk[w * (self.stages + 1) + j]
    }

    pub fn z(&self, j: usize, w: usize) -> VarId {
        self.eta(j, w) + 1
    }
}

/// Ventilators added per scenario, period and region: `per_scenario[ω][k - 1][r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub per_scenario: Vec<Vec<Vec<f64>>>,
}

impl Allocation {
    pub fn zeros(scenarios: usize, stages: usize, regions: usize) -> Self {
        Allocation { per_scenario: vec![vec![vec![0.0; regions]; stages]; scenarios] }
    }

    /// The same plan in every scenario.
    pub fn uniform(scenarios: usize, plan: &[Vec<f64>]) -> Self {
        Allocation { per_scenario: vec![plan.to_vec(); scenarios] }
    }

    pub fn from_assignment(index: &VarIndex, x: &[f64]) -> Self {
        Allocation {
            per_scenario: (0..index.scenarios)
                .map(|w| {
                    (1..=index.stages)
                        .map(|k| (0..index.regions).map(|r| x[index.y(k, r, w)].round()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn scenario(&self, w: usize) -> &[Vec<f64>] {
        &self.per_scenario[w]
    }

    pub fn total(&self, w: usize) -> f64 {
        self.per_scenario[w].iter().flatten().sum()
    }

    /// True when period-`k` allocations agree within every depth-`(k - 1)` bundle.
    pub fn is_nonanticipative(&self, tree: &ScenarioTree, tol: f64) -> bool {
        (1..=tree.stages()).all(|k| {
            tree.level(k - 1).iter().all(|&n| {
                let bundle = tree.bundles_at(n).expect("level nodes exist");
                let rep = &self.per_scenario[bundle.start][k - 1];
                bundle.clone().all(|w| {
                    self.per_scenario[w][k - 1].iter().zip(rep).all(|(a, b)| (a - b).abs() <= tol)
                })
            })
        })
    }
}

/// The allocation model for one instance together with its variable map.
#[derive(Debug, Clone)]
pub struct Formulation {
    pub model: MilpModel,
    pub index: VarIndex,
    pub probabilities: Vec<f64>,
    pub risk: RiskConfig,
    /// Upper bound on the population of each region over the horizon.
    pub population_bound: Vec<f64>,
    /// `(M_hospital, M_icu)` per region.
    pub big_m: Vec<(f64, f64)>,
    pub max_ventilators: f64,
    /// Ventilators in place before period 1, per region.
    pub initial_u: Vec<f64>,
    pub rates: Rates,
}

/// Per-region population bound that accounts for migration inflow: each
/// period a region can receive at most `Σ m[src][r] * bound[src]` arrivals.
fn population_bounds(params: &EpidemicParams, initial: &[CompartmentState], stages: usize) -> Vec<f64> {
    let n = params.num_regions();
    let mut bound: Vec<f64> = (0..n).map(|r| initial[r].total().max(params.regions[r].population)).collect();
    for _ in 0..stages {
        let prev = bound.clone();
        for r in 0..n {
            bound[r] += (0..n).filter(|&s| s != r).map(|s| params.migration[s][r] * prev[s]).sum::<f64>();
        }
    }
    bound
}

/// Assembles the deterministic-equivalent MILP.
pub fn build(
    params: &EpidemicParams,
    initial: &[CompartmentState],
    tree: &ScenarioTree,
    policy: &InterventionPolicy,
    risk: RiskConfig,
) -> Result<Formulation> {
    params.validate()?;
    risk.validate()?;
    let stages = tree.stages();
    let regions = params.num_regions();
    let scenarios = tree.num_scenarios();
    if policy.num_stages() != stages {
        return Err(Error::Horizon(format!(
            "policy covers {} periods, tree has {stages} stages",
            policy.num_stages()
        )));
    }
    policy.validate(stages, regions)?;
    if initial.len() != regions {
        return Err(Error::Dimension(format!("{} initial states for {regions} regions", initial.len())));
    }
    for (r, st) in initial.iter().enumerate() {
        st.validate(params.regions[r].hospital_capacity)?;
    }
    let sigma1 = transmission_schedule(&params.regions, policy)?;
    let rates = params.rates;
    let pop = population_bounds(params, initial, stages);
    let y_max = params.max_ventilators();
    let u_max: Vec<f64> = initial.iter().map(|s| s.u + y_max).collect();
    let mut big_m = Vec::with_capacity(regions);
    for r in 0..regions {
        let t = params.regions[r].hospital_capacity;
        let m_o = (rates.lambda3 * pop[r]).max(t);
        let m_c = rates.lambda6 * t + u_max[r];
        for (what, m) in [("hospital admission", m_o), ("ICU admission", m_c)] {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::BigM { what: format!("{what} in {}", params.regions[r].name), value: m });
            }
        }
        big_m.push((m_o, m_c));
    }
    let impact_cap: f64 = pop.iter().sum::<f64>().max(1.0);
    let probabilities: Vec<f64> = tree.scenarios().iter().map(|s| s.probability).collect();

    let mut model = MilpModel::new("ventilator_allocation");
    let mut cells = vec![0; scenarios * (stages + 1) * regions];
    let mut risk_ids = vec![0; scenarios * (stages + 1)];
    let cell_at = |j: usize, r: usize, w: usize| (w * (stages + 1) + j) * regions + r;

    for w in 0..scenarios {
        let sigma2 = tree.sigma2_path(w);
        let p = probabilities[w];
        for j in 0..=stages {
            for r in 0..regions {
                let base = model.num_vars();
                cells[cell_at(j, r, w)] = base;
                for c in Compartment::ALL {
                    let name = format!("{}_{j}_{r}_{w}", c.name());
                    let (lo, hi) = if j == 0 {
                        let v = c.of(&initial[r]);
                        (v, v)
                    } else {
                        (0.0, pop[r])
                    };
                    model.add_var(name, VarKind::Continuous, lo, hi, "state");
                }
                if j == 0 {
                    continue;
                }
                let k = j;
                for f in Flow::ALL {
                    let hi = if f == Flow::U { u_max[r] } else { pop[r] };
                    model.add_var(format!("{}_{k}_{r}_{w}", f.name()), VarKind::Continuous, 0.0, hi, "flow");
                }
                model.add_var(format!("y_{k}_{r}_{w}"), VarKind::Integer, 0.0, y_max, "allocation");

                let prev = cells[cell_at(k - 1, r, w)];
                let st = |c: Compartment| prev + c as usize;
                let cur = |c: Compartment| base + c as usize;
                let fl = |f: Flow| base + FLOW_OFF + f as usize;
                let t_cap = params.regions[r].hospital_capacity;
                let (m_o, m_c) = big_m[r];

                let o_name = format!("O_{k}_{r}_{w}");
                let a_o = LinExpr::new(vec![(st(Compartment::I), rates.lambda3)], 0.0);
                let b_o = LinExpr::new(vec![(st(Compartment::H), -1.0)], t_cap);
                let d_o = linearize_min(&mut model, fl(Flow::O), &a_o, &b_o, m_o, &o_name)?;
                debug_assert_eq!(d_o, base + DELTA_O_OFF);
                let c_name = format!("Cbar_{k}_{r}_{w}");
                let a_c = LinExpr::new(vec![(st(Compartment::H), rates.lambda6)], 0.0);
                let b_c = LinExpr::new(vec![(fl(Flow::U), 1.0), (st(Compartment::C), -1.0)], 0.0);
                let d_c = linearize_min(&mut model, fl(Flow::Cbar), &a_c, &b_c, m_c, &c_name)?;
                debug_assert_eq!(d_c, base + DELTA_C_OFF);

                let s1 = sigma1[k - 1][r];
                let s2 = sigma2[k - 1];
                if !(0.0..1.0).contains(&s2) {
                    return Err(Error::ProportionTooLarge(s2));
                }
                let ratio = s2 / (1.0 - s2);
                let tag = |fam: &str| format!("{fam}_{k}_{r}_{w}");
                use Compartment::*;
                let eq = Sense::Eq;
                model.add_constraint(
                    tag("dyn_S"),
                    vec![(cur(S), 1.0), (st(S), -1.0), (st(I), s1 * (1.0 + ratio)), (st(X), s1 * (1.0 + ratio))],
                    eq,
                    0.0,
                    "dynamics",
                );
                model.add_constraint(
                    tag("dyn_I"),
                    vec![
                        (cur(I), 1.0),
                        (st(I), -(1.0 - rates.lambda1 + s1)),
                        (st(X), -s1),
                        (fl(Flow::Imig), -1.0),
                        (fl(Flow::Ibar), rates.lambda2),
                        (fl(Flow::O), 1.0),
                    ],
                    eq,
                    0.0,
                    "dynamics",
                );
                model.add_constraint(
                    tag("dyn_X"),
                    vec![(cur(X), 1.0), (st(X), -(1.0 - rates.lambda9 + s1 * ratio)), (st(I), -s1 * ratio)],
                    eq,
                    0.0,
                    "dynamics",
                );
                model.add_constraint(
                    tag("dyn_H"),
                    vec![
                        (cur(H), 1.0),
                        (st(H), -(1.0 - rates.lambda4)),
                        (fl(Flow::O), -1.0),
                        (fl(Flow::K), rates.lambda5),
                        (fl(Flow::Cbar), 1.0),
                    ],
                    eq,
                    0.0,
                    "dynamics",
                );
                model.add_constraint(
                    tag("dyn_C"),
                    vec![(cur(C), 1.0), (st(C), -(1.0 - rates.lambda7 - rates.lambda8)), (fl(Flow::Cbar), -1.0)],
                    eq,
                    0.0,
                    "dynamics",
                );
                model.add_constraint(
                    tag("dyn_R"),
                    vec![
                        (cur(R), 1.0),
                        (st(R), -1.0),
                        (st(I), -rates.lambda1),
                        (st(X), -rates.lambda9),
                        (st(H), -rates.lambda4),
                        (st(C), -rates.lambda7),
                    ],
                    eq,
                    0.0,
                    "dynamics",
                );
                model.add_constraint(
                    tag("dyn_F"),
                    vec![
                        (cur(F), 1.0),
                        (st(F), -1.0),
                        (fl(Flow::Ibar), -rates.lambda2),
                        (fl(Flow::K), -rates.lambda5),
                        (st(C), -rates.lambda8),
                    ],
                    eq,
                    0.0,
                    "dynamics",
                );
                // Turned-away patients: the inequality lower bound as written, plus
                // the identity that pins the sub-flow to what admission left over.
                model.add_constraint(
                    tag("ovf_Ibar"),
                    vec![(fl(Flow::Ibar), 1.0), (st(I), -rates.lambda3), (st(H), -1.0)],
                    Sense::Ge,
                    -t_cap,
                    "overflow",
                );
                model.add_constraint(
                    tag("ovf_K"),
                    vec![(fl(Flow::K), 1.0), (st(H), -rates.lambda6), (fl(Flow::U), 1.0), (st(C), -1.0)],
                    Sense::Ge,
                    0.0,
                    "overflow",
                );
                model.add_constraint(
                    tag("tie_Ibar"),
                    vec![(fl(Flow::Ibar), 1.0), (st(I), -rates.lambda3), (fl(Flow::O), 1.0)],
                    eq,
                    0.0,
                    "overflow_tie",
                );
                model.add_constraint(
                    tag("tie_K"),
                    vec![(fl(Flow::K), 1.0), (st(H), -rates.lambda6), (fl(Flow::Cbar), 1.0)],
                    eq,
                    0.0,
                    "overflow_tie",
                );
                let mut acc = vec![(fl(Flow::U), 1.0), (base + Y_OFF, -1.0)];
                let acc_rhs = if k == 1 {
                    initial[r].u
                } else {
                    acc.push((cells[cell_at(k - 1, r, w)] + FLOW_OFF + Flow::U as usize, -1.0));
                    0.0
                };
                model.add_constraint(tag("vent_acc"), acc, eq, acc_rhs, "ventilator_accumulation");
                let damping = params.damping.get(policy.at(k, r));
                let mut mig = vec![(fl(Flow::Imig), 1.0)];
                for src in 0..regions {
                    let m = params.migration[src][r];
                    if src != r && m != 0.0 && damping != 0.0 {
                        mig.push((cells[cell_at(k - 1, src, w)] + Compartment::I as usize, -damping * m));
                    }
                }
                model.add_constraint(tag("migration"), mig, eq, 0.0, "migration");
            }
            let eta = model.add_var(format!("eta_{j}_{w}"), VarKind::Continuous, 0.0, impact_cap, "risk");
            let z = model.add_var(format!("z_{j}_{w}"), VarKind::Continuous, 0.0, impact_cap, "risk");
            risk_ids[w * (stages + 1) + j] = eta;
            let mut row = vec![(z, 1.0), (eta, 1.0)];
            for r in 0..regions {
                let b = cells[cell_at(j, r, w)];
                row.push((b + Compartment::I as usize, -1.0));
                row.push((b + Compartment::F as usize, -1.0));
            }
            model.add_constraint(format!("cvar_{j}_{w}"), row, Sense::Ge, 0.0, "cvar");
            for r in 0..regions {
                let b = cells[cell_at(j, r, w)];
                model.objective.push((b + Compartment::I as usize, p));
                model.objective.push((b + Compartment::F as usize, p));
            }
            if risk.lambda != 0.0 {
                model.objective.push((eta, p * risk.lambda));
                model.objective.push((z, p * risk.lambda / (1.0 - risk.alpha)));
            }
        }
        if stages > 0 {
            let terms = (1..=stages)
                .flat_map(|k| (0..regions).map(move |r| (k, r)))
                .map(|(k, r)| (cells[cell_at(k, r, w)] + Y_OFF, 1.0))
                .collect();
            model.add_constraint(format!("budget_{w}"), terms, Sense::Le, y_max, "budget");
        }
    }

    let index = VarIndex { stages, regions, scenarios, cells, risk: risk_ids };

    // Non-anticipativity: each scenario equals the first scenario of its bundle.
    for k in 1..=stages {
        for &n in tree.level(k - 1) {
            let bundle = tree.bundles_at(n)?;
            let rep = bundle.start;
            for w in bundle.clone().skip(1) {
                for r in 0..regions {
                    model.add_constraint(
                        format!("na_y_{k}_{r}_{w}"),
                        vec![(index.y(k, r, w), 1.0), (index.y(k, r, rep), -1.0)],
                        Sense::Eq,
                        0.0,
                        "nonanticipativity",
                    );
                }
            }
        }
    }
    // One value-at-risk per stage; z follows the stage's own bundles.
    for j in 0..=stages {
        for (var, depth, fam) in [("eta", 0, 0), ("z", j, 1)] {
            for &n in tree.level(depth) {
                let bundle = tree.bundles_at(n)?;
                let rep = bundle.start;
                for w in bundle.clone().skip(1) {
                    let (a, b) = if fam == 0 {
                        (index.eta(j, w), index.eta(j, rep))
                    } else {
                        (index.z(j, w), index.z(j, rep))
                    };
                    model.add_constraint(
                        format!("na_{var}_{j}_{w}"),
                        vec![(a, 1.0), (b, -1.0)],
                        Sense::Eq,
                        0.0,
                        "nonanticipativity",
                    );
                }
            }
        }
    }
    model.objective = super::merge_terms(std::mem::take(&mut model.objective));
    model.validate()?;
    Ok(Formulation {
        model,
        index,
        probabilities,
        risk,
        population_bound: pop,
        big_m,
        max_ventilators: y_max,
        initial_u: initial.iter().map(|s| s.u).collect(),
        rates,
    })
}

/// Closed-form variable and row counts for a uniform tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedCensus {
    pub variables: usize,
    pub constraints: usize,
    pub binaries: usize,
    pub integers: usize,
}

impl ExpectedCensus {
    pub fn new(stages: usize, branching: usize, regions: usize) -> Self {
        let scen = branching.pow(stages as u32);
        let cells = (stages + 1) * regions * scen;
        let period_cells = stages * regions * scen;
        let variables = 7 * cells + (6 + 1 + 2) * period_cells + 2 * (stages + 1) * scen;
        // Nodes at depth d: branching^d; each bundle contributes (size - 1) links.
        let links_at = |d: usize| scen - branching.pow(d as u32);
        let na_y: usize = (1..=stages).map(|k| regions * links_at(k - 1)).sum();
        let na_risk: usize = (0..=stages).map(|j| links_at(0) + links_at(j)).sum();
        let per_period = 7 + 8 + 2 + 2 + 1 + 1;
        let budget = if stages > 0 { scen } else { 0 };
        let constraints = per_period * period_cells + (stages + 1) * scen + budget + na_y + na_risk;
        ExpectedCensus { variables, constraints, binaries: 2 * period_cells, integers: period_cells }
    }
}

impl Formulation {
    pub fn stages(&self) -> usize {
        self.index.stages
    }

    /// Same model with objective restricted to scenario `w`.
    pub fn scenario_model(&self, w: usize) -> MilpModel {
        let ix = &self.index;
        let p = self.probabilities[w];
        let mut obj = Vec::new();
        for j in 0..=ix.stages {
            for r in 0..ix.regions {
                obj.push((ix.state(Compartment::I, j, r, w), p));
                obj.push((ix.state(Compartment::F, j, r, w), p));
            }
            if self.risk.lambda != 0.0 {
                obj.push((ix.eta(j, w), p * self.risk.lambda));
                obj.push((ix.z(j, w), p * self.risk.lambda / (1.0 - self.risk.alpha)));
            }
        }
        let mut m = self.model.with_objective(obj, 0.0);
        m.name = format!("{}_scenario_{w}", self.model.name);
        m
    }

    /// Model with every `y` fixed to the given allocation.
    pub fn with_fixed_allocation(&self, alloc: &Allocation) -> Result<MilpModel> {
        let ix = &self.index;
        if alloc.per_scenario.len() != ix.scenarios {
            return Err(Error::Dimension("allocation scenario count".into()));
        }
        let mut m = self.model.clone();
        for w in 0..ix.scenarios {
            for k in 1..=ix.stages {
                for r in 0..ix.regions {
                    let v = alloc.per_scenario[w][k - 1][r];
                    let var = &mut m.variables[ix.y(k, r, w)];
                    var.lower = v;
                    var.upper = v;
                }
            }
        }
        Ok(m)
    }

    /// Trajectory of scenario `w` read from an assignment.
    pub fn trajectory(&self, x: &[f64], w: usize) -> Vec<Vec<CompartmentState>> {
        let ix = &self.index;
        (0..=ix.stages)
            .map(|j| {
                (0..ix.regions)
                    .map(|r| {
                        let s = |c| x[ix.state(c, j, r, w)];
                        let f = |fl| if j == 0 { 0.0 } else { x[ix.flow(fl, j, r, w)] };
                        let mut st = CompartmentState {
                            s: s(Compartment::S),
                            i: s(Compartment::I),
                            x: s(Compartment::X),
                            h: s(Compartment::H),
                            c: s(Compartment::C),
                            r: s(Compartment::R),
                            f: s(Compartment::F),
                            o: f(Flow::O),
                            cbar: f(Flow::Cbar),
                            ibar: f(Flow::Ibar),
                            k: f(Flow::K),
                            u: f(Flow::U),
                            imig: f(Flow::Imig),
                            new_infections: 0.0,
                        };
                        if j == 0 {
                            st.u = self.initial_u[r];
                        } else {
                            let prev_i = x[ix.state(Compartment::I, j - 1, r, w)];
                            st.new_infections =
                                st.i - (1.0 - self.rates.lambda1) * prev_i + self.rates.lambda2 * st.ibar + st.o;
                        }
                        st
                    })
                    .collect()
            })
            .collect()
    }
}

/// Simulates every scenario under `alloc`.
pub fn simulate_all(
    params: &EpidemicParams,
    initial: &[CompartmentState],
    tree: &ScenarioTree,
    policy: &InterventionPolicy,
    alloc: &Allocation,
) -> Result<Vec<Trajectory>> {
    (0..tree.num_scenarios())
        .map(|w| simulate(params, initial, &tree.sigma2_path(w), policy, alloc.scenario(w)))
        .collect()
}

/// Full variable vector implied by simulating `alloc` in every scenario,
/// with `η`/`z` at their exact optimum. Used for warm starts and for
/// checking that the model and the simulator agree.
pub fn assignment_from_plan(
    form: &Formulation,
    params: &EpidemicParams,
    initial: &[CompartmentState],
    tree: &ScenarioTree,
    policy: &InterventionPolicy,
    alloc: &Allocation,
) -> Result<Vec<f64>> {
    let ix = &form.index;
    let trajs = simulate_all(params, initial, tree, policy, alloc)?;
    if trajs.iter().any(|t| t.depleted) {
        return Err(Error::Model(
            "allocation exhausts the susceptible pool; the model requires S >= 0 without capping".into(),
        ));
    }
    let rates = params.rates;
    let mut x = vec![0.0; form.model.num_vars()];
    for (w, traj) in trajs.iter().enumerate() {
        for j in 0..=ix.stages {
            for r in 0..ix.regions {
                let st = &traj.states[j][r];
                for c in Compartment::ALL {
                    x[ix.state(c, j, r, w)] = c.of(st);
                }
                if j == 0 {
                    continue;
                }
                for f in Flow::ALL {
                    x[ix.flow(f, j, r, w)] = f.of(st);
                }
                x[ix.y(j, r, w)] = alloc.per_scenario[w][j - 1][r];
                let prev = &traj.states[j - 1][r];
                let t_cap = params.regions[r].hospital_capacity;
                x[ix.delta_o(j, r, w)] = if t_cap - prev.h < rates.lambda3 * prev.i { 1.0 } else { 0.0 };
                x[ix.delta_c(j, r, w)] = if st.u - prev.c < rates.lambda6 * prev.h { 1.0 } else { 0.0 };
            }
        }
    }
    let impacts: Vec<Vec<f64>> = trajs.iter().map(|t| t.impacts()).collect();
    let risk = stage_cvar(tree, &impacts, form.risk.alpha)?;
    for w in 0..ix.scenarios {
        for j in 0..=ix.stages {
            x[ix.eta(j, w)] = risk.eta[j];
            x[ix.z(j, w)] = risk.z[w][j];
        }
    }
    Ok(x)
}

/// Allocation read from a relaxed point: every bundle takes the first
/// scenario's `y`, rounded down, which keeps each path within budget.
pub fn floor_allocation(form: &Formulation, tree: &ScenarioTree, x: &[f64]) -> Allocation {
    let ix = &form.index;
    let mut alloc = Allocation::zeros(ix.scenarios, ix.stages, ix.regions);
    for k in 1..=ix.stages {
        for &n in tree.level(k - 1) {
            let bundle = tree.bundles_at(n).expect("level nodes exist");
            for r in 0..ix.regions {
                let v = (x[ix.y(k, r, bundle.start)] + 1e-6).floor().max(0.0);
                for w in bundle.clone() {
                    alloc.per_scenario[w][k - 1][r] = v;
                }
            }
        }
    }
    alloc
}

/// Branch-and-bound on the allocation model. Allocations are branched on
/// first, and every node's rounded-down allocation is simulated into a
/// candidate incumbent.
#[allow(clippy::too_many_arguments)]
pub fn solve_allocation(
    form: &Formulation,
    params: &EpidemicParams,
    initial: &[CompartmentState],
    tree: &ScenarioTree,
    policy: &InterventionPolicy,
    limits: MipLimits,
    seed: Option<&[f64]>,
) -> Result<MipResult> {
    let ix = &form.index;
    let complete = |x: &[f64]| {
        let alloc = floor_allocation(form, tree, x);
        assignment_from_plan(form, params, initial, tree, policy, &alloc).ok()
    };
    let priority = (0..ix.scenarios)
        .flat_map(|w| (1..=ix.stages).flat_map(move |k| (0..ix.regions).map(move |r| ix.y(k, r, w))))
        .collect();
    let hooks = MipHooks { complete: Some(&complete), priority };
    solve_mip_hooked(&form.model, limits, seed, &hooks)
}
