//! Acceptance criteria, one PASS/FAIL line each.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use ventalloc::bounds::{compute_bounds, formulate, solve_full};
use ventalloc::config::RunConfig;
use ventalloc::epidemic::{simulate, step, CompartmentState, InterventionPolicy, Rates, StepInputs};
use ventalloc::fixtures;
use ventalloc::milp::export::{to_mps, MpsFormat};
use ventalloc::milp::{extract_solution, simulate_all, Allocation, Census};
use ventalloc::report::paired_t_test;
use ventalloc::scenario_tree::{
    Branch, NodeDistribution, PropBounds, ScenarioTree, StdPolicy, TreeSpec, DEFAULT_BRANCH_PROBS,
};
use ventalloc::solver::{solve_mip, MipLimits, MipStatus};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(value: f64, want: f64, tol: f64) -> bool {
    (value - want).abs() <= tol
}

// 1

fn tree_fidelity() -> Outcome {
    let t = Instant::now();
    let spec = TreeSpec {
        stages: 3,
        root: NodeDistribution::new(0.26, 0.05),
        std_policy: StdPolicy::example_table(3),
        branch_probs: DEFAULT_BRANCH_PROBS.to_vec(),
        bounds: PropBounds::UNIT,
    };
    let tree = ScenarioTree::build(&spec).map_err(|e| e.to_string())?;
    let values = |n: usize| -> Vec<f64> {
        tree.node(n).unwrap().children.iter().map(|&c| tree.node(c).unwrap().realized_value).collect()
    };
    let root = values(0);
    for (v, want) in root.iter().zip([0.21, 0.26, 0.31]) {
        ensure(within(*v, want, 0.005), || format!("root children {root:?}"))?;
    }
    let node3 = values(3);
    for (v, want) in node3.iter().zip([0.12, 0.31, 0.50]) {
        ensure(within(*v, want, 0.01), || format!("node 3 children {node3:?}"))?;
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("root -> {root:.4?}, node 3 -> {node3:.4?}"))
}

// 2

fn probability_normalization() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 64, failure_persistence: None, ..Config::default() });
    let strategy = (1usize..=6, prop_oneof![Just(2usize), Just(3usize)])
        .prop_flat_map(|(stages, b)| (Just(stages), proptest::collection::vec(0.01f64..1.0, b)));
    let worst = Cell::new(0.0f64);
    let covered = RefCell::new(BTreeSet::new());
    let check = |stages: usize, weights: &[f64]| -> Result<(), TestCaseError> {
        let total: f64 = weights.iter().sum();
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let head: f64 = probs[..probs.len() - 1].iter().sum();
        *probs.last_mut().unwrap() = 1.0 - head;
        let spec = TreeSpec {
            stages,
            root: NodeDistribution::new(0.26, 0.05),
            std_policy: StdPolicy::Constant(0.05),
            branch_probs: probs,
            bounds: PropBounds::default(),
        };
        let tree = ScenarioTree::build(&spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let sum: f64 = tree.scenarios().iter().map(|s| s.probability).sum();
        worst.set(worst.get().max((sum - 1.0).abs()));
        covered.borrow_mut().insert((stages, weights.len()));
        prop_assert!((sum - 1.0).abs() <= 1e-12, "stages {stages}, b {}: sum {sum}", weights.len());
        Ok(())
    };
    for stages in 1..=6 {
        for b in [2usize, 3] {
            check(stages, &vec![1.0; b]).map_err(|e| e.to_string())?;
        }
    }
    runner.run(&strategy, |(stages, w)| check(stages, &w)).map_err(|e| e.to_string())?;
    Ok(format!(
        "{} (stages, branching) pairs plus 64 random probability vectors, worst |Σp - 1| = {:.1e}",
        covered.borrow().len(),
        worst.get()
    ))
}

// 3

fn conservation() -> Outcome {
    let rates = (0.0f64..1.0, 0.0f64..=1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..=1.0, 0.0f64..1.0, 0.0f64..=1.0, 0.0f64..=1.0)
        .prop_map(|(a, l2, b, c, l5, d, l7, l9)| Rates {
            lambda1: a,
            lambda2: l2,
            lambda3: b * (1.0 - a),
            lambda4: c,
            lambda5: l5,
            lambda6: d * (1.0 - c),
            lambda7: l7,
            lambda8: 1.0 - l7,
            lambda9: l9,
        });
    let state = (0.0f64..5e6, 0.0f64..5e4, 0.0f64..5e4, 0.0f64..2e4, 0.0f64..2e3, 0.0f64..1e5, 0.0f64..1e4, 0.0f64..5e3, 0.0f64..5e4)
        .prop_map(|(s, i, x, h, c, r, f, extra_u, extra_t)| {
            (CompartmentState { s, i, x, h, c, r, f, u: c + extra_u, ..Default::default() }, h + extra_t)
        });
    let inputs = (0.0f64..30.0, 0.0f64..0.95, 0u32..2000);
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    let worst = Cell::new(0.0f64);
    let calls = Cell::new(0usize);
    runner
        .run(&(rates, state, inputs), |(rates, (st, cap), (sigma1, sigma2, y))| {
            let out = step(&st, &rates, cap, StepInputs { sigma1, sigma2, inflow: 0.0, allocation: y as f64 })
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let before = st.total();
            let rel = (out.state.total() - before).abs() / before.max(1.0);
            worst.set(worst.get().max(rel));
            calls.set(calls.get() + 1);
            prop_assert!(rel <= 1e-9, "relative drift {rel:e}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} step calls, worst relative drift {:.1e}", calls.get(), worst.get()))
}

// 4

fn reduced() -> RunConfig {
    fixtures::load("reduced_2region").unwrap()
}

/// Period-1 pairs and per-node period-2 pairs, all within the ventilator cap.
fn plans(tree: &ScenarioTree, cap: u32) -> Vec<Allocation> {
    let mut out = Vec::new();
    let firsts = [(0, 0), (10, 0), (0, 10), (3, 4), (5, 5), (1, 2)];
    for (i, &(a, b)) in firsts.iter().enumerate() {
        let mut alloc = Allocation::zeros(tree.num_scenarios(), 2, 2);
        let left = cap - a - b;
        for (n, &node) in tree.level(1).iter().enumerate() {
            let c = (i as u32 + n as u32) % (left + 1);
            let d = (left - c) * (n as u32 % 2);
            for w in tree.bundles_at(node).unwrap() {
                alloc.per_scenario[w] = vec![vec![a as f64, b as f64], vec![c as f64, d as f64]];
            }
        }
        out.push(alloc);
    }
    out
}

fn simulator_equivalence() -> Outcome {
    let cfg = reduced();
    let inst = cfg.instance().map_err(|e| e.to_string())?;
    let form = formulate(&inst).map_err(|e| e.to_string())?;
    let cap = (cfg.budget / cfg.vent_cost).floor() as u32;
    let mut worst_abs = 0.0f64;
    let mut worst_rel = 0.0f64;
    let all = plans(&inst.tree, cap);
    for alloc in &all {
        let fixed = form.with_fixed_allocation(alloc).map_err(|e| e.to_string())?;
        let res = solve_mip(&fixed, MipLimits::exact()).map_err(|e| e.to_string())?;
        ensure(res.status == MipStatus::Optimal, || format!("fixed model status {:?}", res.status))?;
        let x = res.values().unwrap();
        let sims = simulate_all(&inst.params, &inst.initial, &inst.tree, &inst.policy, alloc).map_err(|e| e.to_string())?;
        for (w, sim) in sims.iter().enumerate() {
            for (j, (lp, st)) in form.trajectory(x, w).iter().zip(&sim.states).enumerate() {
                for (r, (a, b)) in lp.iter().zip(st).enumerate() {
                    let pairs = a.stocks().into_iter().zip(b.stocks()).chain([
                        (a.o, b.o),
                        (a.cbar, b.cbar),
                        (a.ibar, b.ibar),
                        (a.k, b.k),
                        (a.u, b.u),
                        (a.imig, b.imig),
                    ]);
                    for (va, vb) in pairs {
                        let d = (va - vb).abs();
                        worst_abs = worst_abs.max(d);
                        worst_rel = worst_rel.max(d / vb.abs().max(1.0));
                        ensure(d <= 1e-6 * vb.abs().max(1.0), || {
                            format!("scenario {w} stage {j} region {r}: model {va} vs simulation {vb}")
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!("{} plans x 9 scenarios, worst deviation {worst_abs:.1e} absolute, {worst_rel:.1e} relative", all.len()))
}

// 5

/// Sorted-tail CVaR: the mean of the worst `1 - α` probability mass.
fn tail_cvar(values: &[f64], probs: &[f64], alpha: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mass = 1.0 - alpha;
    let mut left = mass;
    let mut acc = 0.0;
    for i in order {
        let take = probs[i].min(left);
        acc += take * values[i];
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    acc / mass
}

fn exhaustive_oracle() -> Outcome {
    let t = Instant::now();
    let cfg = reduced();
    let inst = cfg.instance().map_err(|e| e.to_string())?;
    let cap = (cfg.budget / cfg.vent_cost).floor() as u32;
    ensure(cap <= 10, || format!("fixture allows {cap} ventilators"))?;
    let tree = &inst.tree;
    let (alpha, lambda) = (inst.risk.alpha, inst.risk.lambda);
    let probs: Vec<f64> = tree.scenarios().iter().map(|s| s.probability).collect();
    let nodes = tree.level(1).to_vec();
    let pairs = |budget: u32| -> Vec<(u32, u32)> {
        (0..=budget).flat_map(|a| (0..=budget - a).map(move |b| (a, b))).collect()
    };
    let mut best = (f64::INFINITY, String::new());
    let mut evaluated = 0usize;
    for (a, b) in pairs(cap) {
        let left = cap - a - b;
        let options = pairs(left);
        // impacts[node][option][child] = stage impacts along that child scenario.
        let mut impacts: Vec<Vec<Vec<Vec<f64>>>> = Vec::new();
        for &node in &nodes {
            let bundle = tree.bundles_at(node).unwrap();
            let mut per_option = Vec::new();
            for &(c, d) in &options {
                let plan = vec![vec![a as f64, b as f64], vec![c as f64, d as f64]];
                let per_child = bundle
                    .clone()
                    .map(|w| {
                        simulate(&inst.params, &inst.initial, &tree.sigma2_path(w), &inst.policy, &plan)
                            .map(|t| t.impacts())
                            .map_err(|e| e.to_string())
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                per_option.push(per_child);
            }
            impacts.push(per_option);
        }
        let n_opt = options.len();
        for i0 in 0..n_opt {
            for i1 in 0..n_opt {
                for i2 in 0..n_opt {
                    let choice = [i0, i1, i2];
                    let mut scen: Vec<&Vec<f64>> = Vec::with_capacity(probs.len());
                    for (n, &node) in nodes.iter().enumerate() {
                        for (k, _) in tree.bundles_at(node).unwrap().enumerate() {
                            scen.push(&impacts[n][choice[n]][k]);
                        }
                    }
                    let ei: f64 = scen.iter().zip(&probs).map(|(v, p)| p * v.iter().sum::<f64>()).sum();
                    let risk: f64 = (0..=tree.stages())
                        .map(|j| {
                            let vals: Vec<f64> = scen.iter().map(|v| v[j]).collect();
                            tail_cvar(&vals, &probs, alpha)
                        })
                        .sum();
                    let obj = ei + lambda * risk;
                    evaluated += 1;
                    if obj < best.0 {
                        let y2: Vec<(u32, u32)> = choice.iter().map(|&i| options[i]).collect();
                        best = (obj, format!("y1 = ({a}, {b}), y2 by node = {y2:?}"));
                    }
                }
            }
        }
    }
    let form = formulate(&inst).map_err(|e| e.to_string())?;
    let res = solve_full(&inst, &form, MipLimits::exact(), None).map_err(|e| e.to_string())?;
    let z = res.objective.ok_or("no incumbent")?;
    let elapsed = t.elapsed();
    ensure(res.status == MipStatus::Optimal, || format!("status {:?}", res.status))?;
    ensure(within(z, best.0, 1e-6 * best.0.abs().max(1.0)), || {
        format!("solve_mip {z:.9} vs enumeration {:.9} at {}", best.0, best.1)
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{evaluated} allocations enumerated, optimum {:.6} at {}; solve_mip {z:.6} ({:.1e} relative) in {elapsed:.2?}",
        best.0,
        best.1,
        (z - best.0).abs() / best.0.abs()
    ))
}

// 6

fn bounds_sandwich() -> Outcome {
    let t = Instant::now();
    let inst = reduced().instance().map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..inst.tree.num_scenarios()).collect();
    let rep = compute_bounds(&inst, &all, MipLimits::exact()).map_err(|e| e.to_string())?;
    let form = formulate(&inst).map_err(|e| e.to_string())?;
    let z = solve_full(&inst, &form, MipLimits::exact(), None).map_err(|e| e.to_string())?.objective.ok_or("no incumbent")?;
    let lb = rep.lower_bound.ok_or("lower bound refused")?;
    let tol = 1e-6 * z.abs().max(1.0);
    ensure(lb <= z + tol, || format!("LB {lb} > Z* {z}"))?;
    ensure(z <= rep.upper_bound + tol, || format!("Z* {z} > UB {}", rep.upper_bound))?;
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("LB {lb:.6} <= Z* {z:.6} <= UB {:.6} (best scenario {}) in {elapsed:.2?}", rep.upper_bound, rep.best_scenario))
}

// 7

fn budget_saturation() -> Outcome {
    let cfg = fixtures::load("shortfall_1region").unwrap();
    let inst = cfg.instance().map_err(|e| e.to_string())?;
    ensure(cfg.budget == 10_000_000.0 && cfg.vent_cost == 5000.0, || "fixture budget changed".into())?;
    let form = formulate(&inst).map_err(|e| e.to_string())?;
    let res = solve_full(&inst, &form, MipLimits::exact(), None).map_err(|e| e.to_string())?;
    let sol = extract_solution(&form, res.values().ok_or("no incumbent")?, &inst.tree).map_err(|e| e.to_string())?;
    let totals: BTreeSet<u64> = (0..inst.tree.num_scenarios()).map(|w| sol.total_ventilators(w) as u64).collect();
    ensure(totals.len() == 1 && totals.contains(&2000), || format!("scenario totals {totals:?}"))?;
    Ok(format!("every scenario allocates 2000 ventilators (status {:?})", res.status))
}

// 8

fn risk_trends() -> Outcome {
    let base = reduced();
    let solve = |lambda: f64, alpha: f64| -> Result<(f64, f64), String> {
        let mut cfg = base.clone();
        cfg.risk.lambda = lambda;
        cfg.risk.alpha = alpha;
        let inst = cfg.instance().map_err(|e| e.to_string())?;
        let form = formulate(&inst).map_err(|e| e.to_string())?;
        let res = solve_full(&inst, &form, MipLimits::exact(), None).map_err(|e| e.to_string())?;
        let sol = extract_solution(&form, res.values().ok_or("no incumbent")?, &inst.tree).map_err(|e| e.to_string())?;
        Ok((sol.expected_impact, sol.expected_risk))
    };
    let mut memo: BTreeMap<(u64, u64), (f64, f64)> = BTreeMap::new();
    let mut get = |l: f64, a: f64| -> Result<(f64, f64), String> {
        let key = (l.to_bits(), a.to_bits());
        if let Some(v) = memo.get(&key) {
            return Ok(*v);
        }
        let v = solve(l, a)?;
        memo.insert(key, v);
        Ok(v)
    };
    let nondecreasing = |xs: &[f64]| xs.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs().max(1.0));
    let path = [(0.0, 0.0), (1.0, 0.3), (10.0, 0.6), (10.0, 0.95)];
    let ei: Vec<f64> = path.iter().map(|&(l, a)| get(l, a).map(|v| v.0)).collect::<Result<_, _>>()?;
    ensure(nondecreasing(&ei), || format!("expected impact along (λ, α) path {ei:?}"))?;
    let alphas = [0.0, 0.3, 0.6, 0.95];
    let mut detail = format!("EI {ei:.3?}");
    for lambda in [1.0, 10.0] {
        let er: Vec<f64> = alphas.iter().map(|&a| get(lambda, a).map(|v| v.1)).collect::<Result<_, _>>()?;
        ensure(nondecreasing(&er), || format!("expected risk at λ = {lambda} over α {alphas:?}: {er:?}"))?;
        detail.push_str(&format!("; ER(λ={lambda}) {er:.3?}"));
    }
    Ok(detail)
}

// 9

fn intervention_ordering() -> Outcome {
    let cfg = fixtures::load("ny_nj_8county_full").unwrap();
    let inst = cfg.instance().map_err(|e| e.to_string())?;
    let stages = inst.tree.stages();
    let w = inst.tree.uniform_path(Branch::MEDIUM).map_err(|e| e.to_string())?;
    let sigma2 = inst.tree.sigma2_path(w);
    let plan = vec![vec![0.0; cfg.regions.len()]; stages];
    let run = |name: &str| -> Result<Vec<f64>, String> {
        let policy = InterventionPolicy::parse(name, stages, cfg.regions.len()).map_err(|e| e.to_string())?;
        let t = simulate(&inst.params, &inst.initial, &sigma2, &policy, &plan).map_err(|e| e.to_string())?;
        Ok((0..=stages).map(|j| t.cumulative_infections(j)).collect())
    };
    let none = run("none")?;
    let mask = run("mask")?;
    let lock = run("lockdown")?;
    for j in 3..=stages {
        ensure(none[j] >= mask[j], || format!("stage {j}: none {} < mask {}", none[j], mask[j]))?;
        ensure(none[j] >= lock[j], || format!("stage {j}: none {} < lockdown {}", none[j], lock[j]))?;
    }
    Ok(format!(
        "cumulative infections at stage {stages}: none {:.0}, mask {:.0}, lockdown {:.0}",
        none[stages], mask[stages], lock[stages]
    ))
}

// 10

fn validation_statistic() -> Outcome {
    let series = [7300.0, 7410.0, 7180.0, 7355.0, 7290.0, 7402.0, 7265.0, 7330.0];
    let same = paired_t_test(&series, &series).map_err(|e| e.to_string())?;
    ensure(same.t == 0.0 && same.p == 1.0, || format!("identical series gave t {} p {}", same.t, same.p))?;
    // Differences (2, 3, 1, 2, 3): mean 2.2, sample variance 0.7.
    let r = paired_t_test(&[10.0, 12.0, 9.0, 11.0, 14.0], &[8.0, 9.0, 8.0, 9.0, 11.0]).map_err(|e| e.to_string())?;
    let hand = 2.2 / (0.7f64 / 5.0).sqrt();
    ensure(within(r.t, hand, 1e-6), || format!("t {} vs hand {hand}", r.t))?;
    Ok(format!("identical: t 0, p 1; five pairs: t {:.9} (hand {hand:.9}), p {:.6}", r.t, r.p))
}

// 11

#[derive(Debug, Default)]
struct MpsCounts {
    rows: usize,
    columns: usize,
    integers: usize,
    binaries: usize,
    nonzeros: usize,
}

/// Reads an MPS file without the writer's help. Fixed format is cut at the
/// standard field columns, free format is split on whitespace.
fn read_mps(text: &str, fixed: bool) -> Result<MpsCounts, String> {
    let fields = |line: &str| -> Vec<String> {
        if !fixed {
            return line.split_whitespace().map(str::to_string).collect();
        }
        let cut = |a: usize, b: usize| line.get(a - 1..b.min(line.len())).unwrap_or("").trim().to_string();
        let mut out: Vec<String> =
            [(2, 3), (5, 12), (15, 22), (25, 36), (40, 47), (50, 61)].iter().map(|&(a, b)| cut(a, b)).collect();
        // Section data lines have an empty code field; keep positions stable.
        if out[0].is_empty() {
            out.remove(0);
        }
        out.retain(|f| !f.is_empty());
        out
    };
    let mut section = "";
    let mut objective = None;
    let mut rows: BTreeMap<String, char> = BTreeMap::new();
    let mut columns: Vec<String> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut integer: BTreeSet<String> = BTreeSet::new();
    let mut binary: BTreeSet<String> = BTreeSet::new();
    let mut in_int = false;
    let mut nonzeros = 0;
    for line in text.lines() {
        if line.starts_with('*') || line.trim().is_empty() {
            continue;
        }
        if !line.starts_with(' ') {
            section = line.split_whitespace().next().unwrap_or("");
            if section == "ENDATA" {
                break;
            }
            continue;
        }
        match section {
            "ROWS" => {
                let f: Vec<&str> = line.split_whitespace().collect();
                let [kind, name] = f[..] else { return Err(format!("bad row line `{line}`")) };
                if kind == "N" {
                    objective.get_or_insert_with(|| name.to_string());
                } else if rows.insert(name.to_string(), kind.chars().next().unwrap()).is_some() {
                    return Err(format!("row {name} declared twice"));
                }
            }
            "COLUMNS" => {
                let f = fields(line);
                if f.iter().any(|s| s == "'MARKER'") {
                    in_int = f.iter().any(|s| s == "'INTORG'");
                    continue;
                }
                if f.len() != 3 && f.len() != 5 {
                    return Err(format!("bad column line `{line}`"));
                }
                let col = &f[0];
                if seen.insert(col.clone()) {
                    columns.push(col.clone());
                    if in_int {
                        integer.insert(col.clone());
                    }
                } else if columns.last() != Some(col) {
                    return Err(format!("column {col} is not contiguous"));
                }
                for pair in f[1..].chunks(2) {
                    pair[1].parse::<f64>().map_err(|e| format!("{e} in `{line}`"))?;
                    if Some(&pair[0]) == objective.as_ref() {
                        continue;
                    }
                    if !rows.contains_key(&pair[0]) {
                        return Err(format!("unknown row {} in `{line}`", pair[0]));
                    }
                    nonzeros += 1;
                }
            }
            "RHS" => {
                let f = fields(line);
                for pair in f[1..].chunks(2) {
                    if !rows.contains_key(&pair[0]) {
                        return Err(format!("rhs on unknown row {}", pair[0]));
                    }
                }
            }
            "BOUNDS" => {
                let f: Vec<&str> = line.split_whitespace().collect();
                let col = f.get(2).ok_or_else(|| format!("bad bound line `{line}`"))?;
                if !seen.contains(*col) {
                    return Err(format!("bound on unknown column {col}"));
                }
                if f[0] == "BV" {
                    binary.insert(col.to_string());
                }
            }
            _ => return Err(format!("data outside a section: `{line}`")),
        }
    }
    let binaries = binary.len();
    let integers = integer.iter().filter(|c| !binary.contains(*c)).count();
    Ok(MpsCounts { rows: rows.len(), columns: columns.len(), integers, binaries, nonzeros })
}

fn export_integrity() -> Outcome {
    let mut detail = Vec::new();
    for name in ["reduced_2region", "ny_nj_8county"] {
        let inst = fixtures::load(name).unwrap().instance().map_err(|e| e.to_string())?;
        let model = formulate(&inst).map_err(|e| e.to_string())?.model;
        let census: Census = model.census();
        for (format, fixed) in [(MpsFormat::Fixed, true), (MpsFormat::Free, false)] {
            let got = read_mps(&to_mps(&model, format), fixed)?;
            let want = (census.constraints, census.variables, census.integer_variables, census.binary_variables, census.nonzeros);
            let have = (got.rows, got.columns, got.integers, got.binaries, got.nonzeros);
            ensure(have == want, || format!("{name} {format:?}: read {have:?}, census {want:?}"))?;
        }
        detail.push(format!("{name} {}x{}", census.constraints, census.variables));
    }
    Ok(format!("fixed and free re-imports match the census: {}", detail.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("scenario-tree fidelity", tree_fidelity),
        ("probability normalization", probability_normalization),
        ("conservation", conservation),
        ("simulator/MILP equivalence", simulator_equivalence),
        ("exact-solve oracle", exhaustive_oracle),
        ("bounds sandwich", bounds_sandwich),
        ("budget saturation", budget_saturation),
        ("risk trends", risk_trends),
        ("intervention ordering", intervention_ordering),
        ("validation statistic", validation_statistic),
        ("export integrity", export_integrity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.2}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.2}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
