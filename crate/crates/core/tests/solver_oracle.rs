//! The simplex and branch-and-bound checked against brute force.

use proptest::prelude::*;
use ventalloc::milp::{MilpModel, Sense, VarKind};
use ventalloc::solver::{solve_lp, solve_mip, solve_mip_warm, LpStatus, MipLimits, MipStatus};

#[derive(Debug)]
struct DenseLp {
    c: Vec<f64>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
    upper: Vec<f64>,
}

impl DenseLp {
    fn model(&self) -> MilpModel {
        let mut m = MilpModel::new("dense");
        let vars: Vec<_> = self
            .upper
            .iter()
            .enumerate()
            .map(|(j, &u)| m.add_var(format!("x{j}"), VarKind::Continuous, 0.0, u, "x"))
            .collect();
        for (i, (a, sense, b)) in self.rows.iter().enumerate() {
            let terms = vars.iter().zip(a).map(|(&v, &a)| (v, a)).collect();
            m.add_constraint(format!("r{i}"), terms, *sense, *b, "r");
        }
        m.objective = vars.iter().zip(&self.c).map(|(&v, &c)| (v, c)).collect();
        m
    }

    fn feasible(&self, x: &[f64]) -> bool {
        let tol = 1e-7;
        if x.iter().zip(&self.upper).any(|(&v, &u)| v < -tol || v > u + tol) {
            return false;
        }
        self.rows.iter().all(|(a, sense, b)| {
            let act: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            let scale = 1.0 + b.abs();
            match sense {
                Sense::Le => act <= b + tol * scale,
                Sense::Ge => act >= b - tol * scale,
                Sense::Eq => (act - b).abs() <= tol * scale,
            }
        })
    }

    /// Best objective over all basic points, or `None` when no vertex is feasible.
    fn vertex_optimum(&self) -> Option<f64> {
        let n = self.c.len();
        let mut planes: Vec<(Vec<f64>, f64)> = self.rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), 0.0));
            planes.push((e, self.upper[j]));
        }
        let mut best: Option<f64> = None;
        let mut pick = Vec::with_capacity(n);
        subsets(planes.len(), n, 0, &mut pick, &mut |idx| {
            if let Some(x) = solve_square(idx.iter().map(|&i| &planes[i]).collect()) {
                if self.feasible(&x) {
                    let obj: f64 = self.c.iter().zip(&x).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
        });
        best
    }
}

fn subsets(total: usize, k: usize, from: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in from..total {
        if total - i < k - pick.len() {
            break;
        }
        pick.push(i);
        subsets(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Gaussian elimination with partial pivoting on the chosen hyperplanes.
fn solve_square(planes: Vec<&(Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let n = planes.len();
    let mut a: Vec<Vec<f64>> = planes.iter().map(|(row, b)| row.iter().copied().chain([*b]).collect()).collect();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, p);
        for i in 0..n {
            if i != col {
                let f = a[i][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        a[i][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

fn dense_lp() -> impl Strategy<Value = DenseLp> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(n, m)| {
        let coef = || -5i32..=5;
        (
            proptest::collection::vec(coef(), n),
            proptest::collection::vec((proptest::collection::vec(coef(), n), 0u8..3, -4i32..=12), m),
            proptest::collection::vec(1i32..=6, n),
        )
            .prop_map(|(c, rows, upper)| DenseLp {
                c: c.into_iter().map(f64::from).collect(),
                rows: rows
                    .into_iter()
                    .map(|(a, s, b)| {
                        let sense = match s {
                            0 => Sense::Le,
                            1 => Sense::Ge,
                            _ => Sense::Eq,
                        };
                        (a.into_iter().map(f64::from).collect(), sense, f64::from(b))
                    })
                    .collect(),
                upper: upper.into_iter().map(f64::from).collect(),
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn random_lps_match_vertex_enumeration(lp in dense_lp()) {
        let sol = solve_lp(&lp.model()).unwrap();
        match lp.vertex_optimum() {
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - best).abs() <= 1e-6 * (1.0 + best.abs()), "{} vs {}", sol.objective, best);
                prop_assert!(lp.feasible(&sol.values));
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }

    #[test]
    fn pure_lp_through_mip_matches_lp(lp in dense_lp()) {
        let model = lp.model();
        let a = solve_lp(&model).unwrap();
        let b = solve_mip(&model, MipLimits::exact()).unwrap();
        if a.status == LpStatus::Optimal {
            prop_assert_eq!(b.status, MipStatus::Optimal);
            prop_assert_eq!(b.nodes_explored, 1);
            prop_assert!((b.objective.unwrap() - a.objective).abs() <= 1e-9 * (1.0 + a.objective.abs()));
        } else {
            prop_assert_eq!(b.status, MipStatus::Infeasible);
        }
    }
}

fn knapsack(values: &[f64], weights: &[f64], cap: f64) -> MilpModel {
    let mut m = MilpModel::new("knapsack");
    let xs: Vec<_> =
        (0..values.len()).map(|i| m.add_var(format!("take{i}"), VarKind::Binary, 0.0, 1.0, "x")).collect();
    m.add_constraint("cap".into(), xs.iter().zip(weights).map(|(&x, &w)| (x, w)).collect(), Sense::Le, cap, "r");
    m.objective = xs.iter().zip(values).map(|(&x, &v)| (x, -v)).collect();
    m
}

fn knapsack_enumeration(values: &[f64], weights: &[f64], cap: f64) -> f64 {
    (0u32..1 << values.len())
        .filter_map(|mask| {
            let pick = |v: &[f64]| (0..v.len()).filter(|i| mask >> i & 1 == 1).map(|i| v[i]).sum::<f64>();
            (pick(weights) <= cap).then(|| -pick(values))
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 30, ..ProptestConfig::default() })]

    #[test]
    fn six_item_knapsack_matches_all_subsets(
        items in proptest::collection::vec((1u32..50, 1u32..30), 6),
        cap in 10u32..90,
    ) {
        let values: Vec<f64> = items.iter().map(|p| f64::from(p.0)).collect();
        let weights: Vec<f64> = items.iter().map(|p| f64::from(p.1)).collect();
        let cap = f64::from(cap);
        let res = solve_mip(&knapsack(&values, &weights, cap), MipLimits::exact()).unwrap();
        let best = knapsack_enumeration(&values, &weights, cap);
        prop_assert_eq!(res.status, MipStatus::Optimal);
        prop_assert!((res.objective.unwrap() - best).abs() < 1e-6);
        prop_assert!(res.bound <= res.objective.unwrap() + 1e-7);
    }
}

#[test]
fn general_integers_and_determinism() {
    // min -5a - 4b  s.t. 6a + 4b <= 24, a + 2b <= 6, a, b integer in [0, 10]
    let mut m = MilpModel::new("ints");
    let a = m.add_var("a".into(), VarKind::Integer, 0.0, 10.0, "x");
    let b = m.add_var("b".into(), VarKind::Integer, 0.0, 10.0, "x");
    m.add_constraint("c1".into(), vec![(a, 6.0), (b, 4.0)], Sense::Le, 24.0, "r");
    m.add_constraint("c2".into(), vec![(a, 1.0), (b, 2.0)], Sense::Le, 6.0, "r");
    m.objective = vec![(a, -5.0), (b, -4.0)];
    let mut best = f64::INFINITY;
    for ia in 0..=10 {
        for ib in 0..=10 {
            let (x, y) = (ia as f64, ib as f64);
            if 6.0 * x + 4.0 * y <= 24.0 && x + 2.0 * y <= 6.0 {
                best = best.min(-5.0 * x - 4.0 * y);
            }
        }
    }
    let r1 = solve_mip(&m, MipLimits::exact()).unwrap();
    let r2 = solve_mip(&m, MipLimits::exact()).unwrap();
    assert!((r1.objective.unwrap() - best).abs() < 1e-9);
    assert_eq!(r1.values(), r2.values());
    assert_eq!(r1.nodes_explored, r2.nodes_explored);
}

#[test]
fn warm_start_with_optimum_and_bad_seed() {
    let values = [10.0, 13.0, 7.0, 8.0, 2.0, 9.0];
    let weights = [5.0, 7.0, 4.0, 5.0, 1.0, 6.0];
    let m = knapsack(&values, &weights, 15.0);
    let cold = solve_mip(&m, MipLimits::exact()).unwrap();
    let seed = cold.values().unwrap().to_vec();
    let warm = solve_mip_warm(&m, MipLimits::exact(), Some(&seed)).unwrap();
    assert_eq!(warm.status, MipStatus::Optimal);
    assert_eq!(warm.objective, cold.objective);
    assert_eq!(warm.values(), Some(seed.as_slice()));
    let bad = vec![1.0; 6];
    let err = solve_mip_warm(&m, MipLimits::exact(), Some(&bad)).unwrap_err();
    assert!(err.to_string().contains("cap"), "{err}");
}

#[test]
fn node_limit_reports_honest_gap() {
    let values: Vec<f64> = (0..14).map(|i| 10.0 + ((i * 7) % 11) as f64).collect();
    let weights: Vec<f64> = (0..14).map(|i| 5.0 + ((i * 5) % 9) as f64).collect();
    let m = knapsack(&values, &weights, 40.5);
    let res = solve_mip(&m, MipLimits { nodes: Some(3), ..MipLimits::exact() }).unwrap();
    let full = solve_mip(&m, MipLimits::exact()).unwrap();
    if res.status == MipStatus::NodeLimit {
        assert!(res.bound <= full.objective.unwrap() + 1e-7);
        if let Some(o) = res.objective {
            assert!(o >= full.objective.unwrap() - 1e-7);
            assert!(res.gap >= 0.0);
        }
    } else {
        assert_eq!(res.objective, full.objective);
    }
}
