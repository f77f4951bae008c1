//! Result files and the validation statistic.
//!
//! CSV rows come out in (scenario, stage, region) order with a fixed header,
//! so two runs of the same input produce identical files.

use std::io::Write;

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::epidemic::{CompartmentState, Trajectory};
use crate::error::{Error, Result};
use crate::milp::{BundleAllocation, Census, Solution};
use crate::solver::MipResult;

pub const TRAJECTORY_HEADER: [&str; 17] = [
    "scenario",
    "stage",
    "region",
    "S",
    "I",
    "X",
    "H",
    "C",
    "R",
    "F",
    "O",
    "Cbar",
    "Ibar",
    "K",
    "U",
    "Imig",
    "new_infections",
];

/// Region label of the per-stage sum over regions.
pub const AGGREGATE: &str = "ALL";

fn state_fields(st: &CompartmentState) -> [f64; 14] {
    [
        st.s,
        st.i,
        st.x,
        st.h,
        st.c,
        st.r,
        st.f,
        st.o,
        st.cbar,
        st.ibar,
        st.k,
        st.u,
        st.imig,
        st.new_infections,
    ]
}

/// Writes `(scenario id, trajectory)` pairs, each stage followed by its aggregate row.
pub fn write_trajectories<W: Write>(
    out: W,
    regions: &[String],
    runs: &[(usize, &Trajectory)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for &(scenario, traj) in runs {
        for (j, states) in traj.states.iter().enumerate() {
            let mut total = [0.0; 14];
            for (r, st) in states.iter().enumerate() {
                let vals = state_fields(st);
                for (t, v) in total.iter_mut().zip(vals) {
                    *t += v;
                }
                write_row(&mut w, scenario, j, &regions[r], &vals)?;
            }
            write_row(&mut w, scenario, j, AGGREGATE, &total)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, scenario: usize, stage: usize, region: &str, vals: &[f64]) -> Result<()> {
    let mut rec = vec![scenario.to_string(), stage.to_string(), region.to_string()];
    rec.extend(vals.iter().map(|v| v.to_string()));
    w.write_record(&rec)?;
    Ok(())
}

pub const ALLOCATION_HEADER: [&str; 7] =
    ["stage", "node", "first_scenario", "last_scenario", "probability", "region", "ventilators"];

pub fn write_allocations<W: Write>(out: W, regions: &[String], bundles: &[BundleAllocation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ALLOCATION_HEADER)?;
    for b in bundles {
        for (r, v) in b.ventilators.iter().enumerate() {
            w.write_record([
                b.stage.to_string(),
                b.node.to_string(),
                b.first_scenario.to_string(),
                b.last_scenario.to_string(),
                b.probability.to_string(),
                regions[r].clone(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary written next to the allocation CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub name: String,
    pub budget: f64,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(flatten)]
    pub solve: MipResult,
    pub expected_impact: Option<f64>,
    pub expected_risk: Option<f64>,
    /// Ventilators bought in the worst-spending scenario.
    pub ventilators: Option<f64>,
    pub census: Census,
    pub bundles: Vec<BundleAllocation>,
}

impl OptimizeReport {
    pub fn new(
        name: &str,
        budget: f64,
        risk: crate::risk::RiskConfig,
        solve: MipResult,
        census: Census,
        solution: Option<&Solution>,
    ) -> Self {
        let ventilators = solution.map(|s| {
            (0..s.allocation.per_scenario.len()).map(|w| s.total_ventilators(w)).fold(0.0, f64::max)
        });
        OptimizeReport {
            name: name.to_string(),
            budget,
            alpha: risk.alpha,
            lambda: risk.lambda,
            solve,
            expected_impact: solution.map(|s| s.expected_impact),
            expected_risk: solution.map(|s| s.expected_risk),
            ventilators,
            census,
            bundles: solution.map(|s| s.bundles.clone()).unwrap_or_default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub df: usize,
    pub mean_predicted: f64,
    pub mean_observed: f64,
}

/// Two-tailed paired t-test of `predicted - observed`.
pub fn paired_t_test(predicted: &[f64], observed: &[f64]) -> Result<PairedTTest> {
    if predicted.len() != observed.len() {
        return Err(Error::Dimension(format!(
            "paired series of length {} and {}",
            predicted.len(),
            observed.len()
        )));
    }
    let n = predicted.len();
    if n < 2 {
        return Err(Error::DegenerateTest(format!("need at least 2 pairs, got {n}")));
    }
    if predicted.iter().chain(observed).any(|v| !v.is_finite()) {
        return Err(Error::param("series", "values must be finite"));
    }
    let nf = n as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / nf;
    let d: Vec<f64> = predicted.iter().zip(observed).map(|(a, b)| a - b).collect();
    let md = mean(&d);
    let var = d.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = n - 1;
    let (t, p) = if var == 0.0 {
        if md != 0.0 {
            return Err(Error::DegenerateTest(format!(
                "every difference equals {md}; the statistic is infinite"
            )));
        }
        (0.0, 1.0)
    } else {
        let t = md / (var / nf).sqrt();
        let v = df as f64;
        // P(|T| > |t|) = I_{v / (v + t²)}(v / 2, 1 / 2)
        (t, beta_reg(v / 2.0, 0.5, v / (v + t * t)))
    };
    Ok(PairedTTest { t, p, df, mean_predicted: mean(predicted), mean_observed: mean(observed) })
}
