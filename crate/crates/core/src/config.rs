//! Run configuration: a single JSON document holding regions, rates, the
//! scenario tree, the intervention policy, risk settings and solver limits.
//!
//! [`RunConfig::load`] parses, fills defaults and validates. Serializing the
//! result gives the resolved config, which loads back to an identical value.

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};

use crate::epidemic::{
    transmission_schedule, CompartmentState, Damping, EpidemicParams, InterventionPolicy, Intervention, Multipliers,
    Rates, RegionParams,
};
use crate::error::{Error, Result};
use crate::risk::RiskConfig;
use crate::scenario_tree::{ScenarioTree, TreeSpec};
use crate::solver::MipLimits;

/// Stage-0 compartment counts other than susceptibles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCounts {
    #[serde(default)]
    pub i: f64,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub f: f64,
}

impl InitialCounts {
    pub fn sum(&self) -> f64 {
        self.i + self.x + self.h + self.c + self.r + self.f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    pub population: f64,
    #[serde(default)]
    pub initial: InitialCounts,
    pub hospital_capacity: f64,
    pub icu_capacity: f64,
    pub transmission_seed: [f64; 2],
    pub multipliers: Multipliers,
}

/// Either a strategy name understood by [`InterventionPolicy::parse`] or an
/// explicit `[period][region]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySpec {
    Named(String),
    Explicit(Vec<Vec<Intervention>>),
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::Named("lockdown".into())
    }
}

impl PolicySpec {
    pub fn resolve(&self, stages: usize, regions: usize) -> Result<InterventionPolicy> {
        let policy = match self {
            PolicySpec::Named(name) => InterventionPolicy::parse(name, stages, regions)?,
            PolicySpec::Explicit(table) => InterventionPolicy { stages: table.clone() },
        };
        policy.validate(stages, regions)?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub time_limit_secs: Option<f64>,
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default)]
    pub node_limit: Option<usize>,
}

fn default_gap() -> f64 {
    MipLimits::default().gap
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { time_limit_secs: None, gap: default_gap(), node_limit: None }
    }
}

impl SolverConfig {
    pub fn limits(&self) -> MipLimits {
        MipLimits {
            time: self.time_limit_secs.map(Duration::from_secs_f64),
            gap: self.gap,
            nodes: self.node_limit,
        }
    }
}

fn default_fraction() -> f64 {
    0.4
}
fn default_cost() -> f64 {
    5000.0
}

/// Blank cells read as zero migration.
fn nullable_matrix<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    let raw: Vec<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|row| row.into_iter().map(|v| v.unwrap_or(0.0)).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub regions: Vec<RegionConfig>,
    /// `migration[from][to]`; omitted means no migration.
    #[serde(default, deserialize_with = "nullable_matrix")]
    pub migration: Vec<Vec<f64>>,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub damping: Damping,
    #[serde(default = "default_fraction")]
    pub icu_available_fraction: f64,
    #[serde(default = "default_cost")]
    pub vent_cost: f64,
    #[serde(default)]
    pub budget: f64,
    #[serde(default)]
    pub budget_levels: Vec<f64>,
    pub tree: TreeSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub risk: RiskConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Everything a run needs, resolved from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: EpidemicParams,
    pub initial: Vec<CompartmentState>,
    pub tree: ScenarioTree,
    pub policy: InterventionPolicy,
    pub risk: RiskConfig,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("/", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let ptr = pointer(e.path());
            Error::config(ptr, e.into_inner().to_string())
        })?;
        cfg.resolve()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve(&mut self) -> Result<()> {
        let n = self.regions.len();
        if self.migration.is_empty() {
            self.migration = vec![vec![0.0; n]; n];
        }
        if self.migration.len() != n {
            return Err(Error::config("/migration", format!("{} rows for {n} regions", self.migration.len())));
        }
        for (a, row) in self.migration.iter().enumerate() {
            if row.len() != n {
                return Err(Error::config(format!("/migration/{a}"), format!("{} columns for {n} regions", row.len())));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (r, reg) in self.regions.iter().enumerate() {
            if reg.name.trim().is_empty() {
                return Err(Error::param(format!("regions[{r}].name"), "must not be empty"));
            }
            if !seen.insert(reg.name.as_str()) {
                return Err(Error::param(format!("regions[{r}].name"), format!("duplicate region `{}`", reg.name)));
            }
            let c = &reg.initial;
            for (f, v) in [("i", c.i), ("x", c.x), ("h", c.h), ("c", c.c), ("r", c.r), ("f", c.f)] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::param(format!("regions[{r}].initial.{f}"), "must be finite and >= 0"));
                }
            }
            if c.sum() > reg.population {
                return Err(Error::param(
                    format!("regions[{r}].initial"),
                    format!("initial compartments sum to {} but the population is {}", c.sum(), reg.population),
                ));
            }
        }
        for (b, v) in self.budget_levels.iter().enumerate() {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::param(format!("budget_levels[{b}]"), "must be finite and >= 0"));
            }
        }
        if !(self.solver.gap >= 0.0) {
            return Err(Error::param("solver.gap", "must be >= 0"));
        }
        if let Some(t) = self.solver.time_limit_secs {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::param("solver.time_limit_secs", "must be finite and >= 0"));
            }
        }
        let inst = self.instance()?;
        for (r, st) in inst.initial.iter().enumerate() {
            st.validate(inst.params.regions[r].hospital_capacity)?;
        }
        transmission_schedule(&inst.params.regions, &inst.policy)?;
        Ok(())
    }

    pub fn params(&self) -> EpidemicParams {
        EpidemicParams {
            rates: self.rates,
            regions: self
                .regions
                .iter()
                .map(|r| RegionParams {
                    name: r.name.clone(),
                    population: r.population,
                    hospital_capacity: r.hospital_capacity,
                    icu_capacity: r.icu_capacity,
                    transmission_seed: r.transmission_seed,
                    multipliers: r.multipliers,
                })
                .collect(),
            migration: self.migration.clone(),
            damping: self.damping,
            icu_available_fraction: self.icu_available_fraction,
            vent_cost: self.vent_cost,
            budget: self.budget,
        }
    }

    pub fn initial_states(&self) -> Vec<CompartmentState> {
        let params = self.params();
        self.regions
            .iter()
            .enumerate()
            .map(|(r, reg)| {
                let c = &reg.initial;
                CompartmentState::initial(reg.population, c.i, c.x, c.h, c.c, c.r, c.f, params.icu_init(r))
            })
            .collect()
    }

    pub fn instance(&self) -> Result<Instance> {
        let params = self.params();
        params.validate()?;
        self.risk.validate()?;
        let tree = ScenarioTree::build(&self.tree)?;
        let policy = self.policy.resolve(tree.stages(), self.regions.len())?;
        Ok(Instance { initial: self.initial_states(), params, tree, policy, risk: self.risk })
    }

    pub fn with_budget(&self, budget: f64) -> RunConfig {
        RunConfig { budget, ..self.clone() }
    }
}
