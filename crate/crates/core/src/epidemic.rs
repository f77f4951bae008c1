//! Compartmental dynamics for a single scenario path.
//!
//! Periods are numbered `1..=J̄`. Period `k` starts from state `k - 1`, uses
//! the transmission rate `σ1[k]`, the asymptomatic proportion realized at the
//! depth-`k` tree node and the allocation `y[k]`, and produces state `k`.
//! Population counts are real valued; only allocations are integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    None,
    MaskDistance,
    Lockdown,
}

impl Intervention {
    pub const ALL: [Intervention; 3] = [Intervention::None, Intervention::MaskDistance, Intervention::Lockdown];

    pub fn name(&self) -> &'static str {
        match self {
            Intervention::None => "none",
            Intervention::MaskDistance => "mask_distance",
            Intervention::Lockdown => "lockdown",
        }
    }

    pub fn parse(s: &str) -> Option<Intervention> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Some(Intervention::None),
            "mask" | "mask_distance" | "mask-distance" | "maskdistance" => Some(Intervention::MaskDistance),
            "lockdown" => Some(Intervention::Lockdown),
            _ => None,
        }
    }
}

/// Per-period factor applied to the transmission rate by each intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    #[serde(default)]
    pub none: Option<f64>,
    #[serde(default)]
    pub mask_distance: Option<f64>,
    #[serde(default)]
    pub lockdown: Option<f64>,
}

impl Multipliers {
    pub fn new(none: f64, mask_distance: f64, lockdown: f64) -> Self {
        Multipliers { none: Some(none), mask_distance: Some(mask_distance), lockdown: Some(lockdown) }
    }

    pub fn get(&self, i: Intervention) -> Option<f64> {
        match i {
            Intervention::None => self.none,
            Intervention::MaskDistance => self.mask_distance,
            Intervention::Lockdown => self.lockdown,
        }
    }
}

/// Fraction of short-term migration that still happens under each intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Damping {
    pub none: f64,
    pub mask_distance: f64,
    pub lockdown: f64,
}

impl Default for Damping {
    fn default() -> Self {
        Damping { none: 1.0, mask_distance: 0.6, lockdown: 0.0 }
    }
}

impl Damping {
    pub fn get(&self, i: Intervention) -> f64 {
        match i {
            Intervention::None => self.none,
            Intervention::MaskDistance => self.mask_distance,
            Intervention::Lockdown => self.lockdown,
        }
    }
}

/// Per-period transition rates.
///
/// `lambda2` applies to tested infections turned away by the hospital and
/// `lambda5` to hospitalized patients who cannot get a ventilator, so those
/// two act on sub-flows of `lambda3 * I` and `lambda6 * H` respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Recovery of tested infections without hospitalization.
    pub lambda1: f64,
    /// Death of tested infections that needed but did not get a hospital bed.
    pub lambda2: f64,
    /// Hospitalization requirement of tested infections.
    pub lambda3: f64,
    /// Recovery in hospital.
    pub lambda4: f64,
    /// Death in hospital without a ventilator.
    pub lambda5: f64,
    /// Ventilator requirement of hospitalized patients.
    pub lambda6: f64,
    /// Recovery in ICU.
    pub lambda7: f64,
    /// Death in ICU.
    pub lambda8: f64,
    /// Recovery of untested asymptomatic infections.
    pub lambda9: f64,
}

impl Default for Rates {
    /// Midpoints of the published ranges where a range is given.
    fn default() -> Self {
        Rates {
            lambda1: 0.74,
            lambda2: 0.4,
            lambda3: 0.26,
            lambda4: 0.88,
            lambda5: 0.4,
            lambda6: 0.12,
            lambda7: 0.643,
            lambda8: 0.357,
            lambda9: 1.0,
        }
    }
}

impl Rates {
    pub fn as_array(&self) -> [f64; 9] {
        [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            self.lambda6,
            self.lambda7,
            self.lambda8,
            self.lambda9,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.as_array().iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::param(format!("lambda{}", i + 1), format!("{v} outside [0, 1]")));
            }
        }
        // Outflows from I are lambda1*I plus lambda2*Ibar + O <= lambda3*I.
        if self.lambda1 + self.lambda3 > 1.0 + 1e-9 {
            return Err(Error::param(
                "lambda1+lambda3",
                format!("{} exceeds 1, tested infections would go negative", self.lambda1 + self.lambda3),
            ));
        }
        if self.lambda4 + self.lambda6 > 1.0 + 1e-9 {
            return Err(Error::param(
                "lambda4+lambda6",
                format!("{} exceeds 1, hospital census would go negative", self.lambda4 + self.lambda6),
            ));
        }
        if (self.lambda7 + self.lambda8 - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "lambda7+lambda8",
                format!("{} must equal 1 (every ICU patient leaves after one period)", self.lambda7 + self.lambda8),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub name: String,
    pub population: f64,
    /// Hospital capacity T.
    pub hospital_capacity: f64,
    /// Total ICU beds; only `icu_available_fraction` of them serve the outbreak.
    pub icu_capacity: f64,
    /// Transmission rates for periods 1 and 2.
    pub transmission_seed: [f64; 2],
    pub multipliers: Multipliers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    pub rates: Rates,
    pub regions: Vec<RegionParams>,
    /// `migration[from][to]`, per-period share of `from`'s tested infections
    /// that show up in `to`.
    pub migration: Vec<Vec<f64>>,
    pub damping: Damping,
    pub icu_available_fraction: f64,
    /// Cost of one ventilator (e1).
    pub vent_cost: f64,
    /// Ventilator budget (Δ).
    pub budget: f64,
}

impl EpidemicParams {
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Ventilators available at the start (U0), rounded down.
    pub fn icu_init(&self, r: usize) -> f64 {
        (self.regions[r].icu_capacity * self.icu_available_fraction).floor()
    }

    /// Largest number of ventilators the budget can buy.
    pub fn max_ventilators(&self) -> f64 {
        if self.vent_cost > 0.0 {
            (self.budget / self.vent_cost + 1e-9).floor()
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        let n = self.regions.len();
        if n == 0 {
            return Err(Error::param("regions", "at least one region is required"));
        }
        for (r, reg) in self.regions.iter().enumerate() {
            let field = |f: &str| format!("regions[{r}].{f}");
            if !(reg.population >= 0.0 && reg.population.is_finite()) {
                return Err(Error::param(field("population"), "must be finite and >= 0"));
            }
            if !(reg.hospital_capacity >= 0.0 && reg.hospital_capacity.is_finite()) {
                return Err(Error::param(field("hospital_capacity"), "must be finite and >= 0"));
            }
            if !(reg.icu_capacity >= 0.0 && reg.icu_capacity.is_finite()) {
                return Err(Error::param(field("icu_capacity"), "must be finite and >= 0"));
            }
            if reg.transmission_seed.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(Error::param(field("transmission_seed"), "rates must be finite and >= 0"));
            }
            for i in Intervention::ALL {
                if let Some(m) = reg.multipliers.get(i) {
                    if !(m >= 0.0 && m.is_finite()) {
                        return Err(Error::param(field(&format!("multipliers.{}", i.name())), "must be >= 0"));
                    }
                }
            }
        }
        if self.migration.len() != n || self.migration.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension(format!("migration matrix must be {n}x{n}")));
        }
        for (a, row) in self.migration.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::param(format!("migration[{a}][{b}]"), format!("{v} outside [0, 1]")));
                }
                if a == b && v != 0.0 {
                    return Err(Error::param(format!("migration[{a}][{a}]"), "diagonal must be zero"));
                }
            }
        }
        for (name, v) in [
            ("damping.none", self.damping.none),
            ("damping.mask_distance", self.damping.mask_distance),
            ("damping.lockdown", self.damping.lockdown),
            ("icu_available_fraction", self.icu_available_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} outside [0, 1]")));
            }
        }
        if !(self.vent_cost > 0.0 && self.vent_cost.is_finite()) {
            return Err(Error::param("vent_cost", "must be positive"));
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(Error::param("budget", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Intervention chosen in each period for each region: `stages[k - 1][r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPolicy {
    pub stages: Vec<Vec<Intervention>>,
}

impl InterventionPolicy {
    pub fn uniform(stages: usize, regions: usize, i: Intervention) -> Self {
        InterventionPolicy { stages: vec![vec![i; regions]; stages] }
    }

    /// `first` for the first `switch_after` periods, `then` afterwards.
    pub fn switching(stages: usize, regions: usize, first: Intervention, switch_after: usize, then: Intervention) -> Self {
        InterventionPolicy {
            stages: (1..=stages).map(|k| vec![if k <= switch_after { first } else { then }; regions]).collect(),
        }
    }

    /// Named strategies: `none`, `mask`, `lockdown`, `mask+lockdown`,
    /// `lockdown+mask` (switching after three periods) or a comma-separated
    /// list with one intervention per period.
    pub fn parse(name: &str, stages: usize, regions: usize) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        if let Some(i) = Intervention::parse(&lower) {
            return Ok(Self::uniform(stages, regions, i));
        }
        match lower.as_str() {
            "mask+lockdown" => {
                return Ok(Self::switching(stages, regions, Intervention::MaskDistance, 3, Intervention::Lockdown))
            }
            "lockdown+mask" => {
                return Ok(Self::switching(stages, regions, Intervention::Lockdown, 3, Intervention::MaskDistance))
            }
            _ => {}
        }
        let parts: Vec<&str> = lower.split(',').collect();
        if parts.len() != stages {
            return Err(Error::Horizon(format!(
                "policy `{name}` lists {} periods but the horizon has {stages}",
                parts.len()
            )));
        }
        let stages = parts
            .iter()
            .map(|p| {
                Intervention::parse(p)
                    .map(|i| vec![i; regions])
                    .ok_or_else(|| Error::param("policy", format!("unknown intervention `{p}`")))
            })
            .collect::<Result<_>>()?;
        Ok(InterventionPolicy { stages })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Intervention in period `k` (1-based) for region `r`.
    pub fn at(&self, k: usize, r: usize) -> Intervention {
        self.stages[k - 1][r]
    }

    pub fn validate(&self, stages: usize, regions: usize) -> Result<()> {
        if self.stages.len() != stages {
            return Err(Error::Horizon(format!(
                "policy covers {} periods, horizon has {stages}",
                self.stages.len()
            )));
        }
        if self.stages.iter().any(|row| row.len() != regions) {
            return Err(Error::Dimension(format!("policy must list {regions} regions per period")));
        }
        Ok(())
    }
}

/// Transmission rate for every period and region: `result[k - 1][r]`.
///
/// Periods 1 and 2 take the seeds. From then on the intervention of period
/// `k` scales the rate of period `k + 1`.
pub fn transmission_schedule(regions: &[RegionParams], policy: &InterventionPolicy) -> Result<Vec<Vec<f64>>> {
    let stages = policy.num_stages();
    policy.validate(stages, regions.len())?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(stages);
    for k in 1..=stages {
        let row = regions
            .iter()
            .enumerate()
            .map(|(r, reg)| {
                if k <= 2 {
                    return Ok(reg.transmission_seed[k - 1]);
                }
                let i = policy.at(k - 1, r);
                let m = reg.multipliers.get(i).ok_or_else(|| Error::MissingMultiplier {
                    region: reg.name.clone(),
                    intervention: i.name().into(),
                })?;
                Ok(out[k - 2][r] * m)
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Infections arriving in each region via short-term migration:
/// `inflow[r] = damping[r] * Σ_{r' != r} migration[r'][r] * infected[r']`.
///
/// Migration only adds to the destination; the source is not debited.
pub fn migration_inflow(infected: &[f64], migration: &[Vec<f64>], damping: &[f64]) -> Result<Vec<f64>> {
    let n = infected.len();
    if migration.len() != n || migration.iter().any(|row| row.len() != n) || damping.len() != n {
        return Err(Error::Dimension(format!(
            "migration matrix and damping must match {n} regions"
        )));
    }
    if infected.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::param("infected", "counts must be non-negative"));
    }
    Ok((0..n)
        .map(|r| {
            let sum: f64 = (0..n).filter(|&src| src != r).map(|src| migration[src][r] * infected[src]).sum();
            damping[r] * sum
        })
        .collect())
}

/// Census of one region at one stage, plus the flows of the period that
/// produced it (all zero at stage 0).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: f64,
    pub i: f64,
    pub x: f64,
    pub h: f64,
    pub c: f64,
    pub r: f64,
    pub f: f64,
    /// Hospital admissions.
    pub o: f64,
    /// ICU admissions.
    pub cbar: f64,
    /// Tested infections needing a hospital bed but not admitted.
    pub ibar: f64,
    /// Hospitalized patients needing a ventilator but not getting one.
    pub k: f64,
    /// Cumulative ventilator capacity in effect.
    pub u: f64,
    /// Migration inflow of infections.
    pub imig: f64,
    /// New tested infections including the migration inflow.
    pub new_infections: f64,
}

impl CompartmentState {
    /// Stage-0 census; susceptibles are whatever the other compartments leave.
    #[allow(clippy::too_many_arguments)]
    pub fn initial(population: f64, i: f64, x: f64, h: f64, c: f64, r: f64, f: f64, u0: f64) -> Self {
        CompartmentState { s: population - (i + x + h + c + r + f), i, x, h, c, r, f, u: u0, ..Default::default() }
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.x + self.h + self.c + self.r + self.f
    }

    /// Stage contribution to the objective.
    pub fn impact(&self) -> f64 {
        self.i + self.f
    }

    pub fn stocks(&self) -> [f64; 7] {
        [self.s, self.i, self.x, self.h, self.c, self.r, self.f]
    }

    pub fn validate(&self, hospital_capacity: f64) -> Result<()> {
        let stocks = self.stocks();
        if stocks.iter().chain([self.u].iter()).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("state", format!("compartments must be finite and >= 0: {stocks:?}")));
        }
        if self.c > self.u + 1e-9 {
            return Err(Error::param("state.c", format!("ICU census {} exceeds capacity {}", self.c, self.u)));
        }
        if self.h > hospital_capacity + 1e-9 {
            return Err(Error::param(
                "state.h",
                format!("hospital census {} exceeds capacity {hospital_capacity}", self.h),
            ));
        }
        Ok(())
    }
}

/// Exogenous inputs of one period for one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInputs {
    pub sigma1: f64,
    pub sigma2: f64,
    pub inflow: f64,
    pub allocation: f64,
}

/// Outcome of [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: CompartmentState,
    /// Whether new infections had to be scaled down to the remaining susceptibles.
    pub depleted: bool,
}

pub(crate) fn check_allocation(y: f64) -> Result<()> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::Allocation(format!("ventilator allocation {y} must be >= 0")));
    }
    if (y - y.round()).abs() > 1e-6 {
        return Err(Error::Allocation(format!("ventilator allocation {y} must be integral")));
    }
    Ok(())
}

/// One period of the compartmental model for one region.
pub fn step(state: &CompartmentState, rates: &Rates, hospital_capacity: f64, inputs: StepInputs) -> Result<StepOutcome> {
    let StepInputs { sigma1, sigma2, inflow, allocation } = inputs;
    if !(0.0..1.0).contains(&sigma2) {
        return Err(Error::ProportionTooLarge(sigma2));
    }
    if !(sigma1 >= 0.0) || !sigma1.is_finite() {
        return Err(Error::param("sigma1", format!("transmission rate {sigma1} must be >= 0")));
    }
    if !(inflow >= 0.0) {
        return Err(Error::param("inflow", format!("migration inflow {inflow} must be >= 0")));
    }
    check_allocation(allocation)?;
    let Rates { lambda1, lambda2, lambda3, lambda4, lambda5, lambda6, lambda7, lambda8, lambda9 } = *rates;
    let CompartmentState { s, i, x, h, c, r, f, u, .. } = *state;

    let pressure = sigma1 * (i + x);
    let mut new_i = pressure;
    let mut new_x = pressure * sigma2 / (1.0 - sigma2);
    let mut depleted = false;
    let demand = new_i + new_x;
    if demand > s {
        let scale = if demand > 0.0 { s / demand } else { 0.0 };
        new_i *= scale;
        new_x *= scale;
        depleted = true;
    }
    let s_next = if depleted { 0.0 } else { s - new_i - new_x };

    let o = (lambda3 * i).min((hospital_capacity - h).max(0.0));
    let ibar = lambda3 * i - o;
    let u_next = u + allocation;
    let cbar = (lambda6 * h).min((u_next - c).max(0.0));
    let k = lambda6 * h - cbar;

    let next = CompartmentState {
        s: s_next.max(0.0),
        i: (i + inflow + new_i - lambda1 * i - lambda2 * ibar - o).max(0.0),
        x: (x + new_x - lambda9 * x).max(0.0),
        h: (h + o - lambda4 * h - lambda5 * k - cbar).max(0.0),
        c: (c + cbar - lambda7 * c - lambda8 * c).max(0.0),
        r: r + lambda1 * i + lambda9 * x + lambda4 * h + lambda7 * c,
        f: f + lambda2 * ibar + lambda5 * k + lambda8 * c,
        o,
        cbar,
        ibar,
        k,
        u: u_next,
        imig: inflow,
        new_infections: new_i + inflow,
    };
    Ok(StepOutcome { state: next, depleted })
}

/// States `0..=J̄` for every region along one scenario path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `states[j][r]`.
    pub states: Vec<Vec<CompartmentState>>,
    /// True if any period had to cap new infections at the susceptible pool.
    pub depleted: bool,
}

impl Trajectory {
    pub fn num_stages(&self) -> usize {
        self.states.len() - 1
    }

    /// Σ_r (I + F) at stage `j`.
    pub fn impact(&self, j: usize) -> f64 {
        self.states[j].iter().map(CompartmentState::impact).sum()
    }

    pub fn impacts(&self) -> Vec<f64> {
        (0..self.states.len()).map(|j| self.impact(j)).collect()
    }

    /// Σ_j Σ_r (I + F).
    pub fn total_impact(&self) -> f64 {
        self.impacts().iter().sum()
    }

    /// Cumulative new infections through stage `j`, summed over regions.
    pub fn cumulative_infections(&self, j: usize) -> f64 {
        self.states[1..=j].iter().flatten().map(|s| s.new_infections).sum()
    }
}

/// Runs one scenario path.
///
/// `sigma2_path[k - 1]` and `allocation[k - 1][r]` drive period `k`.
pub fn simulate(
    params: &EpidemicParams,
    initial: &[CompartmentState],
    sigma2_path: &[f64],
    policy: &InterventionPolicy,
    allocation: &[Vec<f64>],
) -> Result<Trajectory> {
    let regions = params.num_regions();
    let stages = sigma2_path.len();
    if initial.len() != regions {
        return Err(Error::Dimension(format!("{} initial states for {regions} regions", initial.len())));
    }
    if policy.num_stages() != stages {
        return Err(Error::Horizon(format!(
            "policy covers {} periods but the scenario path has {stages}",
            policy.num_stages()
        )));
    }
    if allocation.len() != stages || allocation.iter().any(|row| row.len() != regions) {
        return Err(Error::Horizon(format!("allocation must be {stages} periods x {regions} regions")));
    }
    let mut spent = 0.0;
    for row in allocation {
        for &y in row {
            check_allocation(y)?;
            spent += y * params.vent_cost;
        }
    }
    if spent > params.budget * (1.0 + 1e-12) + 1e-9 {
        return Err(Error::Budget { cost: spent, budget: params.budget });
    }
    for (r, st) in initial.iter().enumerate() {
        st.validate(params.regions[r].hospital_capacity)?;
    }
    let sigma1 = transmission_schedule(&params.regions, policy)?;

    let mut states = Vec::with_capacity(stages + 1);
    states.push(initial.to_vec());
    let mut depleted = false;
    for k in 1..=stages {
        let prev = &states[k - 1];
        let infected: Vec<f64> = prev.iter().map(|s| s.i).collect();
        let damping: Vec<f64> = (0..regions).map(|r| params.damping.get(policy.at(k, r))).collect();
        let inflow = migration_inflow(&infected, &params.migration, &damping)?;
        let mut next = Vec::with_capacity(regions);
        for r in 0..regions {
            let out = step(
                &prev[r],
                &params.rates,
                params.regions[r].hospital_capacity,
                StepInputs {
                    sigma1: sigma1[k - 1][r],
                    sigma2: sigma2_path[k - 1],
                    inflow: inflow[r],
                    allocation: allocation[k - 1][r],
                },
            )?;
            depleted |= out.depleted;
            next.push(out.state);
        }
        states.push(next);
    }
    Ok(Trajectory { states, depleted })
}
