//! Bundled configurations, embedded at compile time.

use crate::config::RunConfig;
use crate::error::{Error, Result};

/// Eight counties with a three-stage tree, sized for the embedded solver.
pub const NY_NJ_8COUNTY: &str = include_str!("../fixtures/ny_nj_8county.json");
/// Same data with the five-stage, 243-scenario tree. Export only.
pub const NY_NJ_8COUNTY_FULL: &str = include_str!("../fixtures/ny_nj_8county_full.json");
/// Two regions, two stages, nine scenarios, ten ventilators of budget.
pub const REDUCED_2REGION: &str = include_str!("../fixtures/reduced_2region.json");
/// One region whose ICU demand outruns any affordable supply.
pub const SHORTFALL_1REGION: &str = include_str!("../fixtures/shortfall_1region.json");

pub const NAMES: [&str; 4] = ["ny_nj_8county", "ny_nj_8county_full", "reduced_2region", "shortfall_1region"];

pub fn source(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".json") {
        "ny_nj_8county" => Some(NY_NJ_8COUNTY),
        "ny_nj_8county_full" => Some(NY_NJ_8COUNTY_FULL),
        "reduced_2region" => Some(REDUCED_2REGION),
        "shortfall_1region" => Some(SHORTFALL_1REGION),
        _ => None,
    }
}

pub fn load(name: &str) -> Result<RunConfig> {
    let text = source(name)
        .ok_or_else(|| Error::config("/", format!("unknown fixture `{name}`; known: {}", NAMES.join(", "))))?;
    RunConfig::from_json(text)
}
