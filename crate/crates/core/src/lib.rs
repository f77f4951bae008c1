//! Ventilator allocation under epidemic uncertainty.
//!
//! The crate builds a scenario tree over the asymptomatic proportion, simulates
//! a multi-region compartmental model along each path, formulates the
//! risk-averse stochastic MILP that allocates ventilators, and solves it with
//! an embedded branch-and-bound solver. Lower and upper bounds from scenario
//! decomposition are available for instances too large to solve directly.

pub mod error;
pub mod normal;
pub mod scenario_tree;
pub mod epidemic;
pub mod milp;
pub mod risk;
pub mod solver;
pub mod config;
pub mod fixtures;
pub mod bounds;
pub mod report;

pub use error::{Error, Result};
