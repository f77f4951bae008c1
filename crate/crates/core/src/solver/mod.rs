//! Embedded LP/MILP solver: bounded revised simplex plus branch-and-bound.

mod lu;
mod mip;
mod simplex;

pub use mip::{
    is_integral, relative_gap, solve_mip, solve_mip_hooked, solve_mip_warm, warm_start, MipHooks, MipLimits, MipResult,
    MipStatus, MAX_ROWS,
};
pub use simplex::{solve_lp, solve_lp_with, Basis, LpData, LpSolution, LpStatus, Simplex, SimplexOptions};
