//! Harmonic-aware scheduling of power-to-hydrogen plants fed by thyristor
//! rectifiers: rectifier harmonics, grid-code limits, pairwise feasible
//! regions, the scheduling MILP and KPI reporting.

pub mod calibration;
pub mod feasible_region;
pub mod grid_codes;
pub mod rectifier;
pub mod reporting;
pub mod scenario;
pub mod scheduler;

pub use p2h_milp as milp;
