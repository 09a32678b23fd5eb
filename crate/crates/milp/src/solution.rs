use std::time::Duration;

use crate::model::VarId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// Search tree exhausted; the incumbent is optimal up to tolerances.
    Optimal,
    /// Stopped once the relative gap fell below the requested limit.
    GapReached,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub values: Vec<f64>,
    /// Objective in the model's own direction and units.
    pub objective: f64,
    /// Proven bound on the optimal objective (upper bound when maximizing).
    pub best_bound: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub elapsed: Duration,
}

impl Solution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.index()]
    }

    /// `|bound − objective| / max(1, |objective|)`.
    pub fn relative_gap(&self) -> f64 {
        (self.best_bound - self.objective).abs() / self.objective.abs().max(1.0)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub relative_gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub integrality_tol: f64,
    pub feasibility_tol: f64,
    pub log: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            relative_gap: 1e-3,
            time_limit: None,
            node_limit: None,
            integrality_tol: 1e-6,
            feasibility_tol: 1e-6,
            log: false,
        }
    }
}

impl SolveOptions {
    pub fn with_gap(mut self, gap: f64) -> Self {
        self.relative_gap = gap;
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }
}
