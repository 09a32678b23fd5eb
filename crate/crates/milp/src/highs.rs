//! Adapter for the HiGHS solver.

use std::time::Instant;

use highs::{HighsModelStatus, Model, RowProblem, Sense as HighsSense};

use crate::bnb::MilpBackend;
use crate::error::SolveError;
use crate::model::{Direction, MilpModel, Sense};
use crate::solution::{Solution, SolveOptions, SolveStatus};

#[derive(Clone, Debug, Default)]
pub struct HighsBackend {
    /// Worker threads; `None` leaves the HiGHS default.
    pub threads: Option<i32>,
}

impl MilpBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<Solution, SolveError> {
        model.validate()?;
        let start = Instant::now();
        let mut pb = RowProblem::new();
        let mut cost = vec![0.0; model.num_vars()];
        for &(v, c) in &model.objective().terms {
            cost[v.index()] += c;
        }
        let cols: Vec<_> = model
            .vars()
            .iter()
            .zip(&cost)
            .map(|(v, &c)| pb.add_column_with_integrality(c, v.lower..=v.upper, v.kind.is_integral()))
            .collect();
        for c in model.constraints() {
            let row: Vec<_> = c.expr.terms.iter().map(|&(v, a)| (cols[v.index()], a)).collect();
            match c.sense {
                Sense::Le => pb.add_row(..=c.rhs, row),
                Sense::Ge => pb.add_row(c.rhs.., row),
                Sense::Eq => pb.add_row(c.rhs..=c.rhs, row),
            }
        }
        let sense = match model.direction() {
            Direction::Minimize => HighsSense::Minimise,
            Direction::Maximize => HighsSense::Maximise,
        };
        let mut hm = Model::try_new(pb).map_err(|e| SolveError::Backend(format!("{e:?}")))?;
        hm.set_sense(sense);
        if !opts.log {
            hm.make_quiet();
        }
        hm.set_option("mip_rel_gap", opts.relative_gap);
        hm.set_option("mip_feasibility_tolerance", opts.feasibility_tol);
        hm.set_option("random_seed", 0);
        if let Some(t) = opts.time_limit {
            hm.set_option("time_limit", t.as_secs_f64());
        }
        if let Some(n) = opts.node_limit {
            hm.set_option("mip_max_nodes", i32::try_from(n).unwrap_or(i32::MAX));
        }
        if let Some(t) = self.threads {
            hm.set_option("threads", t);
        }
        let solved = hm.try_solve().map_err(|e| SolveError::Backend(format!("{e:?}")))?;
        let status = solved.status();
        let has_point = matches!(
            solved.primal_solution_status(),
            highs::HighsSolutionStatus::Feasible
        );
        let build = |values: Vec<f64>, gap: f64, st: SolveStatus| {
            let mut values = values;
            for (x, v) in values.iter_mut().zip(model.vars()) {
                if v.kind.is_integral() {
                    *x = x.round();
                }
            }
            let objective = model.evaluate_objective(&values);
            let gap = if gap.is_finite() { gap } else { 0.0 };
            let slack = gap * objective.abs().max(1.0);
            let best_bound = match model.direction() {
                Direction::Minimize => objective - slack,
                Direction::Maximize => objective + slack,
            };
            Solution {
                values,
                objective,
                best_bound,
                status: st,
                nodes: solved.int_info_value(c"mip_node_count").map(|n| n as usize).unwrap_or(0),
                lp_iterations: solved.simplex_iteration_count().max(0) as usize,
                elapsed: start.elapsed(),
            }
        };
        match status {
            HighsModelStatus::Optimal => {
                let gap = if model.num_integer_vars() > 0 { solved.mip_gap() } else { 0.0 };
                let st = if gap <= 1e-9 { SolveStatus::Optimal } else { SolveStatus::GapReached };
                Ok(build(solved.get_solution().columns().to_vec(), gap, st))
            }
            HighsModelStatus::Infeasible => Err(SolveError::Infeasible { hints: Vec::new() }),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => Err(SolveError::Unbounded),
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit => {
                let incumbent = has_point.then(|| {
                    Box::new(build(solved.get_solution().columns().to_vec(), solved.mip_gap(), SolveStatus::GapReached))
                });
                Err(SolveError::Timeout { incumbent })
            }
            other => Err(SolveError::Backend(format!("HiGHS returned {other:?}"))),
        }
    }
}
