//! Best-first branch and bound with depth-first plunging over the dual simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::error::SolveError;
use crate::model::{Direction, MilpModel};
use crate::simplex::{DualSimplex, LpStatus};
use crate::solution::{Solution, SolveOptions, SolveStatus};

/// A MILP solver.
pub trait MilpBackend {
    fn name(&self) -> &str;
    fn solve(&self, model: &MilpModel, options: &SolveOptions) -> Result<Solution, SolveError>;
}

/// The bundled pure-Rust solver.
#[derive(Clone, Debug)]
pub struct BranchAndBound {
    /// Simplex iterations allowed per node before giving up.
    pub max_lp_iterations: usize,
}

impl Default for BranchAndBound {
    fn default() -> Self {
        Self { max_lp_iterations: 200_000 }
    }
}

#[derive(Clone, Debug)]
struct Node {
    /// Lower bound (minimization form) inherited from the parent LP.
    bound: f64,
    depth: usize,
    changes: Vec<(usize, f64, f64)>,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    opts: &'a SolveOptions,
    lp: DualSimplex,
    root_bounds: Vec<(f64, f64)>,
    applied: Vec<usize>,
    integral: Vec<usize>,
    incumbent: Option<(f64, Vec<f64>)>,
    nodes: usize,
    seq: usize,
    max_iter: usize,
    deadline: Option<Instant>,
}

enum NodeOutcome {
    Pruned,
    Branch { var: usize, value: f64, bound: f64 },
    OutOfTime,
}

impl<'a> Search<'a> {
    fn apply(&mut self, changes: &[(usize, f64, f64)]) {
        for j in std::mem::take(&mut self.applied) {
            let (lo, hi) = self.root_bounds[j];
            if self.lp.bounds(j) != (lo, hi) {
                self.lp.set_bounds(j, lo, hi);
            }
        }
        for &(j, lo, hi) in changes {
            self.lp.set_bounds(j, lo, hi);
            self.applied.push(j);
        }
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.opts.relative_gap * obj.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    fn fractional_var(&self, values: &[f64]) -> Option<usize> {
        let tol = self.opts.integrality_tol;
        let mut best: Option<(usize, i32, f64)> = None;
        for &j in &self.integral {
            let v = values[j];
            let frac = (v - v.round()).abs();
            if frac <= tol {
                continue;
            }
            let pri = self.model.vars()[j].priority;
            let better = match best {
                None => true,
                Some((_, bp, bf)) => pri > bp || (pri == bp && frac > bf + 1e-12),
            };
            if better {
                best = Some((j, pri, frac));
            }
        }
        best.map(|b| b.0)
    }

    fn try_incumbent(&mut self, values: &[f64]) -> bool {
        let mut vals = values.to_vec();
        for &j in &self.integral {
            vals[j] = vals[j].round();
        }
        if !self.model.violations(&vals, self.opts.feasibility_tol).is_empty() {
            return false;
        }
        let obj = self.min_form(self.model.evaluate_objective(&vals));
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best - 1e-12) {
            if self.opts.log {
                eprintln!("bnb: node {} incumbent {:.6}", self.nodes, obj);
            }
            self.incumbent = Some((obj, vals));
            return true;
        }
        false
    }

    fn min_form(&self, obj: f64) -> f64 {
        match self.model.direction() {
            Direction::Minimize => obj,
            Direction::Maximize => -obj,
        }
    }

    fn lp_bound(&self) -> f64 {
        self.lp.objective() + self.min_form(self.model.objective().constant)
    }

    fn evaluate(&mut self, changes: &[(usize, f64, f64)]) -> Result<NodeOutcome, SolveError> {
        self.nodes += 1;
        self.apply(changes);
        let cutoff = self.cutoff() - self.min_form(self.model.objective().constant);
        match self.lp.solve(cutoff, self.max_iter, self.deadline) {
            LpStatus::Optimal => {}
            LpStatus::Infeasible(_) | LpStatus::Cutoff => return Ok(NodeOutcome::Pruned),
            LpStatus::TimeLimit => return Ok(NodeOutcome::OutOfTime),
            LpStatus::IterationLimit => {
                return Err(SolveError::Numerical("simplex iteration limit reached".into()));
            }
        }
        let bound = self.lp_bound();
        if bound > self.cutoff() {
            return Ok(NodeOutcome::Pruned);
        }
        let values = self.lp.structural_values().to_vec();
        match self.fractional_var(&values) {
            None => {
                self.try_incumbent(&values);
                Ok(NodeOutcome::Pruned)
            }
            Some(var) => Ok(NodeOutcome::Branch { var, value: values[var], bound }),
        }
    }

    /// Fixes integral variables to their rounded LP values and re-solves.
    fn rounding_heuristic(&mut self, values: &[f64]) {
        let saved = self.lp.clone();
        let mut changes = Vec::with_capacity(self.integral.len());
        for &j in &self.integral {
            let (lo, hi) = self.root_bounds[j];
            let r = values[j].round().clamp(lo, hi);
            changes.push((j, r, r));
        }
        self.apply(&changes);
        let cutoff = self.cutoff() - self.min_form(self.model.objective().constant);
        if self.lp.solve(cutoff, self.max_iter, self.deadline) == LpStatus::Optimal {
            let v = self.lp.structural_values().to_vec();
            self.try_incumbent(&v);
        }
        self.lp = saved;
        self.applied.clear();
    }

    fn children(&mut self, parent: &[(usize, f64, f64)], var: usize, value: f64, bound: f64, depth: usize) -> (Node, Node) {
        let (lo, hi) = self.current_bounds(parent, var);
        let down_hi = value.floor();
        let up_lo = value.ceil();
        let mut down = parent.to_vec();
        down.retain(|c| c.0 != var);
        let mut up = down.clone();
        down.push((var, lo, down_hi));
        up.push((var, up_lo, hi));
        self.seq += 2;
        let dn = Node { bound, depth: depth + 1, changes: down, seq: self.seq - 1 };
        let un = Node { bound, depth: depth + 1, changes: up, seq: self.seq };
        // dive towards the nearer integer
        if value - value.floor() >= 0.5 {
            (un, dn)
        } else {
            (dn, un)
        }
    }

    fn current_bounds(&self, changes: &[(usize, f64, f64)], var: usize) -> (f64, f64) {
        changes
            .iter()
            .rev()
            .find(|c| c.0 == var)
            .map(|c| (c.1, c.2))
            .unwrap_or(self.root_bounds[var])
    }
}

impl MilpBackend for BranchAndBound {
    fn name(&self) -> &str {
        "bnb"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<Solution, SolveError> {
        model.validate()?;
        let start = Instant::now();
        let lp = DualSimplex::from_model(model);
        let root_bounds = (0..lp.num_structural()).map(|j| lp.bounds(j)).collect();
        let integral = model
            .vars()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind.is_integral())
            .map(|(j, _)| j)
            .collect();
        let mut s = Search {
            model,
            opts,
            lp,
            root_bounds,
            applied: Vec::new(),
            integral,
            incumbent: None,
            nodes: 0,
            seq: 0,
            max_iter: self.max_lp_iterations,
            deadline: opts.time_limit.map(|t| start + t),
        };

        // root
        s.nodes += 1;
        match s.lp.solve(f64::INFINITY, s.max_iter, s.deadline) {
            LpStatus::Optimal => {}
            LpStatus::Infeasible(row) => {
                let mut hints: Vec<String> = s
                    .lp
                    .infeasibility_ray(row)
                    .into_iter()
                    .map(|(i, _)| model.constraints()[i].name.clone())
                    .collect();
                let basic = s.lp.basic_var_of_row(row);
                if basic >= model.num_vars() {
                    let name = &model.constraints()[basic - model.num_vars()].name;
                    if !hints.contains(name) {
                        hints.insert(0, name.clone());
                    }
                }
                return Err(SolveError::Infeasible { hints });
            }
            LpStatus::Cutoff => unreachable!("no cutoff at the root"),
            LpStatus::TimeLimit => return Err(SolveError::Timeout { incumbent: None }),
            LpStatus::IterationLimit => {
                return Err(SolveError::Numerical("simplex iteration limit reached at the root".into()));
            }
        }
        if s.lp.touches_artificial_bound() {
            return Err(SolveError::Unbounded);
        }
        let root_values = s.lp.structural_values().to_vec();
        let root_bound = s.lp_bound();
        let mut heap = BinaryHeap::new();
        match s.fractional_var(&root_values) {
            None => {
                s.try_incumbent(&root_values);
            }
            Some(var) => {
                s.rounding_heuristic(&root_values);
                let (a, b) = s.children(&[], var, root_values[var], root_bound, 0);
                heap.push(b);
                heap.push(a);
            }
        }

        let mut limit_hit = false;
        let mut dive: Option<Node> = None;
        loop {
            let node = match dive.take() {
                Some(n) => n,
                None => match heap.pop() {
                    Some(n) => n,
                    None => break,
                },
            };
            if node.bound > s.cutoff() {
                continue;
            }
            if opts.time_limit.is_some_and(|t| start.elapsed() >= t) || opts.node_limit.is_some_and(|n| s.nodes >= n) {
                heap.push(node);
                limit_hit = true;
                break;
            }
            match s.evaluate(&node.changes)? {
                NodeOutcome::Branch { var, value, bound } => {
                    let (near, far) = s.children(&node.changes, var, value, bound, node.depth);
                    heap.push(far);
                    dive = Some(near);
                }
                NodeOutcome::Pruned => {}
                NodeOutcome::OutOfTime => {
                    heap.push(node);
                    limit_hit = true;
                    break;
                }
            }
            if opts.log && s.nodes % 1000 == 0 {
                eprintln!("bnb: {} nodes, {} open, {:?}", s.nodes, heap.len(), start.elapsed());
            }
        }

        let open_bound = heap
            .iter()
            .map(|n| n.bound)
            .chain(dive.iter().map(|n| n.bound))
            .fold(f64::INFINITY, f64::min);
        let sign = match model.direction() {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let Some((obj, values)) = s.incumbent.take() else {
            if limit_hit {
                return Err(SolveError::Timeout { incumbent: None });
            }
            return Err(SolveError::Infeasible { hints: vec!["no integer-feasible point".into()] });
        };
        let bound = open_bound.min(obj).max(root_bound.min(obj));
        let gap = (obj - bound) / obj.abs().max(1.0);
        let solution = Solution {
            values,
            objective: sign * obj,
            best_bound: sign * bound,
            status: if open_bound.is_infinite() { SolveStatus::Optimal } else { SolveStatus::GapReached },
            nodes: s.nodes,
            lp_iterations: s.lp.iterations,
            elapsed: start.elapsed(),
        };
        if limit_hit && gap > opts.relative_gap {
            return Err(SolveError::Timeout { incumbent: Some(Box::new(solution)) });
        }
        Ok(solution)
    }
}
