//! Bounded dual simplex on a dense tableau.
//!
//! Every variable (structural and row logical) carries finite bounds, so the
//! all-logical starting basis is dual feasible once each nonbasic structural
//! sits at the bound favoured by its cost. The same property lets branch and
//! bound change bounds and re-optimize from the current basis.
//!
//! The problem is `min cᵀx  s.t.  A x − r = 0,  l ≤ (x, r) ≤ u`, where `r` are
//! row logicals whose bounds encode the constraint senses. Rows are scaled to
//! unit infinity norm.

use std::time::Instant;

use crate::model::{Direction, MilpModel, Sense};

/// Stand-in for infinite bounds of structural variables.
pub(crate) const BIG: f64 = 1e9;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const REFACTOR_INTERVAL: usize = 1500;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    /// Row whose logical could not be brought within its bounds.
    Infeasible(usize),
    /// The dual objective already exceeds the cutoff.
    Cutoff,
    IterationLimit,
    TimeLimit,
}

#[derive(Clone)]
pub(crate) struct DualSimplex {
    n: usize,
    m: usize,
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
    row_scale: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    tab: Vec<f64>,
    d: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    since_refactor: usize,
    pub iterations: usize,
    row_nz: Vec<usize>,
}

impl DualSimplex {
    /// Builds the LP relaxation of `model` in minimization form.
    pub(crate) fn from_model(model: &MilpModel) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let cols = n + m;
        let sign = match model.direction() {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let mut cost = vec![0.0; cols];
        for &(v, c) in &model.objective().terms {
            cost[v.index()] += sign * c;
        }
        let mut lower = vec![0.0; cols];
        let mut upper = vec![0.0; cols];
        for (j, v) in model.vars().iter().enumerate() {
            lower[j] = v.lower.max(-BIG);
            upper[j] = v.upper.min(BIG);
        }
        let mut rows = Vec::with_capacity(m);
        let mut row_scale = Vec::with_capacity(m);
        for (i, c) in model.constraints().iter().enumerate() {
            let amax = c.expr.terms.iter().fold(0.0f64, |a, t| a.max(t.1.abs()));
            let s = if amax > 0.0 { 1.0 / amax } else { 1.0 };
            let row: Vec<(usize, f64)> = c.expr.terms.iter().map(|&(v, a)| (v.index(), a * s)).collect();
            let (mut act_lo, mut act_hi) = (0.0, 0.0);
            for &(j, a) in &row {
                if a > 0.0 {
                    act_lo += a * lower[j];
                    act_hi += a * upper[j];
                } else {
                    act_lo += a * upper[j];
                    act_hi += a * lower[j];
                }
            }
            let rhs = c.rhs * s;
            let (lo, hi) = match c.sense {
                Sense::Le => (act_lo.min(rhs), rhs),
                Sense::Ge => (rhs, act_hi.max(rhs)),
                Sense::Eq => (rhs, rhs),
            };
            lower[n + i] = lo;
            upper[n + i] = hi;
            rows.push(row);
            row_scale.push(s);
        }
        let mut lp = DualSimplex {
            n,
            m,
            cols,
            rows,
            row_scale,
            cost,
            lower,
            upper,
            tab: vec![0.0; m * cols],
            d: vec![0.0; cols],
            x: vec![0.0; cols],
            basis: (n..cols).collect(),
            state: vec![State::Lower; cols],
            since_refactor: 0,
            iterations: 0,
            row_nz: Vec::new(),
        };
        for i in 0..m {
            lp.state[n + i] = State::Basic(i);
            let base = i * cols;
            for &(j, a) in &lp.rows[i] {
                lp.tab[base + j] -= a;
            }
            lp.tab[base + n + i] = 1.0;
        }
        lp.d.copy_from_slice(&lp.cost);
        for j in 0..n {
            lp.place_nonbasic(j);
        }
        lp.recompute_basics();
        lp
    }

    pub(crate) fn num_structural(&self) -> usize {
        self.n
    }

    pub(crate) fn structural_values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub(crate) fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub(crate) fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    /// Structural variables whose value sits on an artificial infinite bound.
    pub(crate) fn touches_artificial_bound(&self) -> bool {
        (0..self.n).any(|j| self.x[j].abs() >= BIG * (1.0 - 1e-9))
    }

    /// Original row index and dual-ray multipliers proving infeasibility of `row`.
    pub(crate) fn infeasibility_ray(&self, row: usize) -> Vec<(usize, f64)> {
        let base = row * self.cols;
        (0..self.m)
            .filter_map(|i| {
                let v = self.tab[base + self.n + i];
                (v.abs() > 1e-9).then_some((i, v * self.row_scale[i]))
            })
            .collect()
    }

    pub(crate) fn basic_var_of_row(&self, row: usize) -> usize {
        self.basis[row]
    }

    /// Changes the bounds of structural variable `j`, keeping the basis dual feasible.
    pub(crate) fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = lo;
        self.upper[j] = hi;
        if let State::Basic(_) = self.state[j] {
            return;
        }
        let old = self.x[j];
        self.place_nonbasic(j);
        let delta = self.x[j] - old;
        if delta != 0.0 {
            self.shift_basics(j, delta);
        }
    }

    fn place_nonbasic(&mut self, j: usize) {
        let st = if self.d[j] > DUAL_TOL {
            State::Lower
        } else if self.d[j] < -DUAL_TOL || self.state[j] == State::Upper {
            State::Upper
        } else {
            State::Lower
        };
        self.state[j] = st;
        self.x[j] = if st == State::Lower { self.lower[j] } else { self.upper[j] };
    }

    fn shift_basics(&mut self, j: usize, delta: f64) {
        for i in 0..self.m {
            let a = self.tab[i * self.cols + j];
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= a * delta;
            }
        }
    }

    fn recompute_basics(&mut self) {
        for i in 0..self.m {
            let base = i * self.cols;
            let mut s = 0.0;
            for j in 0..self.cols {
                if !matches!(self.state[j], State::Basic(_)) {
                    let a = self.tab[base + j];
                    if a != 0.0 {
                        s -= a * self.x[j];
                    }
                }
            }
            let b = self.basis[i];
            self.x[b] = s;
        }
    }

    /// Rebuilds the tableau, reduced costs and basic values from the original rows.
    pub(crate) fn refactor(&mut self) -> bool {
        let m = self.m;
        let n = self.n;
        // column-major dense basis matrix
        let mut bmat = vec![0.0; m * m];
        for (k, &var) in self.basis.iter().enumerate() {
            if var < n {
                for (i, row) in self.rows.iter().enumerate() {
                    for &(j, a) in row {
                        if j == var {
                            bmat[i * m + k] += a;
                        }
                    }
                }
            } else {
                bmat[(var - n) * m + k] = -1.0;
            }
        }
        let Some(binv) = invert(&mut bmat, m) else {
            return false;
        };
        self.tab.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..m {
            let base = k * self.cols;
            for i in 0..m {
                let b = binv[k * m + i];
                if b == 0.0 {
                    continue;
                }
                for &(j, a) in &self.rows[i] {
                    self.tab[base + j] += b * a;
                }
                self.tab[base + n + i] = -b;
            }
            for v in &mut self.tab[base..base + self.cols] {
                if v.abs() < DROP_TOL {
                    *v = 0.0;
                }
            }
        }
        self.d.copy_from_slice(&self.cost);
        for k in 0..m {
            let cb = self.cost[self.basis[k]];
            if cb == 0.0 {
                continue;
            }
            let base = k * self.cols;
            for j in 0..self.cols {
                self.d[j] -= cb * self.tab[base + j];
            }
        }
        for (k, &var) in self.basis.iter().enumerate() {
            self.d[var] = 0.0;
            self.state[var] = State::Basic(k);
        }
        for j in 0..self.cols {
            if !matches!(self.state[j], State::Basic(_)) {
                self.x[j] = if self.state[j] == State::Lower { self.lower[j] } else { self.upper[j] };
            }
        }
        self.recompute_basics();
        self.since_refactor = 0;
        true
    }

    fn infeasibility(&self, var: usize) -> f64 {
        let v = self.x[var];
        let lo = self.lower[var];
        let hi = self.upper[var];
        let tol = PRIMAL_TOL * (1.0 + lo.abs().max(hi.abs()).min(1e6));
        if v < lo - tol {
            lo - v
        } else if v > hi + tol {
            v - hi
        } else {
            0.0
        }
    }

    fn choose_leaving(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let inf = self.infeasibility(self.basis[i]);
            if inf > 0.0 && best.is_none_or(|b| inf > b.1) {
                best = Some((i, inf));
            }
        }
        best.map(|b| b.0)
    }

    fn choose_entering(&mut self, r: usize, increase: bool) -> Option<usize> {
        let base = r * self.cols;
        self.row_nz.clear();
        for j in 0..self.cols {
            if self.tab[base + j] != 0.0 {
                self.row_nz.push(j);
            }
        }
        let mut theta = f64::INFINITY;
        for &j in &self.row_nz {
            let alpha = self.tab[base + j];
            if let Some(ratio) = self.candidate_ratio(j, alpha, increase, DUAL_TOL) {
                theta = theta.min(ratio);
            }
        }
        if !theta.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.row_nz {
            let alpha = self.tab[base + j];
            if let Some(ratio) = self.candidate_ratio(j, alpha, increase, 0.0) {
                if ratio <= theta && best.is_none_or(|b| alpha.abs() > b.1) {
                    best = Some((j, alpha.abs()));
                }
            }
        }
        best.map(|b| b.0)
    }

    fn candidate_ratio(&self, j: usize, alpha: f64, increase: bool, slack: f64) -> Option<f64> {
        if alpha.abs() <= PIVOT_TOL || self.upper[j] - self.lower[j] <= 0.0 {
            return None;
        }
        // leaving value changes by −alpha·Δx_j
        let ok = match (self.state[j], increase) {
            (State::Lower, true) => alpha < 0.0,
            (State::Upper, true) => alpha > 0.0,
            (State::Lower, false) => alpha > 0.0,
            (State::Upper, false) => alpha < 0.0,
            (State::Basic(_), _) => false,
        };
        if !ok {
            return None;
        }
        let dj = match self.state[j] {
            State::Lower => self.d[j].max(0.0),
            _ => (-self.d[j]).max(0.0),
        };
        Some((dj + slack) / alpha.abs())
    }

    fn pivot(&mut self, r: usize, q: usize, target: f64, leaving_to_lower: bool) {
        let cols = self.cols;
        let rbase = r * cols;
        let alpha = self.tab[rbase + q];
        let leaving = self.basis[r];
        let step = (self.x[leaving] - target) / alpha;
        self.x[q] += step;
        for i in 0..self.m {
            let a = self.tab[i * cols + q];
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= a * step;
            }
        }
        self.x[leaving] = target;

        let inv = 1.0 / alpha;
        for &j in &self.row_nz {
            self.tab[rbase + j] *= inv;
        }
        let pivot_row: Vec<(usize, f64)> = self.row_nz.iter().map(|&j| (j, self.tab[rbase + j])).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let base = i * cols;
            let f = self.tab[base + q];
            if f == 0.0 {
                continue;
            }
            for &(j, a) in &pivot_row {
                let v = self.tab[base + j] - f * a;
                self.tab[base + j] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            self.tab[base + q] = 0.0;
        }
        self.tab[rbase + q] = 1.0;
        let dq = self.d[q];
        if dq != 0.0 {
            for &(j, a) in &pivot_row {
                self.d[j] -= dq * a;
            }
        }
        self.d[q] = 0.0;

        self.basis[r] = q;
        self.state[q] = State::Basic(r);
        self.state[leaving] = if leaving_to_lower { State::Lower } else { State::Upper };
        self.iterations += 1;
        self.since_refactor += 1;
    }

    /// Runs dual simplex iterations until optimality, infeasibility, the
    /// objective cutoff, the iteration limit or the deadline.
    pub(crate) fn solve(&mut self, cutoff: f64, max_iter: usize, deadline: Option<Instant>) -> LpStatus {
        let start = self.iterations;
        loop {
            if (self.iterations - start) % 64 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                return LpStatus::TimeLimit;
            }
            if self.since_refactor >= REFACTOR_INTERVAL {
                self.refactor();
            }
            let Some(r) = self.choose_leaving() else {
                return LpStatus::Optimal;
            };
            if self.objective() > cutoff {
                return LpStatus::Cutoff;
            }
            if self.iterations - start >= max_iter {
                return LpStatus::IterationLimit;
            }
            let leaving = self.basis[r];
            let increase = self.x[leaving] < self.lower[leaving];
            let target = if increase { self.lower[leaving] } else { self.upper[leaving] };
            match self.choose_entering(r, increase) {
                Some(q) => self.pivot(r, q, target, increase),
                None => {
                    // confirm on a fresh factorization before declaring infeasibility
                    if self.since_refactor > 0 && self.refactor() {
                        continue;
                    }
                    return LpStatus::Infeasible(r);
                }
            }
        }
    }

    /// Maximum violation of `A x = r` in scaled units.
    #[cfg(test)]
    pub(crate) fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let ax: f64 = row.iter().map(|&(j, a)| a * self.x[j]).sum();
            worst = worst.max((ax - self.x[self.n + i]).abs());
        }
        worst
    }
}

/// Dense Gauss–Jordan inverse of a row-major `m × m` matrix; `None` if singular.
fn invert(a: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let mut piv = col;
        let mut best = a[col * m + col].abs();
        for r in col + 1..m {
            let v = a[r * m + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(col * m + k, piv * m + k);
                inv.swap(col * m + k, piv * m + k);
            }
        }
        let p = 1.0 / a[col * m + col];
        let nz_a: Vec<usize> = (0..m).filter(|&k| a[col * m + k] != 0.0).collect();
        let nz_i: Vec<usize> = (0..m).filter(|&k| inv[col * m + k] != 0.0).collect();
        for &k in &nz_a {
            a[col * m + k] *= p;
        }
        for &k in &nz_i {
            inv[col * m + k] *= p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f == 0.0 {
                continue;
            }
            for &k in &nz_a {
                a[r * m + k] -= f * a[col * m + k];
            }
            for &k in &nz_i {
                inv[r * m + k] -= f * inv[col * m + k];
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, MilpModel, Sense};

    fn solve_lp(model: &MilpModel) -> (LpStatus, DualSimplex) {
        let mut lp = DualSimplex::from_model(model);
        let st = lp.solve(f64::INFINITY, 10_000, None);
        (st, lp)
    }

    #[test]
    fn small_maximization() {
        // max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, x <= 3
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 3.0);
        let y = m.add_continuous("y", 0.0, f64::INFINITY);
        m.add_le("a", LinExpr::from(x) + y, 4.0);
        m.add_le("b", LinExpr::from(x) + LinExpr::term(y, 3.0), 6.0);
        m.set_objective(Direction::Maximize, LinExpr::term(x, 3.0) + LinExpr::term(y, 2.0));
        let (st, lp) = solve_lp(&m);
        assert_eq!(st, LpStatus::Optimal);
        let v = lp.structural_values();
        assert!((v[0] - 3.0).abs() < 1e-9 && (v[1] - 1.0).abs() < 1e-9);
        assert!((lp.objective() + 11.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y + 3z s.t. x + y + z = 10, y - z >= 2, x <= 4
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 4.0);
        let y = m.add_continuous("y", 0.0, 100.0);
        let z = m.add_continuous("z", 0.0, 100.0);
        m.add_eq("sum", LinExpr::sum([x, y, z]), 10.0);
        m.add_constraint("d", LinExpr::from(y) - z, Sense::Ge, 2.0);
        m.set_objective(
            Direction::Minimize,
            LinExpr::from(x) + LinExpr::term(y, 2.0) + LinExpr::term(z, 3.0),
        );
        let (st, lp) = solve_lp(&m);
        assert_eq!(st, LpStatus::Optimal);
        assert!((lp.objective() - 16.0).abs() < 1e-9, "{}", lp.objective());
        assert!(lp.residual() < 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 1.0);
        let y = m.add_continuous("y", 0.0, 1.0);
        m.add_ge("big", LinExpr::from(x) + y, 3.0);
        m.set_objective(Direction::Minimize, LinExpr::from(x));
        let (st, lp) = solve_lp(&m);
        let LpStatus::Infeasible(r) = st else {
            panic!("expected infeasible, got {st:?}")
        };
        let ray = lp.infeasibility_ray(r);
        assert_eq!(ray.len(), 1);
        assert_eq!(ray[0].0, 0);
    }

    #[test]
    fn warm_start_after_bound_change() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 10.0);
        let y = m.add_continuous("y", 0.0, 10.0);
        m.add_le("cap", LinExpr::from(x) + y, 8.0);
        m.set_objective(Direction::Maximize, LinExpr::term(x, 2.0) + y);
        let mut lp = DualSimplex::from_model(&m);
        assert_eq!(lp.solve(f64::INFINITY, 100, None), LpStatus::Optimal);
        assert!((lp.objective() + 16.0).abs() < 1e-9);
        lp.set_bounds(0, 0.0, 3.0);
        assert_eq!(lp.solve(f64::INFINITY, 100, None), LpStatus::Optimal);
        assert!((lp.objective() + 11.0).abs() < 1e-9);
        lp.set_bounds(0, 0.0, 10.0);
        assert_eq!(lp.solve(f64::INFINITY, 100, None), LpStatus::Optimal);
        assert!((lp.objective() + 16.0).abs() < 1e-9);
    }

    #[test]
    fn refactor_preserves_solution() {
        let mut m = MilpModel::new();
        let v: Vec<_> = (0..6).map(|i| m.add_continuous(format!("v{i}"), 0.0, 5.0)).collect();
        for i in 0..5 {
            m.add_le(format!("c{i}"), LinExpr::from(v[i]) + LinExpr::term(v[i + 1], 2.0), 6.0);
        }
        m.set_objective(Direction::Maximize, LinExpr::sum(v.iter().copied()));
        let mut lp = DualSimplex::from_model(&m);
        assert_eq!(lp.solve(f64::INFINITY, 1000, None), LpStatus::Optimal);
        let before = lp.objective();
        assert!(lp.refactor());
        assert!((lp.objective() - before).abs() < 1e-9);
        assert_eq!(lp.solve(f64::INFINITY, 1000, None), LpStatus::Optimal);
        assert!((lp.objective() - before).abs() < 1e-9);
        assert!(lp.residual() < 1e-9);
    }
}
