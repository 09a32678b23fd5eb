//! Solver-independent model representation.
//!
//! A [`MilpModel`] is a flat list of bounded variables, linear constraints
//! and one linear objective. Backends consume it read-only.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::ModelError;

/// Handle to a variable inside one [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a constraint inside one [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(pub(crate) usize);

impl ConstraintId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Branching priority; larger values are branched on first.
    pub priority: i32,
}

/// Sparse linear expression `Σ coef·var + constant`.
///
/// Duplicate variables are allowed while building and merged by
/// [`LinExpr::normalized`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn term(var: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(var, coef)],
            constant: 0.0,
        }
    }

    pub fn sum<I: IntoIterator<Item = VarId>>(vars: I) -> Self {
        Self {
            terms: vars.into_iter().map(|v| (v, 1.0)).collect(),
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, var: VarId, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn with_term(mut self, var: VarId, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    /// Evaluates the expression at a dense assignment indexed by [`VarId`].
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(v, c)| c * values[v.0])
            .sum::<f64>()
            + self.constant
    }

    /// Merges duplicate variables, drops zero coefficients and sorts by index.
    pub fn normalized(&self) -> Self {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        Self {
            terms: merged,
            constant: self.constant,
        }
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl AddAssign<LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl SubAssign<LinExpr> for LinExpr {
    fn sub_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms.into_iter().map(|(v, c)| (v, -c)));
        self.constant -= rhs.constant;
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        self += rhs.into();
        self
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: T) -> LinExpr {
        self -= rhs.into();
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// `expr (sense) rhs`, with any constant of the expression folded into `rhs`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    /// Signed violation at `values`; zero or negative means satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.eval(values);
        match self.sense {
            Sense::Le => lhs - self.rhs,
            Sense::Ge => self.rhs - lhs,
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct MilpModel {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
    direction: Direction,
}

impl Default for MilpModel {
    fn default() -> Self {
        Self::new()
    }
}

impl MilpModel {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: LinExpr::new(),
            direction: Direction::Minimize,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
            priority: 0,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Integer, lower, upper)
    }

    pub fn set_priority(&mut self, var: VarId, priority: i32) {
        self.vars[var.0].priority = priority;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.vars[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    /// Copy with every integer variable fixed at its rounded value in `values`.
    pub fn with_integers_fixed(&self, values: &[f64]) -> MilpModel {
        let mut fixed = self.clone();
        for (v, &x) in fixed.vars.iter_mut().zip(values) {
            if v.kind.is_integral() {
                v.lower = x.round();
                v.upper = x.round();
            }
        }
        fixed
    }

    /// Adds `expr (sense) rhs`. The constant part of `expr` moves to the right-hand side.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: impl Into<LinExpr>,
        sense: Sense,
        rhs: f64,
    ) -> ConstraintId {
        let expr = expr.into().normalized();
        let rhs = rhs - expr.constant;
        self.constraints.push(Constraint {
            name: name.into(),
            expr: LinExpr {
                terms: expr.terms,
                constant: 0.0,
            },
            sense,
            rhs,
        });
        ConstraintId(self.constraints.len() - 1)
    }

    pub fn add_le(&mut self, name: impl Into<String>, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) -> ConstraintId {
        let e = lhs.into() - rhs.into();
        self.add_constraint(name, e, Sense::Le, 0.0)
    }

    pub fn add_ge(&mut self, name: impl Into<String>, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) -> ConstraintId {
        let e = lhs.into() - rhs.into();
        self.add_constraint(name, e, Sense::Ge, 0.0)
    }

    pub fn add_eq(&mut self, name: impl Into<String>, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) -> ConstraintId {
        let e = lhs.into() - rhs.into();
        self.add_constraint(name, e, Sense::Eq, 0.0)
    }

    pub fn set_objective(&mut self, direction: Direction, expr: impl Into<LinExpr>) {
        self.direction = direction;
        self.objective = expr.into().normalized();
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, id: ConstraintId) -> &Constraint {
        &self.constraints[id.0]
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integer_vars(&self) -> usize {
        self.vars.iter().filter(|v| v.kind.is_integral()).count()
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn find_constraint(&self, name: &str) -> Option<ConstraintId> {
        self.constraints.iter().position(|c| c.name == name).map(ConstraintId)
    }

    /// Checks that every reference is in range, bounds are ordered and all
    /// coefficients are finite.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.vars.len();
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(ModelError::InvalidBounds {
                    var: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
        }
        let check_expr = |owner: &str, e: &LinExpr| -> Result<(), ModelError> {
            for &(var, c) in &e.terms {
                if var.0 >= n {
                    return Err(ModelError::UnknownVariable {
                        owner: owner.to_string(),
                        index: var.0,
                    });
                }
                if !c.is_finite() {
                    return Err(ModelError::NonFinite {
                        owner: owner.to_string(),
                    });
                }
            }
            if !e.constant.is_finite() {
                return Err(ModelError::NonFinite {
                    owner: owner.to_string(),
                });
            }
            Ok(())
        };
        for c in &self.constraints {
            check_expr(&c.name, &c.expr)?;
            if !c.rhs.is_finite() {
                return Err(ModelError::NonFinite { owner: c.name.clone() });
            }
        }
        check_expr("objective", &self.objective)?;
        Ok(())
    }

    pub fn evaluate_objective(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }

    /// Lists every violated bound, integrality requirement or constraint at `values`.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (v, &x) in self.vars.iter().zip(values) {
            if x < v.lower - tol || x > v.upper + tol {
                out.push(format!("bound {}: {} not in [{}, {}]", v.name, x, v.lower, v.upper));
            }
            if v.kind.is_integral() && (x - x.round()).abs() > tol {
                out.push(format!("integrality {}: {}", v.name, x));
            }
        }
        for c in &self.constraints {
            let scale = 1.0 + c.rhs.abs();
            if c.violation(values) > tol * scale {
                out.push(format!(
                    "constraint {}: lhs {} {} {}",
                    c.name,
                    c.expr.eval(values),
                    c.sense,
                    c.rhs
                ));
            }
        }
        out
    }
}
