//! Exact rational linear programming over systems `A·x >= b`.
//!
//! All variables of a [`LinearSystem`] are free; sign restrictions are
//! ordinary rows. Optimization is a two-phase dictionary simplex with
//! Bland's rule, and projection is Fourier–Motzkin elimination followed by
//! LP-based redundancy removal.

mod fourier;
mod simplex;

use std::collections::HashMap;
use std::fmt;

use num_traits::{Signed, Zero};

use crate::model::{LinearConstraint, LinearExpr, Rational, Relation, Var};

pub use fourier::{fm_project, simplify};
pub use simplex::solve_traced;

/// One row `coeffs · vars >= rhs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub coeffs: Vec<Rational>,
    pub rhs: Rational,
}

impl Row {
    pub fn is_trivial(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }
}

/// Conjunction of rows `A_i · x >= b_i` over an ordered variable list.
#[derive(Debug, Clone, Default)]
pub struct LinearSystem {
    vars: Vec<Var>,
    index: HashMap<Var, usize>,
    rows: Vec<Row>,
}

impl LinearSystem {
    pub fn new(vars: Vec<Var>) -> Self {
        let index = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        Self { vars, index, rows: Vec::new() }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, v: Var) -> Option<usize> {
        self.index.get(&v).copied()
    }

    /// Column of `v`, appending a fresh all-zero column if needed.
    pub fn ensure_var(&mut self, v: Var) -> usize {
        if let Some(&c) = self.index.get(&v) {
            return c;
        }
        let c = self.vars.len();
        self.vars.push(v);
        self.index.insert(v, c);
        for r in &mut self.rows {
            r.coeffs.push(Rational::zero());
        }
        c
    }

    pub fn push_row(&mut self, coeffs: Vec<Rational>, rhs: Rational) {
        assert_eq!(coeffs.len(), self.vars.len(), "row length must match variable count");
        self.rows.push(Row { coeffs, rhs });
    }

    /// Adds the row `expr >= 0`.
    pub fn push_nonneg(&mut self, expr: &LinearExpr) {
        for v in expr.vars() {
            self.ensure_var(v);
        }
        let mut coeffs = vec![Rational::zero(); self.vars.len()];
        for (v, c) in expr.terms() {
            coeffs[self.index[&v]] = c.clone();
        }
        self.rows.push(Row { coeffs, rhs: -expr.constant_term() });
    }

    pub fn push_constraint(&mut self, c: &LinearConstraint) {
        let d = c.difference();
        self.push_nonneg(&d);
        if c.relation == Relation::Eq {
            self.push_nonneg(&d.scale(&-Rational::from_integer(1.into())));
        }
    }

    /// `A_i · x - b_i`, which is `>= 0` on the solution set.
    pub fn row_expr(&self, i: usize) -> LinearExpr {
        let r = &self.rows[i];
        LinearExpr::from_terms(
            self.vars.iter().zip(&r.coeffs).map(|(v, c)| (*v, c.clone())),
            -r.rhs.clone(),
        )
    }

    pub fn row_exprs(&self) -> impl Iterator<Item = LinearExpr> + '_ {
        (0..self.rows.len()).map(|i| self.row_expr(i))
    }

    /// Conjunction with `other`, merging variables by identity.
    pub fn conjoin(&mut self, other: &LinearSystem) {
        for e in other.row_exprs() {
            self.push_nonneg(&e);
        }
        for &v in &other.vars {
            self.ensure_var(v);
        }
    }

    /// Same rows, without the rows whose index is rejected by `keep`.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> LinearSystem {
        let mut out = LinearSystem::new(self.vars.clone());
        out.rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, r)| r.clone())
            .collect();
        out
    }

    /// Whether a point given in this system's variable order satisfies every row.
    pub fn satisfied_by(&self, point: &[Rational]) -> bool {
        self.rows.iter().all(|r| {
            let lhs: Rational = r.coeffs.iter().zip(point).map(|(a, x)| a * x).sum();
            lhs >= r.rhs
        })
    }

    /// Like [`satisfied_by`](Self::satisfied_by) with values looked up by variable.
    pub fn satisfied_by_map(&self, value: &dyn Fn(Var) -> Rational) -> bool {
        let point: Vec<Rational> = self.vars.iter().map(|v| value(*v)).collect();
        self.satisfied_by(&point)
    }

    pub fn display_with<'a>(&'a self, names: &'a dyn Fn(Var) -> String) -> SystemDisplay<'a> {
        SystemDisplay { sys: self, names }
    }
}

pub struct SystemDisplay<'a> {
    sys: &'a LinearSystem,
    names: &'a dyn Fn(Var) -> String,
}

impl fmt::Display for SystemDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.sys.rows {
            let lhs = LinearExpr::from_terms(
                self.sys.vars.iter().zip(&r.coeffs).map(|(v, c)| (*v, c.clone())),
                Rational::zero(),
            );
            writeln!(f, "{} >= {}", lhs.display_with(self.names), r.rhs)?;
        }
        Ok(())
    }
}

/// Rewrites constraints into `A·x >= b`: each equality becomes two rows,
/// each `>=` one row, and each variable in `extra_nonneg` adds `x >= 0`.
/// Columns follow first occurrence.
pub fn normalize(constraints: &[LinearConstraint], extra_nonneg: &[Var]) -> LinearSystem {
    let mut sys = LinearSystem::new(Vec::new());
    for c in constraints {
        sys.push_constraint(c);
    }
    for &v in extra_nonneg {
        sys.push_nonneg(&LinearExpr::var(v));
    }
    sys
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Infeasible,
    /// Objective unbounded in the optimization direction. `point` is feasible
    /// and moving along `ray` keeps it feasible while improving the objective
    /// without limit.
    Unbounded { point: Vec<Rational>, ray: Vec<Rational> },
    Optimal { value: Rational, point: Vec<Rational> },
}

impl LpOutcome {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&[Rational]> {
        match self {
            LpOutcome::Optimal { point, .. } | LpOutcome::Unbounded { point, .. } => Some(point),
            LpOutcome::Infeasible => None,
        }
    }
}

/// Objective coefficients in the column order of `sys`; variables of the
/// objective absent from `sys` are appended as unconstrained columns.
fn objective_columns(sys: &LinearSystem, objective: &LinearExpr) -> (LinearSystem, Vec<Rational>) {
    let mut sys = sys.clone();
    for v in objective.vars() {
        sys.ensure_var(v);
    }
    let mut c = vec![Rational::zero(); sys.vars.len()];
    for (v, k) in objective.terms() {
        c[sys.index[&v]] = k.clone();
    }
    (sys, c)
}

fn trim(outcome: LpOutcome, n: usize) -> LpOutcome {
    match outcome {
        LpOutcome::Optimal { value, mut point } => {
            point.truncate(n);
            LpOutcome::Optimal { value, point }
        }
        LpOutcome::Unbounded { mut point, mut ray } => {
            point.truncate(n);
            ray.truncate(n);
            LpOutcome::Unbounded { point, ray }
        }
        LpOutcome::Infeasible => LpOutcome::Infeasible,
    }
}

/// Exact feasibility of `sys`.
pub fn feasible(sys: &LinearSystem) -> bool {
    simplex::solve(sys, None) != LpOutcome::Infeasible
}

/// Some point of `sys`, if it is feasible.
pub fn find_point(sys: &LinearSystem) -> Option<Vec<Rational>> {
    match simplex::solve(sys, None) {
        LpOutcome::Optimal { point, .. } => Some(point),
        _ => None,
    }
}

/// Minimizes `objective` over `sys`. Points are reported in the column order
/// of `sys`.
pub fn minimize(sys: &LinearSystem, objective: &LinearExpr) -> LpOutcome {
    let n = sys.vars.len();
    let (ext, c) = objective_columns(sys, objective);
    let out = simplex::solve(&ext, Some((&c, objective.constant_term())));
    trim(out, n)
}

/// Maximizes `objective` over `sys`.
pub fn maximize(sys: &LinearSystem, objective: &LinearExpr) -> LpOutcome {
    match minimize(sys, &objective.scale(&-Rational::from_integer(1.into()))) {
        LpOutcome::Optimal { value, point } => LpOutcome::Optimal { value: -value, point },
        other => other,
    }
}

/// Whether every solution of `sys` satisfies `expr >= 0`. Vacuously true
/// for infeasible systems.
pub fn entails(sys: &LinearSystem, expr: &LinearExpr) -> bool {
    match minimize(sys, expr) {
        LpOutcome::Infeasible => true,
        LpOutcome::Unbounded { .. } => false,
        LpOutcome::Optimal { value, .. } => !value.is_negative(),
    }
}

/// Whether `a` entails every row of `b`.
pub fn entails_all(a: &LinearSystem, b: &LinearSystem) -> bool {
    b.row_exprs().all(|e| entails(a, &e))
}

/// Solution-set equality, checked by entailment in both directions.
pub fn equivalent(a: &LinearSystem, b: &LinearSystem) -> bool {
    entails_all(a, b) && entails_all(b, a)
}
