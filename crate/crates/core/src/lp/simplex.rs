//! Two-phase dictionary simplex over exact rationals with Bland's rule.
//!
//! Variable ids: `0..n` are the (free) structural columns, `n..n+m` the row
//! slacks `w_i = A_i·x - b_i >= 0`, and `n+m` the phase-one auxiliary.
//! Free variables are pivoted into the basis first and never leave it.

use std::fmt::{self, Write};

use num_traits::{One, Signed, Zero};

use super::{LinearSystem, LpOutcome};
use crate::model::Rational;

struct Dictionary {
    n: usize,
    m: usize,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    beta: Vec<Rational>,
    coef: Vec<Vec<Rational>>,
    /// Objective `z0 + Σ d_c · nonbasic[c]`, minimized.
    z0: Rational,
    d: Vec<Rational>,
    log: Option<String>,
}

enum Step {
    Optimal,
    Unbounded(usize),
    Pivoted,
}

impl Dictionary {
    fn new(sys: &LinearSystem) -> Self {
        let n = sys.vars.len();
        let m = sys.rows.len();
        Self {
            n,
            m,
            basic: (n..n + m).collect(),
            nonbasic: (0..n).collect(),
            beta: sys.rows.iter().map(|r| -r.rhs.clone()).collect(),
            coef: sys.rows.iter().map(|r| r.coeffs.clone()).collect(),
            z0: Rational::zero(),
            d: vec![Rational::zero(); n],
            log: None,
        }
    }

    fn is_free(&self, var: usize) -> bool {
        var < self.n
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let a = self.coef[r][c].clone();
        debug_assert!(!a.is_zero());
        let inv = a.recip();
        // Solve row r for the entering variable.
        let new_beta = -&self.beta[r] * &inv;
        let mut new_row: Vec<Rational> = self.coef[r].iter().map(|x| -x * &inv).collect();
        new_row[c] = inv;
        self.beta[r] = new_beta;
        self.coef[r] = new_row;
        let pivot_row = std::mem::take(&mut self.coef[r]);
        let pivot_beta = self.beta[r].clone();
        for i in 0..self.coef.len() {
            if i == r || self.coef[i][c].is_zero() {
                continue;
            }
            let f = std::mem::replace(&mut self.coef[i][c], Rational::zero());
            substitute(&mut self.coef[i], &mut self.beta[i], &f, &pivot_row, &pivot_beta, c);
        }
        if !self.d[c].is_zero() {
            let f = std::mem::replace(&mut self.d[c], Rational::zero());
            substitute(&mut self.d, &mut self.z0, &f, &pivot_row, &pivot_beta, c);
        }
        self.coef[r] = pivot_row;
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[c]);
        if self.log.is_some() {
            let dump = self.to_string();
            if let Some(log) = &mut self.log {
                let _ = writeln!(log, "pivot row {r} col {c}\n{dump}");
            }
        }
    }

    /// Moves every free variable into the basis where some row mentions it.
    fn install_free_vars(&mut self) {
        for var in 0..self.n {
            let Some(c) = self.nonbasic.iter().position(|&v| v == var) else { continue };
            let row = (0..self.basic.len())
                .filter(|&r| !self.is_free(self.basic[r]) && !self.coef[r][c].is_zero())
                .min_by_key(|&r| self.basic[r]);
            if let Some(r) = row {
                self.pivot(r, c);
            }
        }
    }

    /// One Bland step on the current objective. Only rows with a
    /// sign-constrained basic variable take part in the ratio test.
    fn bland_step(&mut self) -> Step {
        let entering = (0..self.nonbasic.len())
            .filter(|&c| self.d[c].is_negative())
            .min_by_key(|&c| self.nonbasic[c]);
        let Some(c) = entering else { return Step::Optimal };
        let mut best: Option<(usize, Rational)> = None;
        for r in 0..self.basic.len() {
            if self.is_free(self.basic[r]) || !self.coef[r][c].is_negative() {
                continue;
            }
            let ratio = &self.beta[r] / -&self.coef[r][c];
            let better = match &best {
                None => true,
                Some((br, bv)) => ratio < *bv || (ratio == *bv && self.basic[r] < self.basic[*br]),
            };
            if better {
                best = Some((r, ratio));
            }
        }
        match best {
            None => Step::Unbounded(c),
            Some((r, _)) => {
                self.pivot(r, c);
                Step::Pivoted
            }
        }
    }

    fn run(&mut self) -> Option<usize> {
        loop {
            match self.bland_step() {
                Step::Optimal => return None,
                Step::Unbounded(c) => return Some(c),
                Step::Pivoted => {}
            }
        }
    }

    /// Phase one. Returns false when the rows admit no solution.
    fn make_feasible(&mut self) -> bool {
        let worst = (0..self.basic.len())
            .filter(|&r| !self.is_free(self.basic[r]) && self.beta[r].is_negative())
            .min_by(|&a, &b| self.beta[a].cmp(&self.beta[b]).then(self.basic[a].cmp(&self.basic[b])));
        let Some(leave) = worst else { return true };
        let aux = self.n + self.m;
        for r in 0..self.basic.len() {
            let k = if self.is_free(self.basic[r]) { Rational::zero() } else { Rational::one() };
            self.coef[r].push(k);
        }
        self.nonbasic.push(aux);
        let aux_col = self.nonbasic.len() - 1;
        self.d = vec![Rational::zero(); self.nonbasic.len()];
        self.d[aux_col] = Rational::one();
        self.z0 = Rational::zero();
        self.pivot(leave, aux_col);
        let unbounded = self.run();
        debug_assert!(unbounded.is_none(), "phase one is bounded below");
        if self.z0.is_positive() {
            return false;
        }
        if let Some(r) = self.basic.iter().position(|&v| v == aux) {
            let c = (0..self.nonbasic.len())
                .filter(|&c| !self.coef[r][c].is_zero())
                .min_by_key(|&c| self.nonbasic[c]);
            match c {
                Some(c) => self.pivot(r, c),
                None => {
                    self.basic.remove(r);
                    self.beta.remove(r);
                    self.coef.remove(r);
                }
            }
        }
        let c = self.nonbasic.iter().position(|&v| v == aux).expect("aux is nonbasic");
        self.nonbasic.remove(c);
        for row in &mut self.coef {
            row.remove(c);
        }
        true
    }

    fn set_objective(&mut self, cost: &[Rational], constant: &Rational) {
        self.z0 = constant.clone();
        self.d = vec![Rational::zero(); self.nonbasic.len()];
        for (var, k) in cost.iter().enumerate() {
            if k.is_zero() {
                continue;
            }
            if let Some(c) = self.nonbasic.iter().position(|&v| v == var) {
                self.d[c] += k;
            } else {
                let r = self.basic.iter().position(|&v| v == var).expect("variable is basic");
                self.z0 += k * &self.beta[r];
                for (dc, a) in self.d.iter_mut().zip(&self.coef[r]) {
                    if !a.is_zero() {
                        *dc += k * a;
                    }
                }
            }
        }
    }

    fn point(&self) -> Vec<Rational> {
        let mut x = vec![Rational::zero(); self.n];
        for (r, &v) in self.basic.iter().enumerate() {
            if v < self.n {
                x[v] = self.beta[r].clone();
            }
        }
        x
    }

    /// Direction in structural space obtained by raising nonbasic column `c`.
    fn ray(&self, c: usize, sign: Rational) -> Vec<Rational> {
        let mut ray = vec![Rational::zero(); self.n];
        if self.nonbasic[c] < self.n {
            ray[self.nonbasic[c]] = sign.clone();
        }
        for (r, &v) in self.basic.iter().enumerate() {
            if v < self.n {
                ray[v] = &self.coef[r][c] * &sign;
            }
        }
        ray
    }
}

fn substitute(
    row: &mut [Rational],
    beta: &mut Rational,
    f: &Rational,
    pivot_row: &[Rational],
    pivot_beta: &Rational,
    c: usize,
) {
    *beta += f * pivot_beta;
    for (k, p) in pivot_row.iter().enumerate() {
        if p.is_zero() {
            continue;
        }
        if k == c {
            row[k] = f * p;
        } else {
            row[k] += f * p;
        }
    }
}

impl fmt::Display for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |v: usize| {
            if v < self.n {
                format!("x{v}")
            } else if v < self.n + self.m {
                format!("w{}", v - self.n)
            } else {
                "aux".to_string()
            }
        };
        for (r, &b) in self.basic.iter().enumerate() {
            write!(f, "  {} = {}", name(b), self.beta[r])?;
            for (c, a) in self.coef[r].iter().enumerate() {
                if !a.is_zero() {
                    write!(f, " + ({a}){}", name(self.nonbasic[c]))?;
                }
            }
            writeln!(f)?;
        }
        write!(f, "  z = {}", self.z0)?;
        for (c, a) in self.d.iter().enumerate() {
            if !a.is_zero() {
                write!(f, " + ({a}){}", name(self.nonbasic[c]))?;
            }
        }
        writeln!(f)
    }
}

pub(super) fn solve(sys: &LinearSystem, objective: Option<(&[Rational], &Rational)>) -> LpOutcome {
    solve_with(Dictionary::new(sys), objective).0
}

/// Solves like [`super::minimize`] and also returns a plain-text dump of
/// every dictionary visited.
pub fn solve_traced(sys: &LinearSystem, cost: &[Rational], constant: &Rational) -> (LpOutcome, String) {
    let mut dict = Dictionary::new(sys);
    dict.log = Some(format!("initial\n{dict}"));
    let (out, log) = solve_with(dict, Some((cost, constant)));
    (out, log.unwrap_or_default())
}

fn solve_with(mut dict: Dictionary, objective: Option<(&[Rational], &Rational)>) -> (LpOutcome, Option<String>) {
    dict.install_free_vars();
    if !dict.make_feasible() {
        return (LpOutcome::Infeasible, dict.log);
    }
    let Some((cost, constant)) = objective else {
        let point = dict.point();
        return (LpOutcome::Optimal { value: Rational::zero(), point }, dict.log);
    };
    dict.set_objective(cost, constant);
    // Free variables that no row mentions stay nonbasic; any cost on them is unbounded.
    let free_col = (0..dict.nonbasic.len()).find(|&c| dict.is_free(dict.nonbasic[c]) && !dict.d[c].is_zero());
    if let Some(c) = free_col {
        let sign = if dict.d[c].is_negative() { Rational::one() } else { -Rational::one() };
        let ray = dict.ray(c, sign);
        return (LpOutcome::Unbounded { point: dict.point(), ray }, dict.log);
    }
    let outcome = match dict.run() {
        None => LpOutcome::Optimal { value: dict.z0.clone(), point: dict.point() },
        Some(c) => LpOutcome::Unbounded { point: dict.point(), ray: dict.ray(c, Rational::one()) },
    };
    (outcome, dict.log)
}
