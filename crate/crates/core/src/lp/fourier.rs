//! Fourier–Motzkin projection with equality substitution and exact
//! LP-based redundancy removal.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::{entails, feasible, LinearSystem};
use crate::model::{LinearExpr, Rational, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
struct SparseRow {
    coeffs: BTreeMap<usize, Rational>,
    rhs: Rational,
}

impl SparseRow {
    /// Positive rescaling to primitive integer coefficients.
    fn normalized(mut self) -> Self {
        if self.coeffs.is_empty() {
            return self;
        }
        let lcm = self
            .coeffs
            .values()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let gcd = self
            .coeffs
            .values()
            .fold(BigInt::zero(), |acc, c| acc.gcd(&(c.numer() * (&lcm / c.denom()))));
        let k = Rational::new(lcm, gcd);
        for c in self.coeffs.values_mut() {
            *c *= &k;
        }
        self.rhs *= &k;
        self
    }

    fn negated_key(&self) -> Vec<(usize, Rational)> {
        self.coeffs.iter().map(|(c, a)| (*c, -a)).collect()
    }

    fn key(&self) -> Vec<(usize, Rational)> {
        self.coeffs.iter().map(|(c, a)| (*c, a.clone())).collect()
    }

    /// `self + k·other`, dropping cancelled entries.
    fn add_scaled(&self, other: &SparseRow, k: &Rational) -> SparseRow {
        let mut coeffs = self.coeffs.clone();
        for (c, a) in &other.coeffs {
            let slot = coeffs.entry(*c).or_insert_with(Rational::zero);
            *slot += a * k;
            if slot.is_zero() {
                coeffs.remove(c);
            }
        }
        SparseRow { coeffs, rhs: &self.rhs + &other.rhs * k }
    }
}

/// Normalizes, drops trivially true rows and keeps only the tightest of
/// parallel rows. Order of first occurrence is preserved.
fn tidy(rows: Vec<SparseRow>) -> Vec<SparseRow> {
    let mut out: Vec<SparseRow> = Vec::with_capacity(rows.len());
    let mut by_key: HashMap<Vec<(usize, Rational)>, usize> = HashMap::new();
    for r in rows {
        let r = r.normalized();
        if r.coeffs.is_empty() && !r.rhs.is_positive() {
            continue;
        }
        match by_key.get(&r.key()) {
            Some(&i) => {
                if r.rhs > out[i].rhs {
                    out[i].rhs = r.rhs;
                }
            }
            None => {
                by_key.insert(r.key(), out.len());
                out.push(r);
            }
        }
    }
    out
}

fn to_system(vars: &[Var], rows: &[SparseRow]) -> LinearSystem {
    let mut sys = LinearSystem::new(vars.to_vec());
    for r in rows {
        let mut dense = vec![Rational::zero(); vars.len()];
        for (c, a) in &r.coeffs {
            dense[*c] = a.clone();
        }
        sys.push_row(dense, r.rhs.clone());
    }
    sys
}

fn row_expr(vars: &[Var], r: &SparseRow) -> LinearExpr {
    LinearExpr::from_terms(r.coeffs.iter().map(|(c, a)| (vars[*c], a.clone())), -r.rhs.clone())
}

/// Removes every row entailed by the remaining ones, one LP per row.
fn drop_redundant(vars: &[Var], rows: Vec<SparseRow>) -> Vec<SparseRow> {
    let mut alive = vec![true; rows.len()];
    for i in 0..rows.len() {
        let others: Vec<SparseRow> = rows
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i && alive[*j])
            .map(|(_, r)| r.clone())
            .collect();
        if entails(&to_system(vars, &others), &row_expr(vars, &rows[i])) {
            alive[i] = false;
        }
    }
    rows.into_iter().zip(alive).filter(|(_, a)| *a).map(|(r, _)| r).collect()
}

/// Uses implicit equalities (pairs of opposite rows) to substitute away
/// columns in `elim`.
fn substitute_equalities(mut rows: Vec<SparseRow>, elim: &HashSet<usize>) -> Vec<SparseRow> {
    loop {
        let mut index: HashMap<Vec<(usize, Rational)>, usize> = HashMap::new();
        for (i, r) in rows.iter().enumerate() {
            index.insert(r.key(), i);
        }
        let found = rows.iter().enumerate().find_map(|(i, r)| {
            let col = r.coeffs.keys().find(|c| elim.contains(c))?;
            let j = *index.get(&r.negated_key())?;
            (rows[j].rhs == -r.rhs.clone()).then_some((i, j, *col))
        });
        let Some((i, j, col)) = found else { return rows };
        let eq = rows[i].clone();
        let pivot = eq.coeffs[&col].clone();
        let mut next = Vec::with_capacity(rows.len());
        for (k, r) in rows.into_iter().enumerate() {
            if k == i || k == j {
                continue;
            }
            match r.coeffs.get(&col) {
                Some(a) => {
                    let f = -(a / &pivot);
                    next.push(r.add_scaled(&eq, &f));
                }
                None => next.push(r),
            }
        }
        rows = tidy(next);
    }
}

fn eliminate(rows: Vec<SparseRow>, col: usize) -> Vec<SparseRow> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut out = Vec::new();
    for r in rows {
        match r.coeffs.get(&col).map(|a| a.is_positive()) {
            Some(true) => pos.push(r),
            Some(false) => neg.push(r),
            None => out.push(r),
        }
    }
    for p in &pos {
        let ap = p.coeffs[&col].clone();
        for n in &neg {
            let an = -n.coeffs[&col].clone();
            // an·p + ap·n cancels `col`; both multipliers are positive.
            let combined = p.add_scaled(n, &(&ap / &an));
            out.push(combined);
        }
    }
    tidy(out)
}

fn sparse_rows(sys: &LinearSystem) -> Vec<SparseRow> {
    sys.rows()
        .iter()
        .map(|r| SparseRow {
            coeffs: r
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| !a.is_zero())
                .map(|(c, a)| (c, a.clone()))
                .collect(),
            rhs: r.rhs.clone(),
        })
        .collect()
}

/// Same solution set with rows rescaled to primitive integer form, trivially
/// true rows dropped, and only the tightest of parallel rows kept.
pub fn simplify(sys: &LinearSystem) -> LinearSystem {
    let mut out = LinearSystem::new(sys.vars().to_vec());
    for r in tidy(sparse_rows(sys)) {
        out.push_nonneg(&row_expr(sys.vars(), &r));
    }
    out
}

/// Projects `sys` onto `keep`: the result, over exactly the variables in
/// `keep` (in that order), has as solutions precisely the restrictions of
/// solutions of `sys`. Redundant rows are removed, each tested by one LP
/// against the others. An infeasible input projects to `0 >= 1`.
pub fn fm_project(sys: &LinearSystem, keep: &[Var]) -> LinearSystem {
    let mut out = LinearSystem::new(keep.to_vec());
    if !feasible(sys) {
        out.push_row(vec![Rational::zero(); keep.len()], Rational::one());
        return out;
    }
    let keep_set: HashSet<Var> = keep.iter().copied().collect();
    let vars = sys.vars();
    let elim: HashSet<usize> =
        (0..vars.len()).filter(|c| !keep_set.contains(&vars[*c])).collect();

    let mut rows = substitute_equalities(tidy(sparse_rows(sys)), &elim);

    loop {
        let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for r in &rows {
            for (c, a) in &r.coeffs {
                if elim.contains(c) {
                    let e = counts.entry(*c).or_default();
                    if a.is_positive() {
                        e.0 += 1;
                    } else {
                        e.1 += 1;
                    }
                }
            }
        }
        let Some((&col, _)) = counts
            .iter()
            .min_by_key(|(c, (p, n))| ((p * n) as isize - (p + n) as isize, **c))
        else {
            break;
        };
        rows = eliminate(rows, col);
        let live_cols: HashSet<usize> = rows.iter().flat_map(|r| r.coeffs.keys().copied()).collect();
        if rows.len() > 2 * live_cols.len() + 4 {
            rows = drop_redundant(vars, rows);
        }
    }

    let rows = drop_redundant(vars, rows);
    for r in &rows {
        out.push_nonneg(&row_expr(vars, r));
    }
    out
}
