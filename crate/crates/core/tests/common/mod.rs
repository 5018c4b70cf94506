#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use almterm_core::lp::LinearSystem;
use almterm_core::model::{Program, Rational};
use almterm_core::parser::parse_program;
use num_traits::{Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

pub const COUNTER: &str = "p(x) :- x = 2.\np(x) :- 0 = 1.\np(x) :- 72 >= x, y = x + 1, p(y).\n";
pub const TWO_LOOPS: &str =
    "q(x) :- -20 <= x, x <= 20, y + 5 = x, q(y).\nq(x) :- 0 <= x, x <= 100, y + 1 = x, q(y).\n";
pub const ASCENDING: &str = "p(x) :- x >= 0, y = x + 1, p(y).\n";

pub fn corpus_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Every `.clp` file of the corpus, sorted by name.
pub fn corpus() -> Vec<(String, Program)> {
    let mut files: Vec<_> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "clp"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let prog = parse_program(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_name().unwrap().to_string_lossy().into_owned(), prog)
        })
        .collect()
}

fn linear_term(rng: &mut impl Rng, vars: &[String], max_coeff: i64) -> String {
    let mut s = String::new();
    for v in vars {
        let c = rng.gen_range(-max_coeff..=max_coeff);
        if c == 0 {
            continue;
        }
        if s.is_empty() {
            let _ = write!(s, "{c}*{v}");
        } else if c < 0 {
            let _ = write!(s, " - {}*{v}", -c);
        } else {
            let _ = write!(s, " + {c}*{v}");
        }
    }
    if s.is_empty() {
        s.push('0');
    }
    s
}

fn constraint(rng: &mut impl Rng, vars: &[String], max_coeff: i64) -> String {
    let k = rng.gen_range(-max_coeff..=max_coeff);
    let rel = match rng.gen_range(0..5) {
        0 => "=",
        1 | 2 => ">=",
        _ => "<=",
    };
    // Pick a sparse subset so constraints are not all dense.
    let mut picked: Vec<String> = vars.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect();
    if picked.is_empty() {
        picked.push(vars.choose(rng).unwrap().clone());
    }
    format!("{} {rel} {k}", linear_term(rng, &picked, max_coeff))
}

#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub max_predicates: usize,
    pub max_rules: usize,
    /// Variables per rule, over all its atoms.
    pub max_vars: usize,
    pub max_coeff: i64,
    /// Body atoms per rule are drawn from this range.
    pub body_atoms: (usize, usize),
}

pub const SMALL_BINARY: GenParams =
    GenParams { max_predicates: 3, max_rules: 4, max_vars: 3, max_coeff: 5, body_atoms: (0, 1) };

pub const SMALL_NON_BINARY: GenParams =
    GenParams { max_predicates: 3, max_rules: 4, max_vars: 4, max_coeff: 5, body_atoms: (2, 3) };

/// Random flat program source. Every rule variable occurs in exactly one atom.
pub fn random_source(rng: &mut impl Rng, g: GenParams) -> String {
    let npred = rng.gen_range(1..=g.max_predicates);
    let arity: Vec<usize> = (0..npred).map(|_| rng.gen_range(0..=2.min(g.max_vars))).collect();
    let nrules = rng.gen_range(1..=g.max_rules);
    let mut src = String::new();
    for r in 0..nrules {
        let head = if r < npred { r } else { rng.gen_range(0..npred) };
        let mut used = arity[head];
        let mut body = Vec::new();
        let want = rng.gen_range(g.body_atoms.0..=g.body_atoms.1);
        for _ in 0..want {
            let fits: Vec<usize> = (0..npred).filter(|q| used + arity[*q] <= g.max_vars).collect();
            let Some(&q) = fits.choose(rng) else { break };
            used += arity[q];
            body.push(q);
        }
        let mut next = 0;
        let mut fresh = |n: usize| -> Vec<String> {
            let v = (next..next + n).map(|i| format!("x{i}")).collect();
            next += n;
            v
        };
        let head_vars = fresh(arity[head]);
        let body_vars: Vec<Vec<String>> = body.iter().map(|q| fresh(arity[*q])).collect();
        let all: Vec<String> = head_vars.iter().chain(body_vars.iter().flatten()).cloned().collect();
        let mut parts = Vec::new();
        if !all.is_empty() {
            for _ in 0..rng.gen_range(1..=3) {
                parts.push(constraint(rng, &all, g.max_coeff));
            }
        }
        for (q, vs) in body.iter().zip(&body_vars) {
            parts.push(format!("p{q}({})", vs.join(", ")));
        }
        let _ = write!(src, "p{head}({})", head_vars.join(", "));
        if parts.is_empty() {
            src.push_str(".\n");
        } else {
            let _ = writeln!(src, " :- {}.", parts.join(", "));
        }
    }
    src
}

pub fn random_program(rng: &mut impl Rng, g: GenParams) -> (String, Program) {
    let src = random_source(rng, g);
    let p = parse_program(&src).unwrap_or_else(|e| panic!("generated program does not parse: {e}\n{src}"));
    (src, p)
}

/// `p_i(x) :- x <= c_i, y = x + 1, p_{i+1 mod k}(y).` for `n` rules over `k` predicates.
pub fn cycle_family(n: usize, k: usize) -> Program {
    let mut src = String::new();
    for i in 0..n {
        let _ = writeln!(src, "p{}(x) :- x <= {}, y = x + 1, p{}(y).", i % k, 10 + (i * 37) % 91, (i + 1) % k);
    }
    parse_program(&src).unwrap()
}

/// `p_i(x, y) :- x >= 0, u = x - 1, v = y + (i mod 5), p_{i+1 mod k}(u, v).`
pub fn pair_family(n: usize, k: usize) -> Program {
    let mut src = String::new();
    for i in 0..n {
        let _ = writeln!(src, "p{}(x, y) :- x >= 0, u = x - 1, v = y + {}, p{}(u, v).", i % k, i % 5, (i + 1) % k);
    }
    parse_program(&src).unwrap()
}

/// Feasibility by plain Fourier–Motzkin elimination of every column, with
/// Gaussian substitution of explicit equality pairs first. Shares no code
/// with the LP engine. Returns `None` when the row count exceeds `cap`.
pub fn fm_feasible(sys: &LinearSystem, cap: usize) -> Option<bool> {
    type Row = (BTreeMap<usize, Rational>, Rational);
    let mut rows: Vec<Row> = sys
        .rows()
        .iter()
        .map(|r| {
            let coeffs = r
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| !a.is_zero())
                .map(|(i, a)| (i, a.clone()))
                .collect();
            (coeffs, r.rhs.clone())
        })
        .collect();

    fn scale_to_unit(row: &Row) -> Row {
        let Some((_, lead)) = row.0.iter().next() else { return row.clone() };
        let k = lead.abs();
        (row.0.iter().map(|(c, a)| (*c, a / &k)).collect(), &row.1 / &k)
    }

    fn dedupe(rows: Vec<Row>) -> Vec<Row> {
        let mut best: BTreeMap<Vec<(usize, Rational)>, Rational> = BTreeMap::new();
        let mut constants = Vec::new();
        for r in rows {
            if r.0.is_empty() {
                constants.push(r);
                continue;
            }
            let u = scale_to_unit(&r);
            let key: Vec<(usize, Rational)> = u.0.into_iter().collect();
            best.entry(key).and_modify(|b| {
                if u.1 > *b {
                    *b = u.1.clone()
                }
            }).or_insert(u.1);
        }
        let mut out: Vec<Row> = constants;
        out.extend(best.into_iter().map(|(k, b)| (k.into_iter().collect(), b)));
        out
    }

    let ncols = sys.vars().len();
    let mut eliminated: HashSet<usize> = HashSet::new();
    for _ in 0..ncols {
        rows = dedupe(rows);
        if rows.iter().any(|(c, b)| c.is_empty() && b.is_positive()) {
            return Some(false);
        }
        if rows.len() > cap {
            return None;
        }
        // Prefer a column that appears in an equality pair.
        let eq_col = rows.iter().find_map(|(c, b)| {
            let neg: BTreeMap<usize, Rational> = c.iter().map(|(k, a)| (*k, -a)).collect();
            let nb = -b.clone();
            if rows.iter().any(|(c2, b2)| *c2 == neg && *b2 == nb) {
                c.keys().next().copied().map(|col| (col, c.clone(), b.clone()))
            } else {
                None
            }
        });
        if let Some((col, eqc, eqb)) = eq_col {
            let p = eqc[&col].clone();
            rows = rows
                .into_iter()
                .map(|(c, b)| match c.get(&col).cloned() {
                    None => (c, b),
                    Some(a) => {
                        let f = &a / &p;
                        let mut nc = c.clone();
                        for (k, v) in &eqc {
                            let e = nc.entry(*k).or_insert_with(Rational::zero);
                            *e -= &f * v;
                        }
                        nc.retain(|_, v| !v.is_zero());
                        (nc, &b - &f * &eqb)
                    }
                })
                .collect();
            // The equality pair itself collapses to 0 >= 0 rows.
            rows.retain(|(c, b)| !(c.is_empty() && !b.is_positive()));
            eliminated.insert(col);
            continue;
        }
        let live: Vec<usize> = (0..ncols)
            .filter(|c| !eliminated.contains(c) && rows.iter().any(|(r, _)| r.contains_key(c)))
            .collect();
        let Some(&col) = live.iter().min_by_key(|c| {
            let p = rows.iter().filter(|(r, _)| r.get(c).is_some_and(|a| a.is_positive())).count();
            let n = rows.iter().filter(|(r, _)| r.get(c).is_some_and(|a| a.is_negative())).count();
            p * n
        }) else {
            break;
        };
        let (with, without): (Vec<Row>, Vec<Row>) = rows.into_iter().partition(|(c, _)| c.contains_key(&col));
        let (pos, neg): (Vec<Row>, Vec<Row>) = with.into_iter().partition(|(c, _)| c[&col].is_positive());
        let mut next = without;
        for (pc, pb) in &pos {
            for (nc, nb) in &neg {
                let ap = pc[&col].clone();
                let an = -nc[&col].clone();
                let mut c: BTreeMap<usize, Rational> = BTreeMap::new();
                for (k, v) in pc {
                    *c.entry(*k).or_insert_with(Rational::zero) += v * &an;
                }
                for (k, v) in nc {
                    *c.entry(*k).or_insert_with(Rational::zero) += v * &ap;
                }
                c.retain(|_, v| !v.is_zero());
                next.push((c, pb * &an + nb * &ap));
            }
        }
        rows = next;
        eliminated.insert(col);
    }
    rows = dedupe(rows);
    Some(!rows.iter().any(|(c, b)| c.is_empty() && b.is_positive()))
}
