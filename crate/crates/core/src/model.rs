//! Data model for flat constraint logic programs over ordered fields.
//!
//! Programs are stored with per-rule variable tables: a [`Var`] inside a
//! [`Rule`] indexes that rule's `vars` name table. Linear systems produced
//! by the analysis reuse the same [`Var`] newtype with their own pools.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Exact rational number in canonical form.
pub type Rational = num_rational::BigRational;

/// Builds the rational `num/den`. Panics if `den` is zero.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `n` or `n/d` (optional leading sign) into a canonical rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    match text.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(Rational::new(n, d))
        }
        None => Some(Rational::from_integer(text.parse().ok()?)),
    }
}

/// Largest integer not above `q`.
pub fn floor(q: &Rational) -> BigInt {
    q.floor().to_integer()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub usize);

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Numeric domain a program is interpreted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Q,
    QPlus,
    R,
    RPlus,
    /// Natural numbers. Only sound (not complete) answers are possible.
    N,
}

impl Domain {
    pub const ALL: [Domain; 5] = [Domain::Q, Domain::QPlus, Domain::R, Domain::RPlus, Domain::N];

    /// Whether every variable carries an implicit `x >= 0`.
    pub fn nonnegative(self) -> bool {
        !matches!(self, Domain::Q | Domain::R)
    }

    pub fn is_naturals(self) -> bool {
        self == Domain::N
    }

    pub fn tag(self) -> &'static str {
        match self {
            Domain::Q => "q",
            Domain::QPlus => "q+",
            Domain::R => "r",
            Domain::RPlus => "r+",
            Domain::N => "n",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Domain> {
        Some(match tag.to_ascii_lowercase().as_str() {
            "q" => Domain::Q,
            "q+" | "qplus" => Domain::QPlus,
            "r" => Domain::R,
            "r+" | "rplus" => Domain::RPlus,
            "n" => Domain::N,
            _ => return None,
        })
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Affine expression `Σ coeff·var + constant`. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinearExpr {
    coeffs: BTreeMap<Var, Rational>,
    constant: Rational,
}

impl LinearExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Rational) -> Self {
        Self { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn var(v: Var) -> Self {
        Self::term(v, Rational::one())
    }

    pub fn term(v: Var, c: Rational) -> Self {
        let mut e = Self::zero();
        e.add_term(v, c);
        e
    }

    pub fn from_terms<I: IntoIterator<Item = (Var, Rational)>>(terms: I, constant: Rational) -> Self {
        let mut e = Self::constant(constant);
        for (v, c) in terms {
            e.add_term(v, c);
        }
        e
    }

    pub fn add_term(&mut self, v: Var, c: Rational) {
        if c.is_zero() {
            return;
        }
        let slot = self.coeffs.entry(v).or_insert_with(Rational::zero);
        *slot += c;
        if slot.is_zero() {
            self.coeffs.remove(&v);
        }
    }

    pub fn add_constant(&mut self, c: &Rational) {
        self.constant += c;
    }

    pub fn coeff(&self, v: Var) -> Rational {
        self.coeffs.get(&v).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Var, &Rational)> {
        self.coeffs.iter().map(|(v, c)| (*v, c))
    }

    pub fn constant_term(&self) -> &Rational {
        &self.constant
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.coeffs.keys().copied()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, k: &Rational) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        Self {
            coeffs: self.coeffs.iter().map(|(v, c)| (*v, c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (v, c) in other.terms() {
            out.add_term(v, c.clone());
        }
        out.constant += &other.constant;
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scale(&-Rational::one()))
    }

    /// Renames variables; colliding targets have their coefficients summed.
    pub fn map_vars(&self, mut f: impl FnMut(Var) -> Var) -> Self {
        Self::from_terms(self.coeffs.iter().map(|(v, c)| (f(*v), c.clone())), self.constant.clone())
    }

    /// Evaluates under `value`, which must cover every variable.
    pub fn eval(&self, mut value: impl FnMut(Var) -> Rational) -> Rational {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            acc += c * value(*v);
        }
        acc
    }

    pub fn display_with<'a>(&'a self, names: &'a dyn Fn(Var) -> String) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a LinearExpr,
    names: &'a dyn Fn(Var) -> String,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in self.expr.terms() {
            let name = (self.names)(v);
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            if mag.is_one() {
                write!(f, "{name}")?;
            } else {
                write!(f, "{mag}*{name}")?;
            }
            first = false;
        }
        let k = self.expr.constant_term();
        if first {
            write!(f, "{k}")?;
        } else if !k.is_zero() {
            write!(f, " {} {}", if k.is_negative() { "-" } else { "+" }, k.abs())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Geq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Geq => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub lhs: LinearExpr,
    pub relation: Relation,
    pub rhs: LinearExpr,
}

impl LinearConstraint {
    pub fn new(lhs: LinearExpr, relation: Relation, rhs: LinearExpr) -> Self {
        Self { lhs, relation, rhs }
    }

    pub fn eq(lhs: LinearExpr, rhs: LinearExpr) -> Self {
        Self::new(lhs, Relation::Eq, rhs)
    }

    pub fn geq(lhs: LinearExpr, rhs: LinearExpr) -> Self {
        Self::new(lhs, Relation::Geq, rhs)
    }

    /// `lhs - rhs`, so the constraint reads `difference() (=|>=) 0`.
    pub fn difference(&self) -> LinearExpr {
        self.lhs.minus(&self.rhs)
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.lhs.vars().chain(self.rhs.vars()).collect()
    }

    pub fn map_vars(&self, mut f: impl FnMut(Var) -> Var) -> Self {
        Self {
            lhs: self.lhs.map_vars(&mut f),
            relation: self.relation,
            rhs: self.rhs.map_vars(&mut f),
        }
    }

    pub fn holds(&self, value: impl FnMut(Var) -> Rational) -> bool {
        let d = self.difference().eval(value);
        match self.relation {
            Relation::Eq => d.is_zero(),
            Relation::Geq => !d.is_negative(),
        }
    }

    pub fn display_with<'a>(&'a self, names: &'a dyn Fn(Var) -> String) -> ConstraintDisplay<'a> {
        ConstraintDisplay { c: self, names }
    }
}

pub struct ConstraintDisplay<'a> {
    c: &'a LinearConstraint,
    names: &'a dyn Fn(Var) -> String,
}

impl fmt::Display for ConstraintDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.c.lhs.display_with(self.names),
            self.c.relation.symbol(),
            self.c.rhs.display_with(self.names)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Var>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Var>) -> Self {
        Self { predicate: predicate.into(), args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

/// Where a rule came from: its index in the parsed program and, for rules
/// split by the binarizer, which body atom it keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Origin {
    pub source_rule: usize,
    pub body_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub head: Atom,
    pub constraints: Vec<LinearConstraint>,
    pub body: Vec<Atom>,
    /// Source names; `Var(i)` in this rule is `vars[i]`.
    pub vars: Vec<String>,
    pub origin: Origin,
}

impl Rule {
    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    pub fn var_name(&self, v: Var) -> String {
        self.vars.get(v.0).cloned().unwrap_or_else(|| v.to_string())
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.head).chain(self.body.iter())
    }

    /// Same rule up to provenance.
    pub fn same_shape(&self, other: &Rule) -> bool {
        self.head == other.head
            && self.constraints == other.constraints
            && self.body == other.body
            && self.vars == other.vars
    }

    /// Checks the flat-form invariants. `strict` additionally requires every
    /// constraint variable to occur in some atom, which rules copied by the
    /// binarizer may legitimately violate.
    pub fn check(&self, strict: bool) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for atom in self.atoms() {
            let mut local = BTreeSet::new();
            for &v in &atom.args {
                if v.0 >= self.vars.len() {
                    return Err(ModelError::UnknownVariable(v.to_string()));
                }
                if !local.insert(v) {
                    return Err(ModelError::RepeatedVariable {
                        var: self.var_name(v),
                        predicate: atom.predicate.clone(),
                    });
                }
            }
            for &v in &atom.args {
                if !seen.insert(v) {
                    return Err(ModelError::SharedVariable(self.var_name(v)));
                }
            }
        }
        for c in &self.constraints {
            for v in c.vars() {
                if v.0 >= self.vars.len() {
                    return Err(ModelError::UnknownVariable(v.to_string()));
                }
                if strict && !seen.contains(&v) {
                    return Err(ModelError::UnboundConstraintVariable(self.var_name(v)));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |v: Var| self.var_name(v);
        write_atom(f, &self.head, &names)?;
        let mut parts: Vec<String> = self
            .constraints
            .iter()
            .map(|c| c.display_with(&names).to_string())
            .collect();
        for a in &self.body {
            let args: Vec<String> = a.args.iter().map(|v| names(*v)).collect();
            parts.push(format!("{}({})", a.predicate, args.join(", ")));
        }
        if parts.is_empty() {
            f.write_str(".")
        } else {
            write!(f, " :- {}.", parts.join(", "))
        }
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, a: &Atom, names: &dyn Fn(Var) -> String) -> fmt::Result {
    write!(f, "{}(", a.predicate)?;
    for (i, v) in a.args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        f.write_str(&names(*v))?;
    }
    f.write_str(")")
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub rules: Vec<Rule>,
    /// Π_P: predicate symbol to arity, in first-occurrence order.
    pub predicates: IndexMap<String, usize>,
}

impl Program {
    /// Builds a program and registers every predicate, rejecting arity clashes.
    pub fn new(rules: Vec<Rule>) -> Result<Self, ModelError> {
        let mut predicates = IndexMap::new();
        for r in &rules {
            for a in r.atoms() {
                register(&mut predicates, a)?;
            }
        }
        Ok(Self { rules, predicates })
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.predicates.get(predicate).copied()
    }

    pub fn rules_for<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = (usize, &'a Rule)> + 'a {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.head.predicate == predicate)
    }

    pub fn is_binary(&self) -> bool {
        self.rules.iter().all(|r| r.body.len() <= 1)
    }

    pub fn validate(&self, strict: bool) -> Result<(), ModelError> {
        for r in &self.rules {
            r.check(strict)?;
            for a in r.atoms() {
                match self.predicates.get(&a.predicate) {
                    Some(&n) if n == a.arity() => {}
                    Some(&n) => {
                        return Err(ModelError::ArityMismatch {
                            predicate: a.predicate.clone(),
                            expected: n,
                            found: a.arity(),
                        })
                    }
                    None => return Err(ModelError::UnknownPredicate(a.predicate.clone())),
                }
            }
        }
        Ok(())
    }

    /// Equality up to rule provenance.
    pub fn same_shape(&self, other: &Program) -> bool {
        self.predicates == other.predicates
            && self.rules.len() == other.rules.len()
            && self.rules.iter().zip(&other.rules).all(|(a, b)| a.same_shape(b))
    }

    /// Keeps only the rules selected by `keep`, preserving Π_P.
    pub fn retain_rules(&self, mut keep: impl FnMut(usize, &Rule) -> bool) -> Program {
        Program {
            rules: self
                .rules
                .iter()
                .enumerate()
                .filter(|(i, r)| keep(*i, r))
                .map(|(_, r)| r.clone())
                .collect(),
            predicates: self.predicates.clone(),
        }
    }
}

pub(crate) fn register(predicates: &mut IndexMap<String, usize>, a: &Atom) -> Result<(), ModelError> {
    match predicates.get(&a.predicate) {
        Some(&n) if n != a.arity() => Err(ModelError::ArityMismatch {
            predicate: a.predicate.clone(),
            expected: n,
            found: a.arity(),
        }),
        Some(_) => Ok(()),
        None => {
            predicates.insert(a.predicate.clone(), a.arity());
            Ok(())
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Affine level mapping `|p(e)| = μ_{p,0} + Σ μ_{p,i}·e_i`, one coefficient
/// vector of length `arity + 1` per predicate.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LevelMapping {
    coeffs: IndexMap<String, Vec<Rational>>,
}

impl LevelMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// All-zero mapping over Π_P.
    pub fn zero(program: &Program) -> Self {
        let mut lm = Self::new();
        for (p, &n) in &program.predicates {
            lm.insert(p.clone(), vec![Rational::zero(); n + 1]);
        }
        lm
    }

    pub fn insert(&mut self, predicate: impl Into<String>, coeffs: Vec<Rational>) {
        self.coeffs.insert(predicate.into(), coeffs);
    }

    pub fn get(&self, predicate: &str) -> Option<&[Rational]> {
        self.coeffs.get(predicate).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Rational])> {
        self.coeffs.iter().map(|(p, c)| (p.as_str(), c.as_slice()))
    }

    pub fn scaled(&self, k: &Rational) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .map(|(p, c)| (p.clone(), c.iter().map(|x| x * k).collect()))
                .collect(),
        }
    }

    /// Checks that every predicate of `program` is covered with the right length.
    pub fn covers(&self, program: &Program) -> Result<(), ModelError> {
        for (p, &n) in &program.predicates {
            let c = self.get(p).ok_or_else(|| ModelError::UnknownPredicate(p.clone()))?;
            if c.len() != n + 1 {
                return Err(ModelError::ArityMismatch {
                    predicate: p.clone(),
                    expected: n,
                    found: c.len().saturating_sub(1),
                });
            }
        }
        Ok(())
    }

    /// Level of the atom `predicate(args)` as an affine expression over `args`.
    pub fn level_expr(&self, atom: &Atom) -> Result<LinearExpr, ModelError> {
        let c = self.coefficients(&atom.predicate, atom.arity())?;
        Ok(LinearExpr::from_terms(
            atom.args.iter().zip(&c[1..]).map(|(v, m)| (*v, m.clone())),
            c[0].clone(),
        ))
    }

    fn coefficients(&self, predicate: &str, arity: usize) -> Result<&[Rational], ModelError> {
        let c = self
            .get(predicate)
            .ok_or_else(|| ModelError::UnknownPredicate(predicate.to_string()))?;
        if c.len() != arity + 1 {
            return Err(ModelError::ArityMismatch {
                predicate: predicate.to_string(),
                expected: c.len().saturating_sub(1),
                found: arity,
            });
        }
        Ok(c)
    }
}

impl fmt::Display for LevelMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, c) in &self.coeffs {
            let names: Vec<String> = (1..c.len()).map(|i| format!("x{i}")).collect();
            let expr = LinearExpr::from_terms(
                c[1..].iter().enumerate().map(|(i, m)| (Var(i), m.clone())),
                c[0].clone(),
            );
            let lookup = |v: Var| names[v.0].clone();
            writeln!(f, "|{p}({})| = {}", names.join(", "), expr.display_with(&lookup))?;
        }
        Ok(())
    }
}

/// Level of the ground atom `predicate(args)` under `lm`.
pub fn level_of(lm: &LevelMapping, predicate: &str, args: &[Rational]) -> Result<Rational, ModelError> {
    let c = lm.coefficients(predicate, args.len())?;
    let mut acc = c[0].clone();
    for (m, a) in c[1..].iter().zip(args) {
        acc += m * a;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{predicate}` used with arity {found}, expected {expected}")]
    ArityMismatch { predicate: String, expected: usize, found: usize },
    #[error("variable `{var}` repeated in atom `{predicate}`")]
    RepeatedVariable { var: String, predicate: String },
    #[error("variable `{0}` shared between atoms")]
    SharedVariable(String),
    #[error("constraint variable `{0}` does not occur in any atom")]
    UnboundConstraintVariable(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lm_73() -> LevelMapping {
        let mut lm = LevelMapping::new();
        lm.insert("p", vec![int(73), int(-1)]);
        lm
    }

    #[test]
    fn level_of_examples() {
        assert_eq!(level_of(&lm_73(), "p", &[int(72)]).unwrap(), int(1));
        let mut zero = LevelMapping::new();
        zero.insert("p", vec![int(0), int(0)]);
        assert_eq!(level_of(&zero, "p", &[int(5)]).unwrap(), int(0));
        assert_eq!(level_of(&lm_73(), "p", &[rat(1, 2)]).unwrap(), rat(145, 2));
    }

    #[test]
    fn level_of_errors() {
        assert_eq!(
            level_of(&lm_73(), "q", &[int(1)]),
            Err(ModelError::UnknownPredicate("q".into()))
        );
        assert!(matches!(
            level_of(&lm_73(), "p", &[int(1), int(2)]),
            Err(ModelError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn rational_parsing_is_canonical() {
        assert_eq!(parse_rational("6/4"), Some(rat(3, 2)));
        assert_eq!(parse_rational("-6/-4"), Some(rat(3, 2)));
        assert_eq!(parse_rational("2/-4"), Some(rat(-1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(floor(&rat(-1, 2)), BigInt::from(-1));
    }

    #[test]
    fn linear_expr_drops_zero_terms() {
        let mut e = LinearExpr::var(Var(0));
        e.add_term(Var(0), int(-1));
        assert!(e.is_constant());
        assert_eq!(e, LinearExpr::zero());
    }

    fn small_rat() -> impl Strategy<Value = Rational> {
        (-50i64..50, 1i64..20).prop_map(|(n, d)| rat(n, d))
    }

    proptest! {
        #[test]
        fn rational_roundtrips(a in small_rat(), b in small_rat()) {
            prop_assert_eq!(&(&a + &b) - &b, a.clone());
            if !b.is_zero() {
                prop_assert_eq!(&(&a * &b) / &b, a);
            }
        }

        #[test]
        fn canonical_form(n in -100i64..100, d in 1i64..30, k in 1i64..10) {
            let a = rat(n, d);
            let b = rat(n * k, d * k);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.numer(), b.numer());
            prop_assert!(a.denom() > &BigInt::from(0));
        }

        #[test]
        fn level_of_is_affine(
            mu in proptest::collection::vec(small_rat(), 3),
            x in proptest::collection::vec(small_rat(), 2),
            y in proptest::collection::vec(small_rat(), 2),
        ) {
            let mut lm = LevelMapping::new();
            lm.insert("p", mu);
            let sum: Vec<Rational> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let zero = vec![Rational::zero(); 2];
            let lhs = level_of(&lm, "p", &x).unwrap() + level_of(&lm, "p", &y).unwrap()
                - level_of(&lm, "p", &zero).unwrap();
            prop_assert_eq!(lhs, level_of(&lm, "p", &sum).unwrap());
        }
    }
}
