//! Primal-side check that a concrete level mapping makes a program recurrent.
//!
//! For a binary rule `p(x̃_p) ← c, q(x̃_q)` the mapping is accepted iff
//! `min (|p(x̃_p)| - |q(x̃_q)|) >= 1` and `min |q(x̃_q)| >= 0` over the
//! solutions of `c` (plus nonnegativity for the nonnegative domains).

use std::fmt;

use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::alm::{domain_nonneg, SkipReason};
use crate::binarize::binarize;
use crate::lp::{self, normalize, LpOutcome};
use crate::model::{Domain, LevelMapping, LinearExpr, ModelError, Origin, Program, Rational, Rule};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("level mapping does not fit the program: {0}")]
    Mapping(#[from] ModelError),
}

/// A point of a rule's constraint, as `(variable name, value)` pairs.
pub type NamedPoint = Vec<(String, Rational)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Minimum {
    Optimal { value: Rational, point: NamedPoint },
    /// The objective decreases without bound from `point` along `ray`.
    Unbounded { point: NamedPoint, ray: NamedPoint },
}

/// One minimisation and the bound it has to reach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectiveCheck {
    pub objective: String,
    pub required: Rational,
    pub minimum: Minimum,
}

impl ObjectiveCheck {
    pub fn passed(&self) -> bool {
        match &self.minimum {
            Minimum::Optimal { value, .. } => *value >= self.required,
            Minimum::Unbounded { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum RuleStatus {
    Vacuous(SkipReason),
    Checked { decrease: ObjectiveCheck, body_nonneg: ObjectiveCheck },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCheck {
    /// Index in the binarized program.
    pub rule: usize,
    pub origin: Origin,
    pub text: String,
    pub status: RuleStatus,
}

impl RuleCheck {
    pub fn passed(&self) -> bool {
        match &self.status {
            RuleStatus::Vacuous(_) => true,
            RuleStatus::Checked { decrease, body_nonneg } => decrease.passed() && body_nonneg.passed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    /// Required decrease from head to body; always 1.
    pub epsilon: Rational,
    pub rules: Vec<RuleCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rules.iter().all(RuleCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RuleCheck> {
        self.rules.iter().filter(|r| !r.passed())
    }
}

fn named(rule: &Rule, vars: &[crate::model::Var], values: &[Rational]) -> NamedPoint {
    vars.iter().zip(values).map(|(v, x)| (rule.var_name(*v), x.clone())).collect()
}

fn check_objective(rule: &Rule, domain: Domain, objective: &LinearExpr, required: Rational) -> ObjectiveCheck {
    let sys = normalize(&rule.constraints, &domain_nonneg(rule, domain));
    let mut cols = sys.vars().to_vec();
    for v in objective.vars() {
        if !cols.contains(&v) {
            cols.push(v);
        }
    }
    // Objective variables absent from the constraint are free columns.
    let mut full = crate::lp::LinearSystem::new(cols.clone());
    full.conjoin(&sys);
    let minimum = match lp::minimize(&full, objective) {
        LpOutcome::Optimal { value, point } => Minimum::Optimal { value, point: named(rule, &cols, &point) },
        LpOutcome::Unbounded { point, ray } => {
            Minimum::Unbounded { point: named(rule, &cols, &point), ray: named(rule, &cols, &ray) }
        }
        LpOutcome::Infeasible => unreachable!("satisfiability is checked before minimising"),
    };
    let names = |v| rule.var_name(v);
    ObjectiveCheck { objective: objective.display_with(&names).to_string(), required, minimum }
}

fn check_rule(index: usize, rule: &Rule, lm: &LevelMapping, domain: Domain) -> Result<RuleCheck, ModelError> {
    let head = lm.level_expr(&rule.head)?;
    let body = rule.body.first().map(|a| lm.level_expr(a)).transpose()?;
    let sat = lp::feasible(&normalize(&rule.constraints, &domain_nonneg(rule, domain)));
    let status = match body {
        None => RuleStatus::Vacuous(SkipReason::Fact),
        Some(_) if !sat => RuleStatus::Vacuous(SkipReason::Unsatisfiable),
        Some(body) => RuleStatus::Checked {
            decrease: check_objective(rule, domain, &head.minus(&body), Rational::one()),
            body_nonneg: check_objective(rule, domain, &body, Rational::zero()),
        },
    };
    Ok(RuleCheck { rule: index, origin: rule.origin, text: rule.to_string(), status })
}

/// Checks every rule of `program` (binarized first if needed) against `lm`.
pub fn verify(program: &Program, lm: &LevelMapping, domain: Domain) -> Result<VerifyReport, VerifyError> {
    lm.covers(program)?;
    let binary = if program.is_binary() { program.clone() } else { binarize(program) };
    let rules = binary
        .rules
        .par_iter()
        .enumerate()
        .map(|(i, r)| check_rule(i, r, lm, domain))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyReport { epsilon: Rational::one(), rules })
}

fn fmt_point(f: &mut fmt::Formatter<'_>, p: &NamedPoint) -> fmt::Result {
    let parts: Vec<String> = p.iter().map(|(n, x)| format!("{n}={x}")).collect();
    write!(f, "{{{}}}", parts.join(", "))
}

impl fmt::Display for Minimum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Minimum::Optimal { value, point } => {
                write!(f, "min {value} at ")?;
                fmt_point(f, point)
            }
            Minimum::Unbounded { point, ray } => {
                write!(f, "unbounded from ")?;
                fmt_point(f, point)?;
                write!(f, " along ")?;
                fmt_point(f, ray)
            }
        }
    }
}

impl fmt::Display for RuleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "pass" } else { "FAIL" };
        write!(f, "rule {} [{verdict}] {}", self.rule, self.text)?;
        match &self.status {
            RuleStatus::Vacuous(SkipReason::Fact) => write!(f, "  (fact)"),
            RuleStatus::Vacuous(SkipReason::Unsatisfiable) => write!(f, "  (constraint unsatisfiable)"),
            RuleStatus::Checked { decrease, body_nonneg } => {
                write!(f, "\n    head - body >= 1: {}", decrease.minimum)?;
                write!(f, "\n    body >= 0: {}", body_nonneg.minimum)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::int;
    use crate::parser::parse_program;

    const EXAMPLE_72: &str = "p(x) :- x = 2.\np(x) :- 0 = 1.\np(x) :- 72 >= x, y = x + 1, p(y).";

    fn mapping(c0: i64, c1: i64) -> LevelMapping {
        let mut lm = LevelMapping::new();
        lm.insert("p", vec![int(c0), int(c1)]);
        lm
    }

    #[test]
    fn seventy_three_minus_x_passes() {
        let p = parse_program(EXAMPLE_72).unwrap();
        let report = verify(&p, &mapping(73, -1), Domain::Q).unwrap();
        assert!(report.passed());
        assert_eq!(report.epsilon, int(1));
        assert_eq!(report.rules[0].status, RuleStatus::Vacuous(SkipReason::Fact));
        assert_eq!(report.rules[1].status, RuleStatus::Vacuous(SkipReason::Fact));
        let RuleStatus::Checked { decrease, body_nonneg } = &report.rules[2].status else { panic!() };
        assert_eq!(decrease.minimum, Minimum::Optimal { value: int(1), point: decrease_point(decrease) });
        match &body_nonneg.minimum {
            Minimum::Optimal { value, .. } => assert_eq!(*value, int(0)),
            other => panic!("{other}"),
        }
    }

    fn decrease_point(c: &ObjectiveCheck) -> NamedPoint {
        match &c.minimum {
            Minimum::Optimal { point, .. } => point.clone(),
            Minimum::Unbounded { point, .. } => point.clone(),
        }
    }

    #[test]
    fn identity_mapping_fails() {
        let p = parse_program(EXAMPLE_72).unwrap();
        let report = verify(&p, &mapping(0, 1), Domain::Q).unwrap();
        assert!(!report.passed());
        let failed: Vec<usize> = report.failures().map(|r| r.rule).collect();
        assert_eq!(failed, vec![2]);
        let RuleStatus::Checked { decrease, .. } = &report.rules[2].status else { panic!() };
        assert_eq!(decrease.minimum, Minimum::Optimal { value: int(-1), point: decrease_point(decrease) });
    }

    #[test]
    fn unbounded_is_reported() {
        let p = parse_program("p(x) :- y = x - 1, p(y).").unwrap();
        let report = verify(&p, &mapping(0, 1), Domain::Q).unwrap();
        let RuleStatus::Checked { body_nonneg, .. } = &report.rules[0].status else { panic!() };
        assert!(matches!(body_nonneg.minimum, Minimum::Unbounded { .. }));
        assert!(!report.passed());
        // Over q+ the same mapping works.
        assert!(verify(&p, &mapping(0, 1), Domain::QPlus).unwrap().passed());
    }

    #[test]
    fn unsatisfiable_rule_is_vacuous() {
        let p = parse_program("p(x) :- x >= 1, x <= 0, p(x2), x2 = x.").unwrap();
        let report = verify(&p, &mapping(0, 0), Domain::Q).unwrap();
        assert_eq!(report.rules[0].status, RuleStatus::Vacuous(SkipReason::Unsatisfiable));
        assert!(report.passed());
    }

    #[test]
    fn missing_predicate() {
        let p = parse_program("p(x) :- y = x - 1, q(y).\nq(x) :- x = 0.").unwrap();
        assert!(matches!(verify(&p, &mapping(0, 1), Domain::Q), Err(VerifyError::Mapping(_))));
    }

    #[test]
    fn doubling_keeps_passing() {
        let p = parse_program(EXAMPLE_72).unwrap();
        let lm = mapping(73, -1).scaled(&int(2));
        assert!(verify(&p, &lm, Domain::Q).unwrap().passed());
    }
}
