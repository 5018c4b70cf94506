//! Per-file report, serialised as JSON or printed as text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use almterm_core::alm::{Analysis, MuProjection};
use almterm_core::derive::BoundReport;
use almterm_core::model::{LevelMapping, LinearExpr, Rational, Var};
use almterm_core::parser::ParseError;
use almterm_core::verify::{Minimum, ObjectiveCheck, RuleCheck, RuleStatus, VerifyReport};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Rationals are written as `"n"` or `"n/d"` in lowest terms.
pub fn rational(q: &Rational) -> String {
    q.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub file: String,
    pub domain: String,
    /// `alm-recurrent`, `not-alm-recurrent`, `sound-yes` or `unknown`;
    /// absent when the input could not be read or parsed.
    pub verdict: Option<String>,
    pub epsilon: String,
    pub witness: Option<Vec<WitnessEntry>>,
    pub projection: Option<Vec<ProjectionRow>>,
    pub rules: Vec<RuleReport>,
    pub sampling: Option<SamplingReport>,
    pub stats: Option<Stats>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessEntry {
    pub predicate: String,
    /// `μ_{p,0}, μ_{p,1}, …`
    pub coefficients: Vec<String>,
    /// The mapping as an expression in `x1, …, xn`.
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionRow {
    /// Row is `Σ coefficients[name]·name >= rhs`.
    pub coefficients: BTreeMap<String, String>,
    pub rhs: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleReport {
    /// Index in the binarized program.
    pub index: usize,
    pub source_rule: usize,
    /// Which body atom of the source rule this binary rule keeps, if it was split.
    pub body_index: Option<usize>,
    pub text: String,
    /// `pass`, `fail`, `fact`, `unsatisfiable` or `not-checked`.
    pub status: String,
    pub checks: Vec<ObjectiveReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    /// `decrease` (head − body ≥ 1) or `body-nonneg` (body ≥ 0).
    pub name: String,
    pub objective: String,
    pub required: String,
    /// Absent when the objective is unbounded below.
    pub minimum: Option<String>,
    pub point: BTreeMap<String, String>,
    pub ray: Option<BTreeMap<String, String>>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub samples: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub violations: usize,
    /// Derivations stopped by `max_steps` before reaching their bound.
    pub inconclusive: usize,
    pub longest: usize,
    pub counting: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub binary_rules: usize,
    pub dual_systems: usize,
    pub rows: usize,
    pub mu_unknowns: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub message: String,
    pub line: Option<usize>,
    pub col_start: Option<usize>,
    pub col_end: Option<usize>,
}

impl Report {
    pub fn empty(file: &str, domain: &str) -> Self {
        Report {
            version: SCHEMA_VERSION,
            file: file.to_string(),
            domain: domain.to_string(),
            verdict: None,
            epsilon: "1".to_string(),
            witness: None,
            projection: None,
            rules: Vec::new(),
            sampling: None,
            stats: None,
            notes: Vec::new(),
            error: None,
        }
    }

    pub fn io_error(file: &str, domain: &str, message: String) -> Self {
        let mut r = Report::empty(file, domain);
        r.error = Some(ErrorReport { message, line: None, col_start: None, col_end: None });
        r
    }

    pub fn parse_error(file: &str, domain: &str, e: &ParseError) -> Self {
        let mut r = Report::empty(file, domain);
        r.error = Some(ErrorReport {
            message: e.to_string(),
            line: Some(e.span.line),
            col_start: Some(e.span.col_start),
            col_end: Some(e.span.col_end),
        });
        r
    }

    /// 0 affirmative, 1 negative, 2 input error.
    pub fn exit_code(&self) -> i32 {
        match self.verdict.as_deref() {
            Some("alm-recurrent") | Some("sound-yes") => 0,
            Some(_) => 1,
            None => 2,
        }
    }
}

pub fn witness_entries(lm: &LevelMapping) -> Vec<WitnessEntry> {
    lm.iter()
        .map(|(p, c)| {
            let expr = LinearExpr::from_terms(c[1..].iter().enumerate().map(|(i, m)| (Var(i), m.clone())), c[0].clone());
            let names = |v: Var| format!("x{}", v.0 + 1);
            WitnessEntry {
                predicate: p.to_string(),
                coefficients: c.iter().map(rational).collect(),
                level: expr.display_with(&names).to_string(),
            }
        })
        .collect()
}

pub fn projection_rows(p: &MuProjection) -> Vec<ProjectionRow> {
    let lines = p.lines();
    p.system
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| ProjectionRow {
            coefficients: p
                .system
                .vars()
                .iter()
                .zip(&row.coeffs)
                .filter(|(_, c)| **c != Rational::from_integer(0.into()))
                .map(|(v, c)| (p.name(*v), rational(c)))
                .collect(),
            rhs: rational(&row.rhs),
            text: lines.get(i).cloned().unwrap_or_default(),
        })
        .collect()
}

fn named_map(point: &[(String, Rational)]) -> BTreeMap<String, String> {
    point.iter().map(|(n, x)| (n.clone(), rational(x))).collect()
}

fn objective_report(name: &str, c: &ObjectiveCheck) -> ObjectiveReport {
    let (minimum, point, ray) = match &c.minimum {
        Minimum::Optimal { value, point } => (Some(rational(value)), named_map(point), None),
        Minimum::Unbounded { point, ray } => (None, named_map(point), Some(named_map(ray))),
    };
    ObjectiveReport {
        name: name.to_string(),
        objective: c.objective.clone(),
        required: rational(&c.required),
        minimum,
        point,
        ray,
        passed: c.passed(),
    }
}

fn checked_rule(c: &RuleCheck) -> RuleReport {
    let (status, checks) = match &c.status {
        RuleStatus::Vacuous(almterm_core::alm::SkipReason::Fact) => ("fact", Vec::new()),
        RuleStatus::Vacuous(almterm_core::alm::SkipReason::Unsatisfiable) => ("unsatisfiable", Vec::new()),
        RuleStatus::Checked { decrease, body_nonneg } => (
            if c.passed() { "pass" } else { "fail" },
            vec![objective_report("decrease", decrease), objective_report("body-nonneg", body_nonneg)],
        ),
    };
    RuleReport {
        index: c.rule,
        source_rule: c.origin.source_rule,
        body_index: c.origin.body_index,
        text: c.text.clone(),
        status: status.to_string(),
        checks,
    }
}

/// Rule list with provenance; verifier results when available.
pub fn rule_reports(analysis: &Analysis, verified: Option<&VerifyReport>) -> Vec<RuleReport> {
    match verified {
        Some(v) => v.rules.iter().map(checked_rule).collect(),
        None => analysis
            .binary
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| RuleReport {
                index: i,
                source_rule: r.origin.source_rule,
                body_index: r.origin.body_index,
                text: r.to_string(),
                status: "not-checked".to_string(),
                checks: Vec::new(),
            })
            .collect(),
    }
}

pub fn stats(analysis: &Analysis) -> Stats {
    Stats {
        binary_rules: analysis.binary.rules.len(),
        dual_systems: analysis.system.systems.len(),
        rows: analysis.system.row_count(),
        mu_unknowns: analysis.system.mu_vars().len(),
    }
}

pub fn sampling_report(b: &BoundReport, seed: u64, max_steps: usize) -> SamplingReport {
    SamplingReport {
        samples: b.samples.len(),
        seed,
        max_steps,
        violations: b.violations,
        inconclusive: b.samples.iter().filter(|s| s.capped).count(),
        longest: b.samples.iter().map(|s| s.steps).max().unwrap_or(0),
        counting: b.counting.to_string(),
    }
}

/// Human-readable rendering.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    if let Some(e) = &r.error {
        let _ = writeln!(out, "{}: error: {}", r.file, e.message);
        return out;
    }
    let _ = writeln!(out, "{}: {} (domain {})", r.file, r.verdict.as_deref().unwrap_or("?"), r.domain);
    if let Some(w) = &r.witness {
        let _ = writeln!(out, "  witness:");
        for e in w {
            let args: Vec<String> = (1..e.coefficients.len()).map(|i| format!("x{i}")).collect();
            let _ = writeln!(out, "    |{}({})| = {}", e.predicate, args.join(", "), e.level);
        }
    }
    if let Some(p) = &r.projection {
        let _ = writeln!(out, "  projection onto mu:");
        for row in p {
            let _ = writeln!(out, "    {}", row.text);
        }
    }
    if r.rules.iter().any(|x| x.status != "not-checked") {
        let _ = writeln!(out, "  rules (epsilon = {}):", r.epsilon);
        for rule in &r.rules {
            let origin = match rule.body_index {
                Some(b) => format!("from rule {} atom {}", rule.source_rule, b),
                None => format!("rule {}", rule.source_rule),
            };
            let _ = writeln!(out, "    [{}] {} ({origin})", rule.status, rule.text);
            for c in rule.checks.iter().filter(|c| !c.passed) {
                let _ = match (&c.minimum, &c.ray) {
                    (Some(m), _) => writeln!(out, "      {} >= {} fails: min {m} at {:?}", c.objective, c.required, c.point),
                    (None, Some(ray)) => {
                        writeln!(out, "      {} >= {} fails: unbounded along {:?} from {:?}", c.objective, c.required, ray, c.point)
                    }
                    (None, None) => Ok(()),
                };
            }
        }
    }
    if let Some(s) = &r.sampling {
        let _ = writeln!(
            out,
            "  sampling: {} derivations (seed {}, max {} steps), {} violations, {} inconclusive, longest {}",
            s.samples, s.seed, s.max_steps, s.violations, s.inconclusive, s.longest
        );
    }
    for n in &r.notes {
        let _ = writeln!(out, "  note: {n}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use almterm_core::model::{rat, Domain};
    use almterm_core::parser::parse_program;

    #[test]
    fn json_round_trip_is_lossless() {
        let p = parse_program("p(x) :- 72 >= x, 2*y = 2*x + 1, p(y).").unwrap();
        let a = analyze_for_test(&p);
        let mut r = Report::empty("t.clp", "q");
        r.verdict = Some(a.verdict.kind().label().to_string());
        r.witness = a.verdict.witness().map(witness_entries);
        r.projection = a.verdict.projection().map(projection_rows);
        r.rules = rule_reports(&a, None);
        r.stats = Some(stats(&a));
        let text = serde_json::to_string(&r).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        for e in back.witness.unwrap() {
            for c in e.coefficients {
                assert!(almterm_core::model::parse_rational(&c).is_some(), "{c}");
            }
        }
    }

    fn analyze_for_test(p: &almterm_core::model::Program) -> Analysis {
        almterm_core::alm::analyze(
            p,
            Domain::Q,
            almterm_core::alm::DecideOptions { want_projection: true, ..Default::default() },
        )
    }

    #[test]
    fn rationals_as_strings() {
        assert_eq!(rational(&rat(-3, 6)), "-1/2");
        assert_eq!(rational(&rat(4, 2)), "2");
    }
}
