//! Decision procedure for recurrence with affine level mappings.
//!
//! For a binary rule `p(x̃_p) ← c, q(x̃_q)` the implication
//! `c → |p| >= 1 + |q| ∧ |q| >= 0` holds iff the two LPs
//! `min μ̃·x̃` and `min μ̃'·x̃` over `c ∧ x_0 = 1` have optima `>= 1` and
//! `>= 0`. Their duals are linear in the unknown coefficients μ, so each
//! rule contributes two linear systems over `(μ, y)` and `(μ, z)`. The
//! program is alm-recurrent iff the conjunction of all of them is feasible.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use indexmap::IndexMap;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::binarize::binarize;
use crate::lp::{self, fm_project, normalize, LinearSystem};
use crate::model::{Domain, LevelMapping, LinearConstraint, LinearExpr, Origin, Program, Rational, Rule, Var};

/// Names for the variables of an [`AlmSystem`]; `Var(i)` is `names[i]`.
#[derive(Debug, Clone, Default)]
pub struct VarPool {
    names: Vec<String>,
}

impl VarPool {
    pub fn fresh(&mut self, name: String) -> Var {
        self.names.push(name);
        Var(self.names.len() - 1)
    }

    pub fn name(&self, v: Var) -> String {
        self.names.get(v.0).cloned().unwrap_or_else(|| v.to_string())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One column of `x̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalColumn {
    /// `x_0`, fixed to 1.
    One,
    Head(usize),
    Body(usize),
    /// Constraint variable occurring in no atom of the (binarized) rule.
    Extra(Var),
}

/// The primal side of a binary rule: `c ∧ x_0 = 1` as `A·x̃ >= b` plus the
/// symbolic objective vectors `μ̃` and `μ̃'`.
#[derive(Debug, Clone)]
pub struct RulePrimal {
    pub rule: usize,
    pub origin: Origin,
    /// `x̃` in layout order: `x_0`, head arguments, body arguments, extras.
    pub layout: Vec<PrimalColumn>,
    /// Rule-local variable for each layout entry; `x_0` is `Var(rule.vars.len())`.
    pub columns: Vec<Var>,
    pub system: LinearSystem,
    /// `μ̃ = (μ_{p,0} - μ_{q,0}, μ_{p,1..}, -μ_{q,1..}, 0..)`, one entry per column.
    pub mu_vec: Vec<LinearExpr>,
    /// `μ̃' = (μ_{q,0}, 0.., μ_{q,1..}, 0..)`.
    pub mu_vec_prime: Vec<LinearExpr>,
}

impl RulePrimal {
    /// Coefficient of row `i` at layout column `j`.
    pub fn a(&self, i: usize, j: usize) -> Rational {
        match self.system.column(self.columns[j]) {
            Some(c) => self.system.rows()[i].coeffs[c].clone(),
            None => Rational::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DualKind {
    /// `S_r^{p >= 1+q}`.
    DecreaseByOne,
    /// `S_r^{q >= 0}`.
    BodyNonNeg,
}

impl DualKind {
    pub fn bound(self) -> Rational {
        match self {
            DualKind::DecreaseByOne => Rational::one(),
            DualKind::BodyNonNeg => Rational::zero(),
        }
    }
}

/// `A^T·y = μ̃^T ∧ b^T·y >= bound ∧ y >= 0` for one rule.
#[derive(Debug, Clone)]
pub struct DualSystem {
    pub rule: usize,
    pub origin: Origin,
    pub kind: DualKind,
    /// One multiplier per primal row, in row order.
    pub duals: Vec<Var>,
    /// One equation per column of `x̃`.
    pub equations: Vec<LinearConstraint>,
    pub bound: LinearConstraint,
    /// μ unknowns mentioned by the equations.
    pub mu: Vec<Var>,
}

impl DualSystem {
    pub fn constraints(&self) -> Vec<LinearConstraint> {
        let mut cs = self.equations.clone();
        cs.push(self.bound.clone());
        cs
    }

    /// The system in `A·x >= b` form, duals made nonnegative.
    pub fn to_system(&self) -> LinearSystem {
        normalize(&self.constraints(), &self.duals)
    }

    /// Rows of [`to_system`](Self::to_system) without building it.
    pub fn row_count(&self) -> usize {
        2 * self.equations.len() + 1 + self.duals.len()
    }
}

/// `S_P`: every rule's two dual systems over shared μ unknowns.
#[derive(Debug, Clone, Default)]
pub struct AlmSystem {
    pub pool: VarPool,
    /// `μ_{p,0..n_p}` per predicate of Π_P.
    pub mu: IndexMap<String, Vec<Var>>,
    pub primals: Vec<RulePrimal>,
    pub systems: Vec<DualSystem>,
    /// Rules skipped because they are facts or their constraint is unsatisfiable.
    pub skipped: Vec<(usize, SkipReason)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    Fact,
    Unsatisfiable,
}

/// How feasibility of `S_P` is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveStrategy {
    /// One simplex run on the whole of `S_P`.
    Direct,
    /// Project each dual system onto its μ unknowns, then solve the μ-only
    /// system per connected component.
    #[default]
    Decomposed,
}

impl AlmSystem {
    pub fn mu_vars(&self) -> Vec<Var> {
        self.mu.values().flatten().copied().collect()
    }

    pub fn name(&self, v: Var) -> String {
        self.pool.name(v)
    }

    pub fn row_count(&self) -> usize {
        self.systems.iter().map(DualSystem::row_count).sum()
    }

    /// `S_P` with one column per pool variable, in pool order.
    pub fn to_system(&self) -> LinearSystem {
        let mut sys = LinearSystem::new((0..self.pool.len()).map(Var).collect());
        for s in &self.systems {
            sys.conjoin(&s.to_system());
        }
        sys
    }

    /// Some point of `S_P`, or `None` when it is infeasible.
    pub fn solve(&self, strategy: SolveStrategy) -> Option<Vec<Rational>> {
        match strategy {
            SolveStrategy::Direct => lp::find_point(&self.to_system()),
            SolveStrategy::Decomposed => {
                let mu = self.solve_mu()?;
                self.complete_point(&mu)
            }
        }
    }

    /// Values for the μ unknowns only (indexed by pool variable; other
    /// entries are zero), or `None` when `S_P` is infeasible.
    pub fn solve_mu(&self) -> Option<Vec<Rational>> {
        let projected = self.project_each()?;
        let mut point = vec![Rational::zero(); self.pool.len()];
        for component in self.components(&projected) {
            let mut sys = LinearSystem::new(Vec::new());
            let mut vars: Vec<Var> = Vec::new();
            for &i in &component {
                for &v in projected[i].vars() {
                    if sys.column(v).is_none() {
                        vars.push(v);
                    }
                    sys.ensure_var(v);
                }
                sys.conjoin(&projected[i]);
            }
            let sys = lp::simplify(&sys);
            let values = lp::find_point(&sys)?;
            for (v, x) in sys.vars().iter().zip(values) {
                point[v.0] = x;
            }
        }
        Some(point)
    }

    /// Each dual system projected onto its μ unknowns; `None` if any is empty.
    fn project_each(&self) -> Option<Vec<LinearSystem>> {
        let projected: Vec<LinearSystem> = self
            .systems
            .par_iter()
            .map(|s| fm_project(&s.to_system(), &s.mu))
            .collect();
        if projected.iter().any(|p| p.rows().iter().any(|r| r.is_trivial() && r.rhs > Rational::zero())) {
            return None;
        }
        Some(projected)
    }

    /// Groups projected systems that share μ unknowns.
    fn components(&self, projected: &[LinearSystem]) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.pool.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for p in projected {
            let vars: Vec<Var> = p.vars().to_vec();
            for w in vars.windows(2) {
                let (a, b) = (find(&mut parent, w[0].0), find(&mut parent, w[1].0));
                parent[a] = b;
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in projected.iter().enumerate() {
            if p.num_rows() == 0 {
                continue;
            }
            let root = match p.vars().first() {
                Some(v) => find(&mut parent, v.0),
                None => usize::MAX,
            };
            groups.entry(root).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Extends μ values to a full point of `S_P` by solving each dual system
    /// with μ fixed.
    pub fn complete_point(&self, mu: &[Rational]) -> Option<Vec<Rational>> {
        let parts: Option<Vec<Vec<(Var, Rational)>>> = self
            .systems
            .par_iter()
            .map(|s| {
                let fixed: Vec<LinearConstraint> = s
                    .constraints()
                    .iter()
                    .map(|c| {
                        let subst = |e: &LinearExpr| {
                            let mut out = LinearExpr::constant(e.constant_term().clone());
                            for (v, k) in e.terms() {
                                if s.mu.contains(&v) {
                                    out.add_constant(&(k * &mu[v.0]));
                                } else {
                                    out.add_term(v, k.clone());
                                }
                            }
                            out
                        };
                        LinearConstraint::new(subst(&c.lhs), c.relation, subst(&c.rhs))
                    })
                    .collect();
                let mut sys = normalize(&fixed, &s.duals);
                for &d in &s.duals {
                    sys.ensure_var(d);
                }
                let values = lp::find_point(&sys)?;
                Some(sys.vars().iter().copied().zip(values).collect())
            })
            .collect();
        let mut point = vec![Rational::zero(); self.pool.len()];
        for v in self.mu_vars() {
            point[v.0] = mu[v.0].clone();
        }
        for (v, x) in parts?.into_iter().flatten() {
            point[v.0] = x;
        }
        Some(point)
    }

    /// Projection of `S_P` onto the μ unknowns. Dual variables are local to
    /// one dual system, so projecting each system separately and conjoining
    /// gives the same set.
    pub fn project(&self) -> MuProjection {
        let keep = self.mu_vars();
        let system = match self.project_each() {
            None => {
                let mut s = LinearSystem::new(keep.clone());
                s.push_row(vec![Rational::zero(); keep.len()], Rational::one());
                s
            }
            Some(parts) => {
                let mut all = LinearSystem::new(keep.clone());
                for p in &parts {
                    all.conjoin(p);
                }
                fm_project(&lp::simplify(&all), &keep)
            }
        };
        MuProjection { system, names: keep.iter().map(|v| (*v, self.name(*v))).collect() }
    }

    /// Reads the level mapping off a point of `S_P` (indexed by pool variable).
    pub fn extract_witness(&self, point: &[Rational]) -> LevelMapping {
        let mut lm = LevelMapping::new();
        for (p, vars) in &self.mu {
            lm.insert(p.clone(), vars.iter().map(|v| point[v.0].clone()).collect());
        }
        lm
    }
}

/// Constraints on the μ unknowns, with their display names.
#[derive(Debug, Clone)]
pub struct MuProjection {
    pub system: LinearSystem,
    pub names: HashMap<Var, String>,
}

impl MuProjection {
    pub fn name(&self, v: Var) -> String {
        self.names.get(&v).cloned().unwrap_or_else(|| v.to_string())
    }

    /// Each row rendered as `Σ coeff·mu[p,i] >= rhs`.
    pub fn lines(&self) -> Vec<String> {
        let names = |v: Var| self.name(v);
        self.system.display_with(&names).to_string().lines().map(str::to_string).collect()
    }
}

impl fmt::Display for MuProjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.lines() {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

pub fn mu_name(predicate: &str, i: usize) -> String {
    format!("mu[{predicate},{i}]")
}

/// Allocates `μ_{p,0..n_p}` for every predicate of `program`.
pub fn mu_layout(program: &Program, pool: &mut VarPool) -> IndexMap<String, Vec<Var>> {
    program
        .predicates
        .iter()
        .map(|(p, &n)| (p.clone(), (0..=n).map(|i| pool.fresh(mu_name(p, i))).collect()))
        .collect()
}

/// Variables of a rule that the domain forces to be nonnegative.
pub fn domain_nonneg(rule: &Rule, domain: Domain) -> Vec<Var> {
    if domain.nonnegative() {
        (0..rule.vars.len()).map(Var).collect()
    } else {
        Vec::new()
    }
}

/// Whether the rule's constraint has a solution in the domain (rationally).
pub fn rule_satisfiable(rule: &Rule, domain: Domain) -> bool {
    lp::feasible(&normalize(&rule.constraints, &domain_nonneg(rule, domain)))
}

/// Builds the primal side of binary rule `index`.
pub fn rule_primal(index: usize, rule: &Rule, mu: &IndexMap<String, Vec<Var>>, domain: Domain) -> RulePrimal {
    assert_eq!(rule.body.len(), 1, "rule_primal expects a binary rule with one body atom");
    let body = &rule.body[0];
    let x0 = Var(rule.vars.len());
    let mut layout = vec![PrimalColumn::One];
    let mut columns = vec![x0];
    for (i, v) in rule.head.args.iter().enumerate() {
        layout.push(PrimalColumn::Head(i));
        columns.push(*v);
    }
    for (i, v) in body.args.iter().enumerate() {
        layout.push(PrimalColumn::Body(i));
        columns.push(*v);
    }
    for v in (0..rule.vars.len()).map(Var) {
        if !columns.contains(&v) {
            layout.push(PrimalColumn::Extra(v));
            columns.push(v);
        }
    }
    let mut constraints = rule.constraints.clone();
    constraints.push(LinearConstraint::eq(LinearExpr::var(x0), LinearExpr::constant(Rational::one())));
    let system = normalize(&constraints, &domain_nonneg(rule, domain));

    let mp = &mu[&rule.head.predicate];
    let mq = &mu[&body.predicate];
    let var = |v: Var| LinearExpr::var(v);
    let neg = |v: Var| LinearExpr::term(v, -Rational::one());
    let mut mu_vec = Vec::with_capacity(layout.len());
    let mut mu_vec_prime = Vec::with_capacity(layout.len());
    for col in &layout {
        let (a, b) = match *col {
            PrimalColumn::One => (var(mp[0]).minus(&var(mq[0])), var(mq[0])),
            PrimalColumn::Head(i) => (var(mp[i + 1]), LinearExpr::zero()),
            PrimalColumn::Body(i) => (neg(mq[i + 1]), var(mq[i + 1])),
            PrimalColumn::Extra(_) => (LinearExpr::zero(), LinearExpr::zero()),
        };
        mu_vec.push(a);
        mu_vec_prime.push(b);
    }
    RulePrimal { rule: index, origin: rule.origin, layout, columns, system, mu_vec, mu_vec_prime }
}

/// Dualizes one objective of `primal` with fresh multipliers named `prefix[rule,i]`.
pub fn dual_system(primal: &RulePrimal, kind: DualKind, pool: &mut VarPool) -> DualSystem {
    let prefix = match kind {
        DualKind::DecreaseByOne => "y",
        DualKind::BodyNonNeg => "z",
    };
    let rows = primal.system.rows();
    let duals: Vec<Var> = (0..rows.len())
        .map(|i| pool.fresh(format!("{prefix}[r{},{}]", primal.rule, i + 1)))
        .collect();
    let target = match kind {
        DualKind::DecreaseByOne => &primal.mu_vec,
        DualKind::BodyNonNeg => &primal.mu_vec_prime,
    };
    let equations = (0..primal.columns.len())
        .map(|j| {
            let lhs = LinearExpr::from_terms(duals.iter().enumerate().map(|(i, y)| (*y, primal.a(i, j))), Rational::zero());
            LinearConstraint::eq(lhs, target[j].clone())
        })
        .collect();
    let objective = LinearExpr::from_terms(duals.iter().zip(rows).map(|(y, r)| (*y, r.rhs.clone())), Rational::zero());
    let bound = LinearConstraint::geq(objective, LinearExpr::constant(kind.bound()));
    let mut mu: Vec<Var> = target.iter().flat_map(|e| e.vars()).collect();
    mu.sort();
    mu.dedup();
    DualSystem { rule: primal.rule, origin: primal.origin, kind, duals, equations, bound, mu }
}

/// `(S_r^{p>=1+q}, S_r^{q>=0})` for binary rule `index`, or `None` for facts
/// and rules whose constraint has no solution in the domain.
pub fn build_rule_systems(
    index: usize,
    rule: &Rule,
    mu: &IndexMap<String, Vec<Var>>,
    domain: Domain,
    pool: &mut VarPool,
) -> Option<(DualSystem, DualSystem)> {
    if rule.is_fact() || !rule_satisfiable(rule, domain) {
        return None;
    }
    let primal = rule_primal(index, rule, mu, domain);
    let dec = dual_system(&primal, DualKind::DecreaseByOne, pool);
    let nonneg = dual_system(&primal, DualKind::BodyNonNeg, pool);
    Some((dec, nonneg))
}

/// Assembles `S_P` for a binary program.
pub fn assemble(program: &Program, domain: Domain) -> AlmSystem {
    assert!(program.is_binary(), "assemble expects a binary program");
    let mut alm = AlmSystem::default();
    alm.mu = mu_layout(program, &mut alm.pool);
    for (i, rule) in program.rules.iter().enumerate() {
        if rule.is_fact() {
            alm.skipped.push((i, SkipReason::Fact));
            continue;
        }
        if !rule_satisfiable(rule, domain) {
            alm.skipped.push((i, SkipReason::Unsatisfiable));
            continue;
        }
        let primal = rule_primal(i, rule, &alm.mu, domain);
        let dec = dual_system(&primal, DualKind::DecreaseByOne, &mut alm.pool);
        let nonneg = dual_system(&primal, DualKind::BodyNonNeg, &mut alm.pool);
        alm.primals.push(primal);
        alm.systems.push(dec);
        alm.systems.push(nonneg);
    }
    alm
}

#[derive(Debug, Clone)]
pub enum Verdict {
    AlmRecurrent { witness: LevelMapping, projection: Option<MuProjection> },
    NotAlmRecurrent,
    /// Domain `n`: a witness exists, which proves recurrence over ℕ.
    SoundYes { witness: LevelMapping, projection: Option<MuProjection> },
    /// Domain `n`: no affine witness; the method is incomplete over ℕ.
    Unknown,
}

impl Verdict {
    pub fn witness(&self) -> Option<&LevelMapping> {
        match self {
            Verdict::AlmRecurrent { witness, .. } | Verdict::SoundYes { witness, .. } => Some(witness),
            _ => None,
        }
    }

    pub fn projection(&self) -> Option<&MuProjection> {
        match self {
            Verdict::AlmRecurrent { projection, .. } | Verdict::SoundYes { projection, .. } => projection.as_ref(),
            _ => None,
        }
    }

    pub fn is_affirmative(&self) -> bool {
        self.witness().is_some()
    }

    pub fn kind(&self) -> VerdictKind {
        match self {
            Verdict::AlmRecurrent { .. } => VerdictKind::AlmRecurrent,
            Verdict::NotAlmRecurrent => VerdictKind::NotAlmRecurrent,
            Verdict::SoundYes { .. } => VerdictKind::SoundYes,
            Verdict::Unknown => VerdictKind::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictKind {
    AlmRecurrent,
    NotAlmRecurrent,
    SoundYes,
    Unknown,
}

impl VerdictKind {
    pub fn label(self) -> &'static str {
        match self {
            VerdictKind::AlmRecurrent => "alm-recurrent",
            VerdictKind::NotAlmRecurrent => "not-alm-recurrent",
            VerdictKind::SoundYes => "sound-yes",
            VerdictKind::Unknown => "unknown",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything produced while deciding a program.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub domain: Domain,
    pub binary: Program,
    pub system: AlmSystem,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecideOptions {
    pub want_projection: bool,
    pub strategy: SolveStrategy,
}

/// Decides alm-recurrence of `program` over `domain`, binarizing first if needed.
pub fn decide(program: &Program, domain: Domain, want_projection: bool) -> Verdict {
    analyze(program, domain, DecideOptions { want_projection, ..Default::default() }).verdict
}

pub fn analyze(program: &Program, domain: Domain, options: DecideOptions) -> Analysis {
    let binary = if program.is_binary() { program.clone() } else { binarize(program) };
    let system = assemble(&binary, domain);
    let mu = match options.strategy {
        SolveStrategy::Direct => system.solve(SolveStrategy::Direct),
        SolveStrategy::Decomposed => system.solve_mu(),
    };
    let verdict = match mu {
        None if domain.is_naturals() => Verdict::Unknown,
        None => Verdict::NotAlmRecurrent,
        Some(point) => {
            let witness = system.extract_witness(&point);
            let projection = options.want_projection.then(|| system.project());
            if domain.is_naturals() {
                Verdict::SoundYes { witness, projection }
            } else {
                Verdict::AlmRecurrent { witness, projection }
            }
        }
    };
    Analysis { domain, binary, system, verdict }
}
