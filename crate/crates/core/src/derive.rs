//! Operational semantics on ground start states.
//!
//! A state is a goal (list of atoms) and a constraint store. One step
//! selects an atom, renames a rule apart and either rewrites the goal or,
//! when the extended store is unsatisfiable, moves to the failed state.
//! Only the start atom is ground; later bindings stay symbolic in the store.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::alm::domain_nonneg;
use crate::lp::{self, fm_project, normalize, LinearSystem, LpOutcome};
use crate::model::{floor, level_of, Atom, Domain, LevelMapping, LinearConstraint, LinearExpr, ModelError, Program, Rational, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeriveError {
    #[error("no rule defines `{0}`; the derivation flounders")]
    Flounder(String),
    #[error("the goal is empty")]
    EmptyGoal,
    #[error("the store is already false")]
    Failed,
    #[error("`{predicate}` expects {expected} arguments, got {found}")]
    Arity { predicate: String, expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub enum Store {
    Sat(LinearSystem),
    False,
}

#[derive(Debug, Clone)]
pub struct DerivationState {
    pub goal: Vec<Atom>,
    pub store: Store,
    /// Name of each state variable; `Var(i)` is `names[i]`.
    pub names: Vec<String>,
    /// Number of rule applications so far.
    pub steps: usize,
}

impl DerivationState {
    /// `⟨p(a_1, …, a_n) ‖ true⟩`, with the arguments bound through the store.
    pub fn ground(predicate: &str, args: &[Rational]) -> Self {
        let names: Vec<String> = (0..args.len()).map(|i| format!("a{i}")).collect();
        let vars: Vec<Var> = (0..args.len()).map(Var).collect();
        let mut store = LinearSystem::new(vars.clone());
        for (v, a) in vars.iter().zip(args) {
            store.push_constraint(&LinearConstraint::eq(LinearExpr::var(*v), LinearExpr::constant(a.clone())));
        }
        Self { goal: vec![Atom::new(predicate, vars)], store: Store::Sat(store), names, steps: 0 }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.store, Store::False)
    }

    pub fn is_success(&self) -> bool {
        self.goal.is_empty() && !self.is_failed()
    }

    pub fn is_final(&self) -> bool {
        self.goal.is_empty()
    }

    pub fn name(&self, v: Var) -> String {
        self.names.get(v.0).cloned().unwrap_or_else(|| v.to_string())
    }

    /// Store rows as `expr >= 0` constraints; `None` for the false store.
    pub fn constraints(&self) -> Option<Vec<LinearConstraint>> {
        match &self.store {
            Store::False => None,
            Store::Sat(s) => Some(
                s.row_exprs()
                    .map(|e| LinearConstraint::geq(e, LinearExpr::zero()))
                    .collect(),
            ),
        }
    }

    /// Whether the store implies `e >= 0`.
    pub fn entails(&self, e: &LinearExpr) -> bool {
        match &self.store {
            Store::False => true,
            Store::Sat(s) => lp::entails(s, e),
        }
    }

    /// Projects the store onto the variables still mentioned by the goal.
    pub fn compact(&mut self) {
        if let Store::Sat(s) = &self.store {
            let mut keep: Vec<Var> = self.goal.iter().flat_map(|a| a.args.iter().copied()).collect();
            keep.sort();
            keep.dedup();
            self.store = Store::Sat(fm_project(s, &keep));
        }
    }
}

impl fmt::Display for DerivationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |v: Var| self.name(v);
        let goal: Vec<String> = self
            .goal
            .iter()
            .map(|a| {
                let args: Vec<String> = a.args.iter().map(|v| names(*v)).collect();
                format!("{}({})", a.predicate, args.join(", "))
            })
            .collect();
        let goal = if goal.is_empty() { "□".to_string() } else { goal.join(", ") };
        match &self.store {
            Store::False => write!(f, "⟨{goal} ‖ false⟩"),
            Store::Sat(s) => {
                let rows: Vec<String> = s.display_with(&names).to_string().lines().map(str::to_string).collect();
                let store = if rows.is_empty() { "true".to_string() } else { rows.join(" ∧ ") };
                write!(f, "⟨{goal} ‖ {store}⟩")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    Leftmost,
    Rightmost,
    Random(u64),
}

/// Stateful form of a [`SelectionRule`].
#[derive(Debug, Clone)]
pub struct Selector {
    rule: SelectionRule,
    rng: ChaCha8Rng,
}

impl Selector {
    pub fn new(rule: SelectionRule) -> Self {
        let seed = match rule {
            SelectionRule::Random(s) => s,
            _ => 0,
        };
        Self { rule, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn select(&mut self, goal_len: usize) -> usize {
        match self.rule {
            SelectionRule::Leftmost => 0,
            SelectionRule::Rightmost => goal_len - 1,
            SelectionRule::Random(_) => self.rng.gen_range(0..goal_len),
        }
    }
}

/// Rewrites atom `atom` of the goal with rule `rule`, renamed apart.
pub fn resolve(
    program: &Program,
    state: &DerivationState,
    atom: usize,
    rule: usize,
    domain: Domain,
) -> Result<DerivationState, DeriveError> {
    let Store::Sat(store) = &state.store else { return Err(DeriveError::Failed) };
    let selected = &state.goal[atom];
    let r = &program.rules[rule];
    if r.head.predicate != selected.predicate || r.head.arity() != selected.arity() {
        return Err(DeriveError::Arity {
            predicate: selected.predicate.clone(),
            expected: r.head.arity(),
            found: selected.arity(),
        });
    }
    let base = state.names.len();
    let k = state.steps + 1;
    let rename = |v: Var| Var(base + v.0);
    let mut names = state.names.clone();
    names.extend(r.vars.iter().map(|n| format!("{n}#{k}")));

    let mut next = store.clone();
    for (a, h) in selected.args.iter().zip(&r.head.args) {
        next.push_constraint(&LinearConstraint::eq(LinearExpr::var(*a), LinearExpr::var(rename(*h))));
    }
    for c in &r.constraints {
        next.push_constraint(&c.map_vars(rename));
    }
    for v in domain_nonneg(r, domain) {
        next.push_nonneg(&LinearExpr::var(rename(v)));
    }
    for i in 0..r.vars.len() {
        next.ensure_var(rename(Var(i)));
    }

    if !lp::feasible(&next) {
        return Ok(DerivationState { goal: Vec::new(), store: Store::False, names, steps: k });
    }
    let mut goal = state.goal[..atom].to_vec();
    goal.extend(r.body.iter().map(|b| Atom::new(b.predicate.clone(), b.args.iter().map(|v| rename(*v)).collect())));
    goal.extend_from_slice(&state.goal[atom + 1..]);
    Ok(DerivationState { goal, store: Store::Sat(next), names, steps: k })
}

/// Indices of rules defining `predicate`.
fn candidates(program: &Program, predicate: &str) -> Vec<usize> {
    program.rules_for(predicate).map(|(i, _)| i).collect()
}

/// How a rule is picked among those defining the selected predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RuleChoice {
    /// Uniformly among all defining rules.
    Uniform,
    /// Uniformly among defining rules that keep the store satisfiable,
    /// falling back to any rule when none does.
    #[default]
    PreferSatisfiable,
}

/// One step: select an atom, pick a rule and resolve.
pub fn step(
    program: &Program,
    state: &DerivationState,
    selector: &mut Selector,
    choice: RuleChoice,
    rng: &mut impl Rng,
    domain: Domain,
) -> Result<DerivationState, DeriveError> {
    if state.is_failed() {
        return Err(DeriveError::Failed);
    }
    if state.goal.is_empty() {
        return Err(DeriveError::EmptyGoal);
    }
    let atom = selector.select(state.goal.len());
    let predicate = &state.goal[atom].predicate;
    let rules = candidates(program, predicate);
    if rules.is_empty() {
        return Err(DeriveError::Flounder(predicate.clone()));
    }
    if choice == RuleChoice::PreferSatisfiable {
        let mut outcomes = Vec::new();
        for &r in &rules {
            let s = resolve(program, state, atom, r, domain)?;
            if !s.is_failed() {
                outcomes.push(s);
            }
        }
        if !outcomes.is_empty() {
            let i = rng.gen_range(0..outcomes.len());
            return Ok(outcomes.swap_remove(i));
        }
    }
    let r = rules[rng.gen_range(0..rules.len())];
    resolve(program, state, atom, r, domain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ending {
    Success,
    Failure,
    Flounder,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub states: Vec<DerivationState>,
    /// Rule applications, successful and failing alike.
    pub steps: usize,
    pub ending: Ending,
    pub terminated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub selection: SelectionRule,
    pub choice: RuleChoice,
    pub max_steps: usize,
    pub seed: u64,
    pub domain: Domain,
    /// Keep every intermediate state in the trace.
    pub record: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            selection: SelectionRule::Leftmost,
            choice: RuleChoice::default(),
            max_steps: 1000,
            seed: 0,
            domain: Domain::Q,
            record: true,
        }
    }
}

/// Runs from `⟨predicate(args) ‖ true⟩` until the goal empties, the store
/// fails, the derivation flounders or `max_steps` is reached.
pub fn run_ground(program: &Program, predicate: &str, args: &[Rational], opts: RunOptions) -> Result<Trace, DeriveError> {
    match program.arity(predicate) {
        Some(n) if n != args.len() => {
            return Err(DeriveError::Arity { predicate: predicate.to_string(), expected: n, found: args.len() })
        }
        _ => {}
    }
    let mut selector = Selector::new(opts.selection);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = DerivationState::ground(predicate, args);
    let mut states = vec![state.clone()];
    let ending = loop {
        if state.is_failed() {
            break Ending::Failure;
        }
        if state.goal.is_empty() {
            break Ending::Success;
        }
        if state.steps >= opts.max_steps {
            break Ending::MaxSteps;
        }
        state = match step(program, &state, &mut selector, opts.choice, &mut rng, opts.domain) {
            Ok(s) => s,
            Err(DeriveError::Flounder(_)) => break Ending::Flounder,
            Err(e) => return Err(e),
        };
        state.compact();
        if opts.record {
            states.push(state.clone());
        }
    };
    if !opts.record {
        states.push(state.clone());
    }
    Ok(Trace { steps: state.steps, states, ending, terminated: ending != Ending::MaxSteps })
}

/// Longest derivation reachable from a state, exploring every rule choice
/// with leftmost selection up to `depth` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exploration {
    pub longest: usize,
    pub derivations: usize,
    /// Some derivation was cut off at `depth`.
    pub truncated: bool,
}

/// Exhaustive search; only offered for programs with at most three rules.
pub fn explore(program: &Program, state: &DerivationState, depth: usize, domain: Domain) -> Option<Exploration> {
    if program.rules.len() > 3 {
        return None;
    }
    fn go(program: &Program, s: &DerivationState, depth: usize, domain: Domain, acc: &mut Exploration) {
        if s.is_final() {
            acc.derivations += 1;
            acc.longest = acc.longest.max(s.steps);
            return;
        }
        if s.steps >= depth {
            acc.derivations += 1;
            acc.truncated = true;
            acc.longest = acc.longest.max(s.steps);
            return;
        }
        let rules = candidates(program, &s.goal[0].predicate);
        if rules.is_empty() {
            acc.derivations += 1;
            acc.longest = acc.longest.max(s.steps);
            return;
        }
        for r in rules {
            let mut next = resolve(program, s, 0, r, domain).expect("candidate rules match the selected atom");
            next.compact();
            go(program, &next, depth, domain, acc);
        }
    }
    let mut acc = Exploration { longest: 0, derivations: 0, truncated: false };
    go(program, state, depth, domain, &mut acc);
    Some(acc)
}

/// `max(0, floor(level)) + 1`.
pub fn length_bound(level: &Rational) -> BigInt {
    let f = floor(level);
    let f = if f.is_negative() { BigInt::zero() } else { f };
    f + 1
}

#[derive(Debug, Clone)]
pub struct BoundSample {
    pub predicate: String,
    pub args: Vec<Rational>,
    pub level: Rational,
    pub bound: BigInt,
    pub steps: usize,
    pub terminated: bool,
    /// Stopped by a step cap below the bound, so the sample is inconclusive.
    pub capped: bool,
}

impl BoundSample {
    pub fn violated(&self) -> bool {
        BigInt::from(self.steps) > self.bound || (!self.terminated && !self.capped)
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub samples: Vec<BoundSample>,
    pub violations: usize,
    /// How steps are counted, for the report.
    pub counting: &'static str,
}

pub const STEP_COUNTING: &str =
    "steps count rule applications, including the final failing or fact step; bound is max(0, floor(level)) + 1";

/// Candidate ground start atoms: vertices of each rule's constraint for
/// random objectives over the head arguments, perturbed inside the domain.
pub fn sample_starts(program: &Program, count: usize, seed: u64, domain: Domain) -> Vec<(String, Vec<Rational>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bases: Vec<(String, Vec<Rational>)> = Vec::new();
    for r in &program.rules {
        let sys = normalize(&r.constraints, &domain_nonneg(r, domain));
        let mut full = LinearSystem::new(r.head.args.clone());
        full.conjoin(&sys);
        for _ in 0..3 {
            let objective = LinearExpr::from_terms(
                r.head.args.iter().map(|v| (*v, Rational::from_integer(rng.gen_range(-3..=3).into()))),
                Rational::zero(),
            );
            let point = match lp::minimize(&full, &objective) {
                LpOutcome::Optimal { point, .. } | LpOutcome::Unbounded { point, .. } => point,
                LpOutcome::Infeasible => break,
            };
            let args = r.head.args.iter().map(|v| point[full.column(*v).unwrap()].clone()).collect();
            bases.push((r.head.predicate.clone(), args));
        }
    }
    if bases.is_empty() {
        bases = program
            .predicates
            .iter()
            .map(|(p, &n)| (p.clone(), vec![Rational::zero(); n]))
            .collect();
    }
    (0..count)
        .map(|i| {
            let (p, base) = &bases[i % bases.len()];
            let args = base
                .iter()
                .map(|a| {
                    let delta = if i < bases.len() { 0 } else { rng.gen_range(-4..=4) };
                    let mut x = a + Rational::from_integer(delta.into());
                    if domain.is_naturals() {
                        x = Rational::from_integer(floor(&x));
                    }
                    if domain.nonnegative() && x.is_negative() {
                        x = Rational::zero();
                    }
                    x
                })
                .collect();
            (p.clone(), args)
        })
        .collect()
}

/// Runs `samples` seeded random derivations and checks each against the
/// length bound implied by `lm`.
pub fn check_length_bound(
    program: &Program,
    lm: &LevelMapping,
    samples: usize,
    seed: u64,
    domain: Domain,
) -> Result<BoundReport, DeriveError> {
    check_length_bound_capped(program, lm, samples, seed, domain, None)
}

/// [`check_length_bound`] with every derivation cut off after `cap` steps.
pub fn check_length_bound_capped(
    program: &Program,
    lm: &LevelMapping,
    samples: usize,
    seed: u64,
    domain: Domain,
    cap: Option<usize>,
) -> Result<BoundReport, DeriveError> {
    let starts = sample_starts(program, samples, seed, domain);
    let results: Result<Vec<BoundSample>, DeriveError> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, (predicate, args))| {
            let level = level_of(lm, &predicate, &args)?;
            let bound = length_bound(&level);
            let needed = usize::try_from(&bound).unwrap_or(usize::MAX - 1).saturating_add(1);
            let max_steps = cap.map_or(needed, |c| c.min(needed));
            let opts = RunOptions {
                selection: SelectionRule::Random(seed.wrapping_add(i as u64)),
                choice: RuleChoice::PreferSatisfiable,
                max_steps,
                seed: seed.wrapping_mul(31).wrapping_add(i as u64),
                domain,
                record: false,
            };
            let trace = run_ground(program, &predicate, &args, opts)?;
            let capped = !trace.terminated && max_steps < needed;
            Ok(BoundSample { predicate, args, level, bound, steps: trace.steps, terminated: trace.terminated, capped })
        })
        .collect();
    let samples = results?;
    let violations = samples.iter().filter(|s| s.violated()).count();
    Ok(BoundReport { samples, violations, counting: STEP_COUNTING })
}
