mod common;

use almterm_core::alm::{analyze, assemble, domain_nonneg, DecideOptions, SolveStrategy};
use almterm_core::lp::{entails, feasible, find_point, fm_project, minimize, normalize, LinearSystem, LpOutcome};
use almterm_core::model::{int, level_of, Domain, LinearConstraint, LinearExpr, Rational, Var};
use almterm_core::verify::verify;
use common::*;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(rng: &mut ChaCha8Rng, nvars: usize, nrows: usize) -> LinearSystem {
    let vars: Vec<Var> = (0..nvars).map(Var).collect();
    let mut s = LinearSystem::new(vars);
    for _ in 0..nrows {
        let coeffs = (0..nvars).map(|_| int(rng.gen_range(-4..=4))).collect();
        s.push_row(coeffs, int(rng.gen_range(-6..=6)));
    }
    s
}

fn random_objective(rng: &mut ChaCha8Rng, vars: &[Var]) -> LinearExpr {
    LinearExpr::from_terms(vars.iter().map(|v| (*v, int(rng.gen_range(-3..=3)))), Rational::zero())
}

#[test]
fn projection_is_sound_and_complete() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonempty = 0;
    for _ in 0..150 {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(2..=6);
        let sys = random_system(&mut rng, n, m);
        let keep: Vec<Var> = (0..n).map(Var).filter(|_| rng.gen_bool(0.5)).collect();
        let proj = fm_project(&sys, &keep);
        assert_eq!(feasible(&sys), feasible(&proj));
        if !feasible(&sys) {
            continue;
        }
        nonempty += 1;
        for e in proj.row_exprs() {
            assert!(entails(&sys, &e), "projection row not implied by the input");
        }
        // Points of the projection extend to the input.
        for _ in 0..3 {
            let obj = random_objective(&mut rng, &keep);
            let point = match minimize(&proj, &obj) {
                LpOutcome::Optimal { point, .. } | LpOutcome::Unbounded { point, .. } => point,
                LpOutcome::Infeasible => unreachable!(),
            };
            let mut fixed = sys.clone();
            for (v, x) in keep.iter().zip(&point) {
                fixed.push_constraint(&LinearConstraint::eq(LinearExpr::var(*v), LinearExpr::constant(x.clone())));
            }
            assert!(feasible(&fixed), "projection point does not extend");
        }
    }
    assert!(nonempty > 50);
}

#[test]
fn plain_elimination_agrees_with_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=7));
        let sys = random_system(&mut rng, n, m);
        assert_eq!(fm_feasible(&sys, 100_000), Some(feasible(&sys)));
    }
}

#[test]
fn decider_agrees_with_plain_elimination_on_small_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = GenParams { max_predicates: 2, max_rules: 2, max_vars: 2, max_coeff: 3, body_atoms: (1, 1) };
    let mut checked = 0;
    for _ in 0..60 {
        let (src, p) = random_program(&mut rng, params);
        let alm = assemble(&p, Domain::Q);
        // Each dual system is checked alone first; its multipliers are local.
        let mut verdict = Some(true);
        for s in &alm.systems {
            match fm_feasible(&s.to_system(), 4000) {
                Some(true) => {}
                Some(false) => {
                    verdict = Some(false);
                    break;
                }
                None => verdict = None,
            }
        }
        if verdict == Some(true) {
            verdict = fm_feasible(&alm.to_system(), 4000);
        }
        let Some(expected) = verdict else { continue };
        checked += 1;
        let got = analyze(&p, Domain::Q, DecideOptions::default()).verdict.witness().is_some();
        assert_eq!(got, expected, "disagreement on\n{src}");
    }
    assert!(checked >= 30, "only {checked} programs small enough for plain elimination");
}

#[test]
fn witnesses_satisfy_projection_and_projection_points_extend() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..60 {
        let (src, p) = random_program(&mut rng, SMALL_BINARY);
        let a = analyze(&p, Domain::Q, DecideOptions { want_projection: true, ..Default::default() });
        let Some(w) = a.verdict.witness() else { continue };
        let proj = a.verdict.projection().unwrap();
        let mu = a.system.mu_vars();
        let value = |v: Var| {
            let (pred, vars) = a.system.mu.iter().find(|(_, vs)| vs.contains(&v)).unwrap();
            w.get(pred).unwrap()[vars.iter().position(|x| *x == v).unwrap()].clone()
        };
        assert!(proj.system.satisfied_by_map(&value), "witness outside projection for\n{src}");
        let obj = random_objective(&mut rng, &mu);
        let point = match minimize(&proj.system, &obj) {
            LpOutcome::Optimal { point, .. } | LpOutcome::Unbounded { point, .. } => point,
            LpOutcome::Infeasible => panic!("projection empty for an affirmative verdict"),
        };
        let mut full = vec![Rational::zero(); a.system.pool.len()];
        for (v, x) in proj.system.vars().iter().zip(point) {
            full[v.0] = x;
        }
        let completed = a.system.complete_point(&full).expect("projection point extends");
        assert!(a.system.to_system().satisfied_by(&completed));
        let lm = a.system.extract_witness(&completed);
        assert!(verify(&p, &lm, Domain::Q).unwrap().passed(), "extended point is not a witness for\n{src}");
    }
}

#[test]
fn doubled_witness_still_verifies() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (_, p) in corpus().into_iter().chain((0..60).map(|_| {
        let (s, p) = random_program(&mut rng, SMALL_BINARY);
        (s, p)
    })) {
        let a = analyze(&p, Domain::Q, DecideOptions::default());
        if let Some(w) = a.verdict.witness() {
            assert!(verify(&p, &w.scaled(&int(2)), Domain::Q).unwrap().passed());
        }
    }
}

#[test]
fn removing_rules_keeps_verification() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..60 {
        let (src, p) = random_program(&mut rng, SMALL_BINARY);
        let a = analyze(&p, Domain::Q, DecideOptions::default());
        let Some(w) = a.verdict.witness() else { continue };
        for drop in 0..p.rules.len() {
            let sub = p.retain_rules(|i, _| i != drop);
            assert!(verify(&sub, w, Domain::Q).unwrap().passed(), "dropping rule {drop} of\n{src}");
        }
    }
}

#[test]
fn ground_instances_decrease() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut instances = 0;
    let programs: Vec<_> = corpus().into_iter().map(|(_, p)| p).chain((0..40).map(|_| random_program(&mut rng, SMALL_BINARY).1)).collect();
    for p in programs {
        for domain in [Domain::Q, Domain::QPlus] {
            let a = analyze(&p, domain, DecideOptions::default());
            let Some(w) = a.verdict.witness() else { continue };
            for r in a.binary.rules.iter().filter(|r| r.body.len() == 1) {
                let sys = normalize(&r.constraints, &domain_nonneg(r, domain));
                if !feasible(&sys) {
                    continue;
                }
                let all: Vec<Var> = (0..r.vars.len()).map(Var).collect();
                let mut full = LinearSystem::new(all.clone());
                full.conjoin(&sys);
                for _ in 0..5 {
                    let obj = random_objective(&mut rng, &all);
                    let point = match minimize(&full, &obj) {
                        LpOutcome::Optimal { point, .. } | LpOutcome::Unbounded { point, .. } => point,
                        LpOutcome::Infeasible => unreachable!(),
                    };
                    let at = |v: &Var| point[full.column(*v).unwrap()].clone();
                    let head: Vec<Rational> = r.head.args.iter().map(at).collect();
                    let body: Vec<Rational> = r.body[0].args.iter().map(at).collect();
                    let lh = level_of(w, &r.head.predicate, &head).unwrap();
                    let lb = level_of(w, &r.body[0].predicate, &body).unwrap();
                    assert!(lh >= &lb + Rational::one(), "{r}: {lh} vs {lb}");
                    assert!(lb >= Rational::zero(), "{r}: body level {lb}");
                    instances += 1;
                }
            }
        }
    }
    assert!(instances > 100);
}

#[test]
fn strategies_agree_on_random_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..100 {
        let (src, p) = random_program(&mut rng, SMALL_BINARY);
        let domain = Domain::ALL[rng.gen_range(0..Domain::ALL.len())];
        let alm = assemble(&p, domain);
        let direct = alm.solve(SolveStrategy::Direct);
        let split = alm.solve(SolveStrategy::Decomposed);
        assert_eq!(direct.is_some(), split.is_some(), "{domain:?}\n{src}");
        for pt in [direct, split].into_iter().flatten() {
            assert!(alm.to_system().satisfied_by(&pt));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn find_point_is_a_solution(seed in any::<u64>(), n in 1usize..4, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, m);
        match find_point(&sys) {
            Some(p) => prop_assert!(sys.satisfied_by(&p)),
            None => prop_assert_eq!(fm_feasible(&sys, 100_000), Some(false)),
        }
    }

    #[test]
    fn row_count_is_linear_in_rules(n in 1usize..40, k in 1usize..5) {
        let alm = assemble(&cycle_family(n, k), Domain::Q);
        prop_assert_eq!(alm.row_count(), 24 * n);
        prop_assert_eq!(alm.to_system().num_rows(), 24 * n);
    }
}
