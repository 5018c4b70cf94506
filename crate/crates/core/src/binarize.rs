//! Splitting of multi-atom rules into binary rules.

use crate::model::{Origin, Program, Rule};

/// Replaces every rule `h ← c, b_1, …, b_n` with `n >= 2` by the `n` rules
/// `h ← c, b_i`. The constraint is copied verbatim, including variables of
/// the dropped atoms. Rules with at most one body atom are kept as they are,
/// so the transformation is idempotent. Each split rule records the index
/// of its source rule and which body atom it kept.
pub fn binarize(p: &Program) -> Program {
    let mut rules = Vec::with_capacity(p.rules.len());
    for r in &p.rules {
        if r.body.len() <= 1 {
            rules.push(r.clone());
            continue;
        }
        for (i, atom) in r.body.iter().enumerate() {
            rules.push(Rule {
                head: r.head.clone(),
                constraints: r.constraints.clone(),
                body: vec![atom.clone()],
                vars: r.vars.clone(),
                origin: Origin { source_rule: r.origin.source_rule, body_index: Some(i) },
            });
        }
    }
    Program { rules, predicates: p.predicates.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn splits_two_atom_body() {
        let p = parse_program("a(x) :- x = y + z, b(y), d(z).").unwrap();
        let b = binarize(&p);
        assert_eq!(b.rules.len(), 2);
        assert_eq!(b.rules[0].body[0].predicate, "b");
        assert_eq!(b.rules[1].body[0].predicate, "d");
        for (i, r) in b.rules.iter().enumerate() {
            assert_eq!(r.constraints, p.rules[0].constraints);
            assert_eq!(r.origin, Origin { source_rule: 0, body_index: Some(i) });
            r.check(false).unwrap();
        }
        assert!(b.rules[0].check(true).is_err(), "z only occurs in the constraint now");
    }

    #[test]
    fn binary_input_is_fixpoint() {
        let src = "p(x) :- x = 2.\np(x) :- 0 = 1.\np(x) :- 72 >= x, y = x + 1, p(y).";
        let p = parse_program(src).unwrap();
        assert_eq!(binarize(&p), p);
        let facts = parse_program("p(x) :- x >= 0.\nq(y).").unwrap();
        assert_eq!(binarize(&facts), facts);
    }

    #[test]
    fn idempotent() {
        let p = parse_program("a(x) :- b(y), c(z), d(w), x = y + z + w.\nb(u) :- u >= 1.").unwrap();
        let once = binarize(&p);
        assert!(once.is_binary());
        assert_eq!(binarize(&once), once);
    }
}
