//! Reader for the textual `.clp` format.
//!
//! ```text
//! program    ::= clause*
//! clause     ::= atom ( ":-" body )? "."
//! query      ::= "?-"? body "."?
//! body       ::= item ( "," item )*
//! item       ::= atom | constraint | "true"
//! atom       ::= ident "(" ( ident ( "," ident )* )? ")"
//! constraint ::= expr ( "=" | ">=" | "<=" ) expr
//! expr       ::= term ( ( "+" | "-" ) term )*
//! term       ::= factor ( ( "*" | "/" ) factor )*
//! factor     ::= integer | ident | "(" expr ")" | "-" factor | "+" factor
//! ```
//!
//! `%` starts a comment that runs to the end of the line. `a <= b` is read
//! as `b >= a`. Products must have a constant side and divisors must be
//! nonzero constants, so `1/2*x` and `x/2` are both fine.
//!
//! Every clause must be flat: atom arguments are distinct variables, no
//! variable is shared between two atoms, and every constraint variable
//! occurs in some atom.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

use crate::model::{Atom, LinearConstraint, LinearExpr, Origin, Program, Rational, Rule, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: Option<String>,
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "{}:{}-{}", self.line, self.col_start, self.col_end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("non-linear term")]
    NonLinear,
    #[error("division by zero")]
    DivisionByZero,
    #[error("variable `{0}` repeated in one atom")]
    RepeatedVariable(String),
    #[error("variable `{0}` shared between atoms")]
    SharedVariable(String),
    #[error("constraint variable `{0}` does not occur in any atom")]
    UnboundConstraintVariable(String),
    #[error("predicate `{predicate}` used with arity {found}, previously {expected}")]
    ArityMismatch { predicate: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: SourceSpan,
}

impl ParseError {
    pub fn with_file(mut self, file: impl Into<String>) -> Self {
        self.span.file = Some(file.into());
        self
    }
}

/// A flat query: constraint part, atoms, and the query's variable names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub constraints: Vec<LinearConstraint>,
    pub atoms: Vec<Atom>,
    pub vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    LParen,
    RParen,
    Comma,
    Dot,
    If,
    QueryMark,
    Eq,
    Geq,
    Leq,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    len: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, len, msg: String| ParseError {
        kind: ParseErrorKind::Syntax(msg),
        span: SourceSpan { file: None, line, col_start: col, col_end: col + len },
    };
    while i < chars.len() {
        let ch = chars[i];
        if ch == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if ch.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if ch == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let two = |a: char, b: char| ch == a && chars.get(i + 1) == Some(&b);
        let tok = if ch.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            Tok::Int(s.parse().expect("digits"))
        } else if ch.is_alphabetic() || ch == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if two(':', '-') {
            i += 2;
            Tok::If
        } else if two('?', '-') {
            i += 2;
            Tok::QueryMark
        } else if two('>', '=') {
            i += 2;
            Tok::Geq
        } else if two('<', '=') || two('=', '<') {
            i += 2;
            Tok::Leq
        } else {
            i += 1;
            match ch {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                '=' => Tok::Eq,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '>' | '<' => {
                    return Err(err(line, col, 1, "strict inequalities are not supported".into()))
                }
                other => return Err(err(line, col, 1, format!("unexpected character `{other}`"))),
            }
        };
        let len = i - start;
        out.push(Token { tok, line, col, len });
        col += len;
    }
    out.push(Token { tok: Tok::Eof, line, col, len: 0 });
    Ok(out)
}

/// Variables of the clause being parsed, with the span of first use.
#[derive(Default)]
struct Scope {
    names: Vec<String>,
    index: HashMap<String, Var>,
    /// Variables bound by an atom so far, with the atom that bound them.
    in_atom: HashMap<Var, usize>,
    constraint_uses: Vec<(Var, SourceSpan)>,
}

impl Scope {
    fn intern(&mut self, name: &str) -> Var {
        if let Some(&v) = self.index.get(name) {
            return v;
        }
        let v = Var(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), v);
        v
    }
}

enum Item {
    Atom(Atom),
    Constraint(LinearConstraint),
    True,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn span_of(&self, t: &Token) -> SourceSpan {
        SourceSpan { file: None, line: t.line, col_start: t.col, col_end: t.col + t.len.max(1) }
    }

    fn here(&self) -> SourceSpan {
        self.span_of(&self.toks[self.pos])
    }

    /// Span from token `from` to the last consumed token, on `from`'s line.
    fn span_from(&self, from: usize) -> SourceSpan {
        let a = &self.toks[from];
        let b = &self.toks[self.pos.saturating_sub(1).max(from)];
        let end = if b.line == a.line { b.col + b.len } else { a.col + a.len };
        SourceSpan { file: None, line: a.line, col_start: a.col, col_end: end.max(a.col + 1) }
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { kind: ParseErrorKind::Syntax(msg.into()), span: self.here() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            self.syntax(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump())),
            other => self.syntax(format!("expected {what}, found {}", describe(&other))),
        }
    }

    fn atom(&mut self, scope: &mut Scope, atom_no: usize) -> Result<Atom, ParseError> {
        let (pred, _) = self.ident("predicate name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (name, tok) = self.ident("variable")?;
                let v = scope.intern(&name);
                let span = self.span_of(&tok);
                if args.contains(&v) {
                    return Err(ParseError { kind: ParseErrorKind::RepeatedVariable(name), span });
                }
                if let Some(&other) = scope.in_atom.get(&v) {
                    if other != atom_no {
                        return Err(ParseError { kind: ParseErrorKind::SharedVariable(name), span });
                    }
                }
                scope.in_atom.insert(v, atom_no);
                args.push(v);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        Ok(Atom::new(pred, args))
    }

    fn factor(&mut self, scope: &mut Scope) -> Result<LinearExpr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(LinearExpr::constant(Rational::from_integer(n)))
            }
            Tok::Ident(name) => {
                let tok = self.bump();
                if *self.peek() == Tok::LParen {
                    return Err(ParseError {
                        kind: ParseErrorKind::Syntax(format!("atom `{name}(...)` inside a constraint")),
                        span: self.span_of(&tok),
                    });
                }
                let v = scope.intern(&name);
                scope.constraint_uses.push((v, self.span_of(&tok)));
                Ok(LinearExpr::var(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr(scope)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Minus => {
                self.bump();
                Ok(self.factor(scope)?.scale(&-Rational::from_integer(1.into())))
            }
            Tok::Plus => {
                self.bump();
                self.factor(scope)
            }
            other => self.syntax(format!("expected a number, variable or `(`, found {}", describe(&other))),
        }
    }

    fn term(&mut self, scope: &mut Scope) -> Result<LinearExpr, ParseError> {
        let start = self.pos;
        let mut acc = self.factor(scope)?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor(scope)?;
                    acc = if acc.is_constant() {
                        rhs.scale(acc.constant_term())
                    } else if rhs.is_constant() {
                        acc.scale(rhs.constant_term())
                    } else {
                        return Err(ParseError { kind: ParseErrorKind::NonLinear, span: self.span_from(start) });
                    };
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor(scope)?;
                    if !rhs.is_constant() {
                        return Err(ParseError { kind: ParseErrorKind::NonLinear, span: self.span_from(start) });
                    }
                    if rhs.constant_term().is_zero() {
                        return Err(ParseError {
                            kind: ParseErrorKind::DivisionByZero,
                            span: self.span_from(start),
                        });
                    }
                    acc = acc.scale(&rhs.constant_term().recip());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn expr(&mut self, scope: &mut Scope) -> Result<LinearExpr, ParseError> {
        let mut acc = self.term(scope)?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc.plus(&self.term(scope)?);
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc.minus(&self.term(scope)?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn item(&mut self, scope: &mut Scope, atom_no: usize) -> Result<Item, ParseError> {
        if let (Tok::Ident(name), next) = (self.peek().clone(), self.peek2().clone()) {
            if next == Tok::LParen {
                return Ok(Item::Atom(self.atom(scope, atom_no)?));
            }
            if name == "true" && matches!(next, Tok::Comma | Tok::Dot | Tok::Eof) {
                self.bump();
                return Ok(Item::True);
            }
        }
        let lhs = self.expr(scope)?;
        let rel = self.bump();
        let rhs = self.expr(scope)?;
        Ok(Item::Constraint(match rel.tok.clone() {
            Tok::Eq => LinearConstraint::eq(lhs, rhs),
            Tok::Geq => LinearConstraint::geq(lhs, rhs),
            Tok::Leq => LinearConstraint::geq(rhs, lhs),
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::Syntax(format!("expected `=`, `>=` or `<=`, found {}", describe(&other))),
                    span: self.span_of(&rel),
                })
            }
        }))
    }

    /// Parses body items up to (not including) the terminating `.` or end.
    fn body(&mut self, scope: &mut Scope, first_atom: usize) -> Result<(Vec<LinearConstraint>, Vec<Atom>), ParseError> {
        let mut cs = Vec::new();
        let mut atoms = Vec::new();
        loop {
            match self.item(scope, first_atom + atoms.len())? {
                Item::Atom(a) => atoms.push(a),
                Item::Constraint(c) => cs.push(c),
                Item::True => {}
            }
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                return Ok((cs, atoms));
            }
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Eof => "end of input".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Dot => "`.`".into(),
        Tok::If => "`:-`".into(),
        Tok::QueryMark => "`?-`".into(),
        Tok::Eq => "`=`".into(),
        Tok::Geq => "`>=`".into(),
        Tok::Leq => "`<=`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
    }
}

fn check_bound(scope: &Scope) -> Result<(), ParseError> {
    for (v, span) in &scope.constraint_uses {
        if !scope.in_atom.contains_key(v) {
            return Err(ParseError {
                kind: ParseErrorKind::UnboundConstraintVariable(scope.names[v.0].clone()),
                span: span.clone(),
            });
        }
    }
    Ok(())
}

/// Renumbers variables: atom arguments in textual atom order, then any
/// remaining constraint variables. Makes printing and re-reading stable.
fn canonical_rule(head: Atom, constraints: Vec<LinearConstraint>, body: Vec<Atom>, names: Vec<String>, origin: Origin) -> Rule {
    let mut order: Vec<Var> = Vec::with_capacity(names.len());
    let mut seen = vec![false; names.len()];
    let mut visit = |v: Var, order: &mut Vec<Var>| {
        if !seen[v.0] {
            seen[v.0] = true;
            order.push(v);
        }
    };
    for v in head.args.iter().chain(body.iter().flat_map(|a| a.args.iter())) {
        visit(*v, &mut order);
    }
    for c in &constraints {
        for v in c.lhs.vars().chain(c.rhs.vars()) {
            visit(v, &mut order);
        }
    }
    let mut remap = vec![Var(0); names.len()];
    for (new, old) in order.iter().enumerate() {
        remap[old.0] = Var(new);
    }
    let map_atom = |a: &Atom| Atom::new(a.predicate.clone(), a.args.iter().map(|v| remap[v.0]).collect());
    Rule {
        head: map_atom(&head),
        constraints: constraints.iter().map(|c| c.map_vars(|v| remap[v.0])).collect(),
        body: body.iter().map(map_atom).collect(),
        vars: order.iter().map(|v| names[v.0].clone()).collect(),
        origin,
    }
}

/// Parses a whole program. Rules keep their textual order; Π_P lists
/// predicates by first occurrence.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut rules = Vec::new();
    let mut arities: IndexMap<String, usize> = IndexMap::new();
    while *p.peek() != Tok::Eof {
        let start = p.pos;
        let mut scope = Scope::default();
        let head = p.atom(&mut scope, 0)?;
        let (constraints, body) = if *p.peek() == Tok::If {
            p.bump();
            p.body(&mut scope, 1)?
        } else {
            (Vec::new(), Vec::new())
        };
        p.expect(Tok::Dot, "`.` at end of clause")?;
        check_bound(&scope)?;
        for a in std::iter::once(&head).chain(&body) {
            match arities.get(&a.predicate) {
                Some(&n) if n != a.arity() => {
                    return Err(ParseError {
                        kind: ParseErrorKind::ArityMismatch {
                            predicate: a.predicate.clone(),
                            expected: n,
                            found: a.arity(),
                        },
                        span: p.span_from(start),
                    })
                }
                Some(_) => {}
                None => {
                    arities.insert(a.predicate.clone(), a.arity());
                }
            }
        }
        let origin = Origin { source_rule: rules.len(), body_index: None };
        rules.push(canonical_rule(head, constraints, body, scope.names, origin));
    }
    let program = Program { rules, predicates: arities };
    debug_assert!(program.validate(true).is_ok());
    Ok(program)
}

/// Parses a flat query such as `?- x = 72, p(x).`
pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    if *p.peek() == Tok::QueryMark {
        p.bump();
    }
    let mut scope = Scope::default();
    let (constraints, atoms) = p.body(&mut scope, 0)?;
    if *p.peek() == Tok::Dot {
        p.bump();
    }
    if *p.peek() != Tok::Eof {
        return p.syntax(format!("unexpected {} after query", describe(p.peek())));
    }
    check_bound(&scope)?;
    Ok(Query { constraints, atoms, vars: scope.names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, Relation};

    const EXAMPLE_72: &str = "
        p(x) :- x = 2.
        p(x) :- 0 = 1.
        p(x) :- 72 >= x, y = x + 1, p(y).
    ";

    #[test]
    fn example_program() {
        let prog = parse_program(EXAMPLE_72).unwrap();
        assert_eq!(prog.predicates.len(), 1);
        assert_eq!(prog.arity("p"), Some(1));
        assert_eq!(prog.rules.len(), 3);
        let r3 = &prog.rules[2];
        assert_eq!(r3.body, vec![Atom::new("p", vec![Var(1)])]);
        assert_eq!(r3.vars, vec!["x", "y"]);
        assert_eq!(
            r3.constraints,
            vec![
                LinearConstraint::geq(LinearExpr::constant(int(72)), LinearExpr::var(Var(0))),
                LinearConstraint::eq(
                    LinearExpr::var(Var(1)),
                    LinearExpr::from_terms([(Var(0), int(1))], int(1))
                ),
            ]
        );
        assert!(prog.rules[1].constraints[0].vars().is_empty());
    }

    #[test]
    fn fact_rule() {
        let prog = parse_program("p(x) :- x = 2.").unwrap();
        assert_eq!(prog.rules.len(), 1);
        assert!(prog.rules[0].is_fact());
        assert_eq!(prog.rules[0].constraints[0].relation, Relation::Eq);
    }

    #[test]
    fn repeated_head_variable() {
        let e = parse_program("p(x,x) :- x = 2.").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::RepeatedVariable("x".into()));
        assert_eq!((e.span.line, e.span.col_start), (1, 5));
    }

    #[test]
    fn nonlinear_term() {
        let e = parse_program("p(x) :- x*x = 2.").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonLinear);
        let e = parse_program("p(x) :- 2/x = 2.").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonLinear);
    }

    #[test]
    fn flatness_violations() {
        let e = parse_program("p(x) :- q(x).").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::SharedVariable("x".into()));
        let e = parse_program("p(x) :- z = 1.").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnboundConstraintVariable("z".into()));
        let e = parse_program("p(x).\np(x, y).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::ArityMismatch { .. }));
        assert_eq!(e.span.line, 2);
    }

    #[test]
    fn syntax_errors_carry_spans() {
        let e = parse_program("p(x) :- x >= 1\np(y).").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        assert_eq!(e.span.line, 2);
        let e = parse_program("p(x) :- x > 1.").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        assert_eq!(parse_program("p(x) :- x = 1/0.").unwrap_err().kind, ParseErrorKind::DivisionByZero);
    }

    #[test]
    fn rationals_comments_and_sugar() {
        let prog = parse_program("% header\np(x, y) :- x <= -3/2, y = 1/2*x - 4, true. % tail\n").unwrap();
        let r = &prog.rules[0];
        assert_eq!(
            r.constraints[0],
            LinearConstraint::geq(LinearExpr::constant(crate::model::rat(-3, 2)), LinearExpr::var(Var(0)))
        );
        assert_eq!(r.constraints[1].rhs, LinearExpr::from_terms([(Var(0), crate::model::rat(1, 2))], int(-4)));
        assert!(parse_program("p(x) :- x/2 >= 1.").is_ok());
        assert!(parse_program("q().\np() :- q().").is_ok());
    }

    #[test]
    fn queries() {
        let q = parse_query("?- x = 72, p(x).").unwrap();
        assert_eq!(q.atoms, vec![Atom::new("p", vec![Var(0)])]);
        assert_eq!(q.constraints, vec![LinearConstraint::eq(LinearExpr::var(Var(0)), LinearExpr::constant(int(72)))]);
        let e = parse_query("?- p(x), q(x).").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::SharedVariable("x".into()));
        let q = parse_query("?- x >= 0, p(x).").unwrap();
        assert_eq!(q.constraints[0].relation, Relation::Geq);
    }

    #[test]
    fn pretty_print_reparses() {
        let src = "p(x) :- q(z), y = x, r(y).\nq(a) :- a >= 1/3.\nr(b) :- 2*b - 1 <= 5.\ns(u, v) :- -u + 3/4 = v - 7.\n";
        let prog = parse_program(src).unwrap();
        let again = parse_program(&prog.to_string()).unwrap();
        assert_eq!(prog, again);
    }
}
