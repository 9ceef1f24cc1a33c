//! Deterministic automata for co-safe formulas, built by formula progression.
//!
//! Each automaton state is a simplified residual formula: what must still hold
//! on the rest of the word. Edges carry boolean guards over the formula's
//! atoms instead of enumerating the full power-set alphabet.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rustc_hash::FxHashMap as HashMap;
use thiserror::Error;

use crate::formula::{to_pnf, AtomicProp, CoSafeViolation, Formula};
use crate::label::LabelSet;

pub const DEFAULT_MAX_DFA_STATES: usize = 10_000;

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error(transparent)]
    NotCoSafe(#[from] CoSafeViolation),
    #[error("automaton exceeds {cap} states; simplify the formula or raise the cap")]
    TooManyStates { cap: usize },
}

/// Boolean condition on the label of the letter being read.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Guard {
    True,
    False,
    Atom(AtomicProp),
    Not(Box<Guard>),
    And(Vec<Guard>),
    Or(Vec<Guard>),
}

impl Guard {
    fn and2(a: Guard, b: Guard) -> Guard {
        match (a, b) {
            (Guard::False, _) | (_, Guard::False) => Guard::False,
            (Guard::True, g) | (g, Guard::True) => g,
            (Guard::And(mut xs), Guard::And(ys)) => {
                xs.extend(ys);
                Guard::And(xs)
            }
            (Guard::And(mut xs), g) => {
                xs.insert(0, g);
                Guard::And(xs)
            }
            (g, Guard::And(mut ys)) => {
                ys.insert(0, g);
                Guard::And(ys)
            }
            (a, b) => Guard::And(vec![a, b]),
        }
    }

    fn or2(a: Guard, b: Guard) -> Guard {
        match (a, b) {
            (Guard::True, _) | (_, Guard::True) => Guard::True,
            (Guard::False, g) | (g, Guard::False) => g,
            (Guard::Or(mut xs), Guard::Or(ys)) => {
                xs.extend(ys);
                Guard::Or(xs)
            }
            (Guard::Or(mut xs), g) => {
                xs.push(g);
                Guard::Or(xs)
            }
            (a, b) => Guard::Or(vec![a, b]),
        }
    }
}

pub fn eval_guard(g: &Guard, sigma: &LabelSet) -> bool {
    match g {
        Guard::True => true,
        Guard::False => false,
        Guard::Atom(a) => sigma.contains(a),
        Guard::Not(h) => !eval_guard(h, sigma),
        Guard::And(xs) => xs.iter().all(|h| eval_guard(h, sigma)),
        Guard::Or(xs) => xs.iter().any(|h| eval_guard(h, sigma)),
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => f.write_str("true"),
            Guard::False => f.write_str("false"),
            Guard::Atom(a) => write!(f, "{a}"),
            Guard::Not(h) => match **h {
                Guard::Atom(_) | Guard::True | Guard::False => write!(f, "!{h}"),
                _ => write!(f, "!({h})"),
            },
            Guard::And(xs) => {
                for (i, h) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    if matches!(h, Guard::Or(_)) {
                        write!(f, "({h})")?;
                    } else {
                        write!(f, "{h}")?;
                    }
                }
                Ok(())
            }
            Guard::Or(xs) => {
                for (i, h) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{h}")?;
                }
                Ok(())
            }
        }
    }
}

/// Residual formula in normal form. `Lit` tests the first letter of the
/// remaining word; `Now` tests the letter being consumed and only exists
/// while a derivative is being split into guarded cases. `Tail` holds on any
/// non-empty remainder.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Term {
    False,
    True,
    Tail,
    Lit(u32, bool),
    Now(u32, bool),
    Next(Box<Term>),
    Until(Box<Term>, Box<Term>),
    Eventually(Box<Term>),
    And(Vec<Term>),
    Or(Vec<Term>),
}

impl Term {
    /// Every satisfying remainder is non-empty.
    fn implies_tail(&self) -> bool {
        match self {
            Term::True | Term::Now(..) => false,
            Term::False | Term::Tail | Term::Lit(..) | Term::Next(_) | Term::Until(..) | Term::Eventually(_) => true,
            Term::And(xs) => xs.iter().any(Term::implies_tail),
            Term::Or(xs) => xs.iter().all(Term::implies_tail),
        }
    }

    fn and(items: Vec<Term>) -> Term {
        let mut xs = Vec::with_capacity(items.len());
        for t in items {
            match t {
                Term::True => {}
                Term::False => return Term::False,
                Term::And(inner) => xs.extend(inner),
                t => xs.push(t),
            }
        }
        xs.sort();
        xs.dedup();
        if has_complement(&xs) {
            return Term::False;
        }
        if xs.len() > 1 && xs.contains(&Term::Tail) && xs.iter().any(|t| *t != Term::Tail && t.implies_tail()) {
            xs.retain(|t| *t != Term::Tail);
        }
        // a & (a | b) = a
        let snapshot = xs.clone();
        xs.retain(|t| match t {
            Term::Or(ds) => !ds.iter().any(|d| snapshot.binary_search(d).is_ok()),
            _ => true,
        });
        match xs.len() {
            0 => Term::True,
            1 => xs.pop().unwrap(),
            _ => Term::And(xs),
        }
    }

    fn or(items: Vec<Term>) -> Term {
        let mut xs = Vec::with_capacity(items.len());
        for t in items {
            match t {
                Term::False => {}
                Term::True => return Term::True,
                Term::Or(inner) => xs.extend(inner),
                t => xs.push(t),
            }
        }
        xs.sort();
        xs.dedup();
        // p | !p: true for the current letter, a non-empty remainder otherwise
        for i in 0..xs.len() {
            match xs[i] {
                Term::Now(p, true) if xs.contains(&Term::Now(p, false)) => return Term::True,
                Term::Lit(p, true) if xs.contains(&Term::Lit(p, false)) => {
                    xs.push(Term::Tail);
                    break;
                }
                _ => {}
            }
        }
        if xs.contains(&Term::Tail) {
            xs.retain(|t| *t == Term::Tail || !t.implies_tail());
            xs.sort();
            xs.dedup();
        }
        // a | (a & b) = a
        let snapshot = xs.clone();
        xs.retain(|t| match t {
            Term::And(cs) => !cs.iter().any(|c| snapshot.binary_search(c).is_ok()),
            _ => true,
        });
        match xs.len() {
            0 => Term::False,
            1 => xs.pop().unwrap(),
            _ => Term::Or(xs),
        }
    }

    fn from_pnf(f: &Formula, atoms: &[AtomicProp]) -> Term {
        let idx = |a: &AtomicProp| atoms.binary_search(a).expect("atom indexed") as u32;
        match f {
            Formula::True => Term::True,
            Formula::False => Term::False,
            Formula::Atom(a) => Term::Lit(idx(a), true),
            Formula::Not(g) => match &**g {
                Formula::Atom(a) => Term::Lit(idx(a), false),
                _ => unreachable!("input is in positive normal form"),
            },
            Formula::And(a, b) => Term::and(vec![Term::from_pnf(a, atoms), Term::from_pnf(b, atoms)]),
            Formula::Or(a, b) => Term::or(vec![Term::from_pnf(a, atoms), Term::from_pnf(b, atoms)]),
            Formula::Next(g) => Term::Next(Box::new(Term::from_pnf(g, atoms))),
            Formula::Until(a, b) => {
                let (a, b) = (Term::from_pnf(a, atoms), Term::from_pnf(b, atoms));
                match (&a, &b) {
                    (_, Term::True) => Term::True,
                    (_, Term::False) => Term::False,
                    (Term::True, _) => Term::Eventually(Box::new(b)),
                    _ => Term::Until(Box::new(a), Box::new(b)),
                }
            }
            Formula::Eventually(g) => match Term::from_pnf(g, atoms) {
                Term::True => Term::True,
                Term::False => Term::False,
                g => Term::Eventually(Box::new(g)),
            },
        }
    }

    fn to_formula(&self, atoms: &[AtomicProp]) -> Formula {
        match self {
            Term::True | Term::Tail => Formula::True,
            Term::False => Formula::False,
            Term::Lit(p, s) | Term::Now(p, s) => {
                let a = Formula::Atom(atoms[*p as usize].clone());
                if *s {
                    a
                } else {
                    Formula::not(a)
                }
            }
            Term::Next(g) => Formula::next(g.to_formula(atoms)),
            Term::Until(a, b) => Formula::until(a.to_formula(atoms), b.to_formula(atoms)),
            Term::Eventually(g) => Formula::eventually(g.to_formula(atoms)),
            Term::And(xs) => Formula::all(xs.iter().map(|t| t.to_formula(atoms))),
            Term::Or(xs) => Formula::any(xs.iter().map(|t| t.to_formula(atoms))),
        }
    }

    /// Progression through one letter whose atoms are left symbolic as `Now`.
    fn derive(&self) -> Term {
        match self {
            Term::False => Term::False,
            Term::True | Term::Tail => Term::True,
            Term::Lit(p, s) => Term::Now(*p, *s),
            Term::Now(..) => unreachable!("states never contain current-letter literals"),
            Term::Next(g) => Term::and(vec![(**g).clone(), Term::Tail]),
            Term::Until(a, b) => Term::or(vec![b.derive(), Term::and(vec![a.derive(), self.clone()])]),
            Term::Eventually(a) => Term::or(vec![a.derive(), self.clone()]),
            Term::And(xs) => Term::and(xs.iter().map(Term::derive).collect()),
            Term::Or(xs) => Term::or(xs.iter().map(Term::derive).collect()),
        }
    }

    fn cofactor(&self, atom: u32, value: bool) -> Term {
        match self {
            Term::Now(p, s) if *p == atom => {
                if *s == value {
                    Term::True
                } else {
                    Term::False
                }
            }
            Term::And(xs) => Term::and(xs.iter().map(|t| t.cofactor(atom, value)).collect()),
            Term::Or(xs) => Term::or(xs.iter().map(|t| t.cofactor(atom, value)).collect()),
            t => t.clone(),
        }
    }

    fn min_now(&self) -> Option<u32> {
        match self {
            Term::Now(p, _) => Some(*p),
            Term::And(xs) | Term::Or(xs) => xs.iter().filter_map(Term::min_now).min(),
            _ => None,
        }
    }

    /// Resolves every `Now` literal against a concrete letter.
    fn resolve(&self, atoms: &[AtomicProp], sigma: &LabelSet) -> Term {
        match self {
            Term::Now(p, s) => {
                if sigma.contains(&atoms[*p as usize]) == *s {
                    Term::True
                } else {
                    Term::False
                }
            }
            Term::And(xs) => Term::and(xs.iter().map(|t| t.resolve(atoms, sigma)).collect()),
            Term::Or(xs) => Term::or(xs.iter().map(|t| t.resolve(atoms, sigma)).collect()),
            t => t.clone(),
        }
    }
}

/// Clause limit for [`Term::normalize`]; larger expansions keep their shape.
const MAX_CLAUSES: usize = 4096;

impl Term {
    /// Disjunctive normal form over temporal items with subsumed clauses
    /// removed. Residual states are boolean combinations of a finite set of
    /// items, so this bounds the number of distinct states.
    fn normalize(&self) -> Term {
        match self.clauses() {
            Some(cs) => Term::or(cs.into_iter().map(Term::and).collect()),
            None => self.clone(),
        }
    }

    fn clauses(&self) -> Option<Vec<Vec<Term>>> {
        let out = match self {
            Term::True => vec![Vec::new()],
            Term::False => Vec::new(),
            Term::Or(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    out.extend(x.clauses()?);
                }
                out
            }
            Term::And(xs) => {
                let mut acc: Vec<Vec<Term>> = vec![Vec::new()];
                for x in xs {
                    let cs = x.clauses()?;
                    let mut next = Vec::new();
                    for a in &acc {
                        for c in &cs {
                            let mut merged: Vec<Term> = a.iter().chain(c).cloned().collect();
                            merged.sort();
                            merged.dedup();
                            if !has_complement(&merged) {
                                next.push(merged);
                            }
                        }
                    }
                    if next.len() > MAX_CLAUSES {
                        return None;
                    }
                    acc = next;
                }
                acc
            }
            t => vec![vec![t.clone()]],
        };
        let mut out: Vec<Vec<Term>> = out
            .into_iter()
            .map(|mut c| {
                if c.len() > 1 && c.contains(&Term::Tail) && c.iter().any(|t| *t != Term::Tail && t.implies_tail()) {
                    c.retain(|t| *t != Term::Tail);
                }
                c
            })
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out.dedup();
        let mut kept: Vec<Vec<Term>> = Vec::new();
        for c in out {
            if !kept.iter().any(|k| k.iter().all(|t| c.binary_search(t).is_ok())) {
                kept.push(c);
            }
        }
        (kept.len() <= MAX_CLAUSES).then_some(kept)
    }
}

fn has_complement(sorted: &[Term]) -> bool {
    sorted.iter().any(|t| match t {
        Term::Lit(p, true) => sorted.binary_search(&Term::Lit(*p, false)).is_ok(),
        Term::Now(p, true) => sorted.binary_search(&Term::Now(*p, false)).is_ok(),
        _ => false,
    })
}

/// What remains to be satisfied after consuming a prefix of the word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Residual {
    atoms: Vec<AtomicProp>,
    term: Term,
}

impl Residual {
    pub fn new(f: &Formula) -> Result<Residual, CoSafeViolation> {
        let pnf = to_pnf(f)?;
        let atoms: Vec<AtomicProp> = pnf.atoms().into_iter().collect();
        let term = Term::from_pnf(&pnf, &atoms).normalize();
        Ok(Residual { atoms, term })
    }

    pub fn derive(&self, sigma: &LabelSet) -> Residual {
        Residual { atoms: self.atoms.clone(), term: self.term.derive().resolve(&self.atoms, sigma).normalize() }
    }

    /// Whether the empty continuation satisfies the residual.
    pub fn accepts_empty(&self) -> bool {
        self.term == Term::True
    }

    pub fn is_false(&self) -> bool {
        self.term == Term::False
    }

    /// The residual as a formula over non-empty words.
    pub fn to_formula(&self) -> Formula {
        self.term.to_formula(&self.atoms)
    }
}

impl fmt::Display for Residual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.term {
            Term::Tail => f.write_str("<tail>"),
            _ => write!(f, "{}", self.to_formula()),
        }
    }
}

/// The formula that must hold on the rest of the word after reading `sigma`.
pub fn derivative(f: &Formula, sigma: &LabelSet) -> Result<Residual, CoSafeViolation> {
    Ok(Residual::new(f)?.derive(sigma))
}

/// Deterministic finite automaton with guard-labelled edges.
#[derive(Debug, Clone)]
pub struct Dfa {
    atoms: Vec<AtomicProp>,
    names: Vec<String>,
    initial: usize,
    edges: Vec<Vec<(Guard, usize)>>,
    accepting: Vec<bool>,
}

impl Dfa {
    pub fn num_states(&self) -> usize {
        self.edges.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn atoms(&self) -> &[AtomicProp] {
        &self.atoms
    }

    pub fn edges(&self, state: usize) -> &[(Guard, usize)] {
        &self.edges[state]
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting[state]
    }

    /// Residual formula a state stands for.
    pub fn state_name(&self, state: usize) -> &str {
        &self.names[state]
    }

    pub fn step(&self, state: usize, sigma: &LabelSet) -> usize {
        self.edges[state]
            .iter()
            .find(|(g, _)| eval_guard(g, sigma))
            .map(|(_, s)| *s)
            .expect("guards are exhaustive")
    }

    pub fn run<'a>(&self, word: impl IntoIterator<Item = &'a LabelSet>) -> usize {
        word.into_iter().fold(self.initial, |q, sigma| self.step(q, sigma))
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dfa {\n  rankdir=LR;\n  init [shape=point];\n");
        for q in 0..self.num_states() {
            let shape = if self.accepting[q] { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  q{q} [shape={shape}, tooltip=\"{}\"];", escape(&self.names[q]));
        }
        let _ = writeln!(out, "  init -> q{};", self.initial);
        for (q, edges) in self.edges.iter().enumerate() {
            for (g, s) in edges {
                let _ = writeln!(out, "  q{q} -> q{s} [label=\"{}\"];", escape(&g.to_string()));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Runs `word` from the initial state; the empty word is accepted iff the
/// initial state is.
pub fn accepts(d: &Dfa, word: &[LabelSet]) -> bool {
    d.accepting[d.run(word)]
}

type Split = Vec<(Term, Guard)>;

fn split(t: &Term, atoms: &[AtomicProp], memo: &mut HashMap<Term, Split>) -> Split {
    if let Some(hit) = memo.get(t) {
        return hit.clone();
    }
    let out = match t.min_now() {
        None => vec![(t.clone(), Guard::True)],
        Some(p) => {
            let hi = split(&t.cofactor(p, true), atoms, memo);
            let lo = split(&t.cofactor(p, false), atoms, memo);
            let pos = Guard::Atom(atoms[p as usize].clone());
            let neg = Guard::Not(Box::new(pos.clone()));
            let mut merged: Vec<(Term, Guard)> = Vec::new();
            for (succ, g) in &hi {
                let g_lo = lo.iter().find(|(s, _)| s == succ).map(|(_, g)| g.clone());
                let guard = match g_lo {
                    Some(g_lo) if g_lo == *g => g.clone(),
                    Some(g_lo) => Guard::or2(Guard::and2(pos.clone(), g.clone()), Guard::and2(neg.clone(), g_lo)),
                    None => Guard::and2(pos.clone(), g.clone()),
                };
                merged.push((succ.clone(), guard));
            }
            for (succ, g) in &lo {
                if !hi.iter().any(|(s, _)| s == succ) {
                    merged.push((succ.clone(), Guard::and2(neg.clone(), g.clone())));
                }
            }
            merged
        }
    };
    memo.insert(t.clone(), out.clone());
    out
}

pub fn translate(f: &Formula) -> Result<Dfa, TranslateError> {
    translate_with_cap(f, DEFAULT_MAX_DFA_STATES)
}

/// Explores residuals reachable from the positive normal form of `f`. The
/// `true` residual is the single accepting (and absorbing) state.
pub fn translate_with_cap(f: &Formula, max_states: usize) -> Result<Dfa, TranslateError> {
    let root = Residual::new(f)?;
    let atoms = root.atoms;
    let mut index: BTreeMap<Term, usize> = BTreeMap::new();
    let mut states: Vec<Term> = vec![root.term.clone()];
    index.insert(root.term, 0);
    let mut edges = Vec::new();
    let mut memo = HashMap::default();
    let mut next = 0;
    while next < states.len() {
        let derived = states[next].derive();
        let mut out: Vec<(Guard, usize)> = Vec::new();
        for (succ, guard) in split(&derived, &atoms, &mut memo) {
            let succ = succ.normalize();
            let id = match index.get(&succ) {
                Some(&id) => id,
                None => {
                    if states.len() >= max_states {
                        return Err(TranslateError::TooManyStates { cap: max_states });
                    }
                    index.insert(succ.clone(), states.len());
                    states.push(succ);
                    states.len() - 1
                }
            };
            match out.iter_mut().find(|(_, t)| *t == id) {
                Some((g, _)) => *g = Guard::or2(g.clone(), guard),
                None => out.push((guard, id)),
            }
        }
        edges.push(out);
        next += 1;
    }
    let accepting = states.iter().map(|t| *t == Term::True).collect();
    let names = states
        .iter()
        .map(|t| match t {
            Term::Tail => "<tail>".to_string(),
            t => t.to_formula(&atoms).to_string(),
        })
        .collect();
    Ok(Dfa { atoms, names, initial: 0, edges, accepting })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;

    fn set(props: &[&str]) -> LabelSet {
        props.iter().map(|p| AtomicProp::plant(*p)).collect()
    }

    #[test]
    fn until_derivatives() {
        let f = parse("T.a U T.b").unwrap();
        assert!(derivative(&f, &set(&["b"])).unwrap().accepts_empty());
        assert_eq!(derivative(&f, &set(&["a"])).unwrap().to_formula(), f);
        assert!(derivative(&f, &set(&[])).unwrap().is_false());
    }

    #[test]
    fn next_true_needs_another_letter() {
        let f = parse("X true").unwrap();
        let r = derivative(&f, &set(&[])).unwrap();
        assert!(!r.accepts_empty());
        assert!(r.derive(&set(&[])).accepts_empty());
    }

    #[test]
    fn guard_evaluation() {
        let g = Guard::And(vec![
            Guard::Atom(AtomicProp::plant("a")),
            Guard::Not(Box::new(Guard::Atom(AtomicProp::plant("b")))),
        ]);
        assert!(eval_guard(&g, &set(&["a"])));
        assert!(!eval_guard(&g, &set(&["a", "b"])));
        assert!(eval_guard(&Guard::True, &set(&[])));
    }

    #[test]
    fn translate_true_is_single_accepting_state() {
        let d = translate(&Formula::True).unwrap();
        assert_eq!(d.num_states(), 1);
        assert!(d.is_accepting(0));
        assert_eq!(d.step(0, &set(&["x"])), 0);
        assert!(accepts(&d, &[]));
    }

    #[test]
    fn translate_eventually() {
        let d = translate(&parse("F T.a").unwrap()).unwrap();
        assert_eq!(d.num_states(), 2);
        assert!(!d.is_accepting(d.initial()));
        let acc = d.step(0, &set(&["a"]));
        assert!(d.is_accepting(acc));
        assert_eq!(d.step(0, &set(&[])), 0);
        assert!(!accepts(&d, &[]));
    }

    #[test]
    fn abbreviated_crossing_automaton_has_three_states() {
        let d = translate(&parse("!T.col U T.end").unwrap()).unwrap();
        assert_eq!(d.num_states(), 3);
        let q0 = d.initial();
        let none = set(&[]);
        let col = set(&["col"]);
        let end = set(&["end"]);
        let both = set(&["col", "end"]);
        assert_eq!(d.step(q0, &none), q0);
        let q1 = d.step(q0, &end);
        assert_eq!(d.step(q0, &both), q1);
        let q2 = d.step(q0, &col);
        assert!(d.is_accepting(q1) && !d.is_accepting(q2) && !d.is_accepting(q0));
        assert!(q1 != q2 && q1 != q0 && q2 != q0);
        for sigma in [&none, &col, &end, &both] {
            assert_eq!(d.step(q1, sigma), q1);
            assert_eq!(d.step(q2, sigma), q2);
        }
        assert!(accepts(&d, &[none.clone(), end.clone()]));
        assert!(!accepts(&d, std::slice::from_ref(&col)));
        assert!(d.to_dot().contains("doublecircle"));
    }

    #[test]
    fn state_cap_is_enforced() {
        let f = parse("X X X X T.a").unwrap();
        assert!(matches!(translate_with_cap(&f, 3), Err(TranslateError::TooManyStates { cap: 3 })));
        assert!(translate_with_cap(&f, 100).is_ok());
    }

    #[test]
    fn rejects_non_co_safe_input() {
        assert!(matches!(translate(&parse("!(T.a U T.b)").unwrap()), Err(TranslateError::NotCoSafe(_))));
    }
}
