//! Syntactically co-safe LTL over identity-tagged propositions.
//!
//! Atoms are written `entity.prop`, where the entity is `T` for the plant or a
//! positive agent index. Operator precedence from loosest to tightest is
//! `|`, `&`, `U` (right associative), then the prefix operators `!`, `X`, `F`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::label::LabelSet;

/// Owner of a proposition: the controlled plant or one of the agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Plant,
    Agent(u32),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Plant => f.write_str("T"),
            Entity::Agent(i) => write!(f, "{i}"),
        }
    }
}

/// A pair `(entity, p)` where `p` is an environment proposition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomicProp {
    pub entity: Entity,
    pub prop: Arc<str>,
}

impl AtomicProp {
    pub fn new(entity: Entity, prop: impl Into<Arc<str>>) -> Self {
        AtomicProp { entity, prop: prop.into() }
    }

    pub fn plant(prop: impl Into<Arc<str>>) -> Self {
        Self::new(Entity::Plant, prop)
    }

    pub fn agent(index: u32, prop: impl Into<Arc<str>>) -> Self {
        Self::new(Entity::Agent(index), prop)
    }
}

impl fmt::Display for AtomicProp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.entity, self.prop)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(AtomicProp),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
}

#[allow(clippy::should_implement_trait)]
impl Formula {
    pub fn atom(ap: AtomicProp) -> Self {
        Formula::Atom(ap)
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    /// Left-folded disjunction; `false` when empty.
    pub fn any(items: impl IntoIterator<Item = Formula>) -> Self {
        items.into_iter().reduce(Formula::or).unwrap_or(Formula::False)
    }

    /// Left-folded conjunction; `true` when empty.
    pub fn all(items: impl IntoIterator<Item = Formula>) -> Self {
        items.into_iter().reduce(Formula::and).unwrap_or(Formula::True)
    }

    pub fn parse(text: &str) -> Result<Formula, ParseError> {
        parse(text)
    }

    /// Every atomic proposition occurring in the formula, sorted.
    pub fn atoms(&self) -> BTreeSet<AtomicProp> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<AtomicProp>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(g) | Formula::Next(g) | Formula::Eventually(g) => g.collect_atoms(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// True when negation occurs only directly above atoms.
    pub fn is_pnf(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(g) => matches!(**g, Formula::Atom(_)),
            Formula::Next(g) | Formula::Eventually(g) => g.is_pnf(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => a.is_pnf() && b.is_pnf(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Or(..) => 0,
            Formula::And(..) => 1,
            Formula::Until(..) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `min` is the loosest precedence that may appear unparenthesized.
        fn write_at(g: &Formula, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if g.precedence() < min {
                f.write_str("(")?;
                write_at(g, 0, f)?;
                return f.write_str(")");
            }
            match g {
                Formula::True => f.write_str("true"),
                Formula::False => f.write_str("false"),
                Formula::Atom(a) => write!(f, "{a}"),
                Formula::Not(h) => {
                    f.write_str("!")?;
                    write_at(h, 3, f)
                }
                Formula::Next(h) => {
                    f.write_str("X ")?;
                    write_at(h, 3, f)
                }
                Formula::Eventually(h) => {
                    f.write_str("F ")?;
                    write_at(h, 3, f)
                }
                Formula::Until(a, b) => {
                    write_at(a, 3, f)?;
                    f.write_str(" U ")?;
                    write_at(b, 2, f)
                }
                Formula::And(a, b) => {
                    write_at(a, 1, f)?;
                    f.write_str(" & ")?;
                    write_at(b, 2, f)
                }
                Formula::Or(a, b) => {
                    write_at(a, 0, f)?;
                    f.write_str(" | ")?;
                    write_at(b, 1, f)
                }
            }
        }
        write_at(self, 0, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown entity tag `{tag}` at offset {pos} (expected `T` or an agent index 1..={agents})")]
    UnknownEntity { tag: String, pos: usize, agents: u32 },
    #[error("unknown proposition `{prop}` at offset {pos}")]
    UnknownProposition { prop: String, pos: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Dot,
    Bang,
    Amp,
    Bar,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '.' => Tok::Dot,
            '!' => Tok::Bang,
            '&' => Tok::Amp,
            '|' => Tok::Bar,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            other => {
                return Err(ParseError::Syntax { pos: i, msg: format!("unexpected character `{other}`") });
            }
        };
        toks.push((tok, i));
        i += 1;
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    atoms: Vec<(AtomicProp, usize)>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { pos: self.offset(), msg: msg.into() })
    }

    fn next_is_dot(&self) -> bool {
        matches!(self.toks.get(self.pos + 1), Some((Tok::Dot, _)))
    }

    fn disj(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.conj()?;
        while self.peek() == Some(&Tok::Bar) {
            self.pos += 1;
            lhs = Formula::or(lhs, self.conj()?);
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.unary()?;
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "U") && !self.next_is_dot() {
            self.pos += 1;
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.error("unexpected end of formula");
        };
        match tok {
            Tok::Bang => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.disj()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.error("expected `)`");
                }
                self.pos += 1;
                Ok(inner)
            }
            Tok::Ident(word) if !self.next_is_dot() => {
                self.pos += 1;
                match word.as_str() {
                    "X" => Ok(Formula::next(self.unary()?)),
                    "F" => Ok(Formula::eventually(self.unary()?)),
                    "true" => Ok(Formula::True),
                    "false" => Ok(Formula::False),
                    "G" | "R" | "W" => {
                        self.pos -= 1;
                        self.error(format!("operator `{word}` is outside the co-safe fragment"))
                    }
                    _ => {
                        self.pos -= 1;
                        self.error(format!("expected an atom `entity.prop`, found `{word}`"))
                    }
                }
            }
            Tok::Ident(entity) => {
                let at = self.offset();
                self.pos += 2;
                let prop = match self.peek() {
                    Some(Tok::Ident(p)) => p.clone(),
                    _ => return self.error("expected a proposition name after `.`"),
                };
                self.pos += 1;
                let entity = parse_entity(&entity, at)?;
                let ap = AtomicProp::new(entity, prop);
                self.atoms.push((ap.clone(), at));
                Ok(Formula::Atom(ap))
            }
            _ => self.error("expected a formula"),
        }
    }
}

fn parse_entity(tag: &str, pos: usize) -> Result<Entity, ParseError> {
    if tag == "T" {
        return Ok(Entity::Plant);
    }
    match tag.parse::<u32>() {
        Ok(i) if i >= 1 => Ok(Entity::Agent(i)),
        _ => Err(ParseError::UnknownEntity { tag: tag.to_string(), pos, agents: 0 }),
    }
}

fn parse_inner(text: &str) -> Result<(Formula, Vec<(AtomicProp, usize)>), ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), atoms: Vec::new() };
    let f = p.disj()?;
    if p.pos != p.toks.len() {
        return p.error("trailing input");
    }
    Ok((f, p.atoms))
}

/// Parses a formula without checking atoms against any system.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    parse_inner(text).map(|(f, _)| f)
}

/// Parses a formula and checks every atom against `n_agents` agents and the
/// environment's proposition names.
pub fn parse_checked<'a>(
    text: &str,
    n_agents: u32,
    props: impl IntoIterator<Item = &'a str>,
) -> Result<Formula, ParseError> {
    let (f, atoms) = parse_inner(text)?;
    let props: BTreeSet<&str> = props.into_iter().collect();
    for (ap, pos) in atoms {
        if let Entity::Agent(i) = ap.entity {
            if i > n_agents {
                return Err(ParseError::UnknownEntity { tag: i.to_string(), pos, agents: n_agents });
            }
        }
        if !props.contains(&*ap.prop) {
            return Err(ParseError::UnknownProposition { prop: ap.prop.to_string(), pos });
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not syntactically co-safe: {reason} in `{node}`")]
pub struct CoSafeViolation {
    pub node: Formula,
    pub reason: String,
}

/// Rewrites `f` so that negation only appears in front of atoms.
///
/// `!X a` becomes `X !a` (next is self-dual on infinite words). Negated
/// until and eventually would need release/always and are rejected.
pub fn to_pnf(f: &Formula) -> Result<Formula, CoSafeViolation> {
    fn pos(f: &Formula) -> Result<Formula, CoSafeViolation> {
        Ok(match f {
            Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
            Formula::Not(g) => neg(g, f)?,
            Formula::And(a, b) => Formula::and(pos(a)?, pos(b)?),
            Formula::Or(a, b) => Formula::or(pos(a)?, pos(b)?),
            Formula::Next(g) => Formula::next(pos(g)?),
            Formula::Until(a, b) => Formula::until(pos(a)?, pos(b)?),
            Formula::Eventually(g) => Formula::eventually(pos(g)?),
        })
    }
    fn neg(g: &Formula, whole: &Formula) -> Result<Formula, CoSafeViolation> {
        Ok(match g {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Atom(_) => Formula::not(g.clone()),
            Formula::Not(h) => pos(h)?,
            Formula::And(a, b) => Formula::or(neg(a, whole)?, neg(b, whole)?),
            Formula::Or(a, b) => Formula::and(neg(a, whole)?, neg(b, whole)?),
            Formula::Next(h) => Formula::next(neg(h, whole)?),
            Formula::Until(..) => {
                return Err(CoSafeViolation {
                    node: whole.clone(),
                    reason: "negated until requires release".into(),
                })
            }
            Formula::Eventually(_) => {
                return Err(CoSafeViolation {
                    node: whole.clone(),
                    reason: "negated eventually requires always".into(),
                })
            }
        })
    }
    pos(f)
}

/// Accepts iff the positive normal form of `f` uses only `&`, `|`, `X`, `U`,
/// `F` and negated atoms.
pub fn check_co_safe(f: &Formula) -> Result<(), CoSafeViolation> {
    to_pnf(f).map(|_| ())
}

/// Agents owning at least one atom that occurs non-negated in the positive
/// normal form of `f`.
pub fn initial_agent_set(f: &Formula, n_agents: u32) -> Result<BTreeSet<u32>, CoSafeViolation> {
    fn walk(f: &Formula, out: &mut BTreeSet<u32>) {
        match f {
            Formula::Atom(AtomicProp { entity: Entity::Agent(i), .. }) => {
                out.insert(*i);
            }
            Formula::True | Formula::False | Formula::Atom(_) | Formula::Not(_) => {}
            Formula::Next(g) | Formula::Eventually(g) => walk(g, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                walk(a, out);
                walk(b, out);
            }
        }
    }
    let pnf = to_pnf(f)?;
    let mut out = BTreeSet::new();
    walk(&pnf, &mut out);
    out.retain(|i| (1..=n_agents).contains(i));
    Ok(out)
}

/// Finite-trace semantics: `X` fails at the last position and `U` needs its
/// right operand to hold at or before the end of the word.
pub fn eval_finite(f: &Formula, word: &[LabelSet]) -> bool {
    fn sat(f: &Formula, w: &[LabelSet], i: usize) -> bool {
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => w[i].contains(a),
            Formula::Not(g) => !sat(g, w, i),
            Formula::And(a, b) => sat(a, w, i) && sat(b, w, i),
            Formula::Or(a, b) => sat(a, w, i) || sat(b, w, i),
            Formula::Next(g) => i + 1 < w.len() && sat(g, w, i + 1),
            Formula::Eventually(g) => (i..w.len()).any(|k| sat(g, w, k)),
            Formula::Until(a, b) => {
                for k in i..w.len() {
                    if sat(b, w, k) {
                        return true;
                    }
                    if !sat(a, w, k) {
                        return false;
                    }
                }
                false
            }
        }
    }
    !word.is_empty() && sat(f, word, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(p: &str) -> Formula {
        Formula::Atom(AtomicProp::plant(p))
    }

    fn a(i: u32, p: &str) -> Formula {
        Formula::Atom(AtomicProp::agent(i, p))
    }

    fn labels(sets: &[&[&str]]) -> Vec<LabelSet> {
        sets.iter()
            .map(|s| s.iter().map(|p| AtomicProp::plant(*p)).collect())
            .collect()
    }

    #[test]
    fn parses_single_atom() {
        assert_eq!(parse("T.c4").unwrap(), t("c4"));
    }

    #[test]
    fn parses_collision_until() {
        let f = parse("(!( T.c0 & 1.c0 )) U T.c4").unwrap();
        assert_eq!(f, Formula::until(Formula::not(Formula::and(t("c0"), a(1, "c0"))), t("c4")));
    }

    #[test]
    fn parses_eventually_of_disjunction() {
        let f = parse("F (1.c2 | 2.c2)").unwrap();
        assert_eq!(f, Formula::eventually(Formula::or(a(1, "c2"), a(2, "c2"))));
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse("T.a | T.b & T.c U T.d U T.e").unwrap();
        let expected = Formula::or(
            t("a"),
            Formula::and(t("b"), Formula::until(t("c"), Formula::until(t("d"), t("e")))),
        );
        assert_eq!(f, expected);
        let g = parse("!X T.a U F T.b").unwrap();
        assert_eq!(g, Formula::until(Formula::not(Formula::next(t("a"))), Formula::eventually(t("b"))));
    }

    #[test]
    fn keyword_named_propositions_are_atoms() {
        let f = parse("T.U U T.X").unwrap();
        assert_eq!(f, Formula::until(t("U"), t("X")));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse("T.c0 & ").unwrap_err() {
            ParseError::Syntax { pos, .. } => assert_eq!(pos, 7),
            e => panic!("{e}"),
        }
        assert!(matches!(parse("G T.a"), Err(ParseError::Syntax { pos: 0, .. })));
        assert!(matches!(parse("(T.a"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("T.a $"), Err(ParseError::Syntax { pos: 4, .. })));
    }

    #[test]
    fn unknown_entity_and_proposition() {
        assert!(matches!(parse("x.c0"), Err(ParseError::UnknownEntity { .. })));
        assert!(matches!(parse("0.c0"), Err(ParseError::UnknownEntity { .. })));
        let props = ["c0", "c1"];
        assert!(matches!(
            parse_checked("F 3.c0", 2, props.iter().copied()),
            Err(ParseError::UnknownEntity { pos: 2, .. })
        ));
        assert!(matches!(
            parse_checked("F 1.c9", 2, props.iter().copied()),
            Err(ParseError::UnknownProposition { .. })
        ));
        assert!(parse_checked("F 2.c1", 2, props.iter().copied()).is_ok());
    }

    #[test]
    fn printer_round_trips() {
        for text in [
            "(!(T.c0 & 1.c0)) U T.c4",
            "F (1.c2 | 2.c2)",
            "(T.a U T.b) U T.c",
            "T.a & (T.b | T.c)",
            "X !T.a",
            "!(T.a U T.b)",
            "true | false",
        ] {
            let f = parse(text).unwrap();
            let printed = f.to_string();
            assert_eq!(parse(&printed).unwrap(), f, "{text} -> {printed}");
        }
    }

    #[test]
    fn pnf_rewrites() {
        let f = parse("!(T.a & T.b)").unwrap();
        assert_eq!(to_pnf(&f).unwrap(), parse("!T.a | !T.b").unwrap());
        let g = parse("!X T.a").unwrap();
        assert_eq!(to_pnf(&g).unwrap(), parse("X !T.a").unwrap());
        let h = parse("!!T.a").unwrap();
        assert_eq!(to_pnf(&h).unwrap(), t("a"));
    }

    #[test]
    fn co_safe_check() {
        assert!(check_co_safe(&parse("!((T.c2 & 1.c2) | (T.c2 & 2.c2)) U T.c4").unwrap()).is_ok());
        let err = check_co_safe(&parse("T.x & !(T.a U T.b)").unwrap()).unwrap_err();
        assert_eq!(err.node, parse("!(T.a U T.b)").unwrap());
        assert!(check_co_safe(&parse("!F T.a").unwrap()).is_err());
    }

    #[test]
    fn initial_agents_from_non_negated_atoms() {
        let f = parse("!(3.p3 & T.p3) U (1.p1 | 2.p2)").unwrap();
        assert_eq!(initial_agent_set(&f, 3).unwrap(), BTreeSet::from([1, 2]));
        let g = parse("!((T.c2 & 1.c2) | (T.c2 & 2.c2)) U T.c4").unwrap();
        assert!(initial_agent_set(&g, 2).unwrap().is_empty());
        assert!(initial_agent_set(&parse("F T.c4").unwrap(), 5).unwrap().is_empty());
        // double negation is a positive occurrence
        assert_eq!(initial_agent_set(&parse("!!2.a").unwrap(), 2).unwrap(), BTreeSet::from([2]));
    }

    #[test]
    fn finite_until_semantics() {
        let f = parse("T.a U T.b").unwrap();
        assert!(eval_finite(&f, &labels(&[&["a"], &["a"], &["b"]])));
        assert!(!eval_finite(&f, &labels(&[&["a"], &["a"]])));
        assert!(!eval_finite(&f, &labels(&[&["a"], &[], &["b"]])));
        let x = parse("X T.a").unwrap();
        assert!(!eval_finite(&x, &labels(&[&["a"]])));
        assert!(eval_finite(&x, &labels(&[&[], &["a"]])));
    }
}
