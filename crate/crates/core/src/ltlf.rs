//! LTLf formulas: syntax tree, concrete syntax, negation normal form and a
//! direct evaluator over finite abstract traces.
//!
//! Concrete syntax (loosest binding first):
//!
//! ```text
//! or     := and ('|' and)*
//! and    := until ('&' until)*
//! until  := unary (('U' | 'R') until)?        right-associative
//! unary  := ('!' | 'X' | 'N' | 'F' | 'G') unary | primary
//! primary:= 'true' | 'false' | atom | '(' or ')'
//! atom   := [a-z][a-z0-9-]*
//! ```
//!
//! `X` is the strong next (false at the last position), `N` the weak next
//! (true at the last position). `∧`, `∨` and `¬` are accepted as synonyms of
//! `&`, `|` and `!`.
//!
//! The [`fmt::Display`] impl is the canonical printer: every binary operator
//! is parenthesized, unary temporal operators are followed by one space and
//! negation is written directly before its operand.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::tracedb::{AbstractState, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    /// Strong next.
    Next(Box<Formula>),
    WeakNext(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
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

    pub fn weak_next(f: Formula) -> Self {
        Formula::WeakNext(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn release(a: Formula, b: Formula) -> Self {
        Formula::Release(Box::new(a), Box::new(b))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    /// Conjunction of all items, folded to the left; `True` when empty.
    pub fn conjunction<I: IntoIterator<Item = Formula>>(items: I) -> Self {
        items.into_iter().reduce(Formula::and).unwrap_or(Formula::True)
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Parser::new(text).parse_all()
    }

    /// Distinct atom names, sorted.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(f) | Formula::Next(f) | Formula::WeakNext(f) | Formula::Eventually(f) | Formula::Always(f) => {
                f.collect_atoms(out)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// True when the formula contains no temporal operator.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(f) => f.is_propositional(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_propositional() && b.is_propositional(),
            _ => false,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 0,
            Formula::Not(f) | Formula::Next(f) | Formula::WeakNext(f) | Formula::Eventually(f) | Formula::Always(f) => {
                1 + f.depth()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    pub fn nnf(&self) -> Nnf {
        to_nnf(self, false)
    }

    /// Evaluates the formula on a non-empty trace from its first position.
    pub fn evaluate(&self, trace: &[AbstractState], vocab: &Vocabulary) -> Result<bool, EvalError> {
        if trace.is_empty() {
            return Err(EvalError::EmptyTrace);
        }
        let resolved = Resolved::resolve(self, vocab)?;
        Ok(resolved.holds_at(trace, 0))
    }

    /// Evaluates a propositional formula on a single state.
    pub fn holds_in(&self, state: AbstractState, vocab: &Vocabulary) -> Result<bool, EvalError> {
        if !self.is_propositional() {
            return Err(EvalError::NotPropositional);
        }
        self.evaluate(&[state], vocab)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => f.write_str(a),
            Formula::Not(x) => write!(f, "!{x}"),
            Formula::Next(x) => write!(f, "X {x}"),
            Formula::WeakNext(x) => write!(f, "N {x}"),
            Formula::Eventually(x) => write!(f, "F {x}"),
            Formula::Always(x) => write!(f, "G {x}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
            Formula::Release(a, b) => write!(f, "({a} R {b})"),
        }
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Formula::parse(s)
    }
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: found {found}, expected one of: {}", expected.join(", "))]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<&'static str>,
    },
    #[error("unknown operator `{op}` at byte {offset}")]
    UnknownOperator { offset: usize, op: char },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownOperator { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    True,
    False,
    Not,
    And,
    Or,
    Next,
    WeakNext,
    Eventually,
    Always,
    Until,
    Release,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => alloc::format!("atom `{s}`"),
            Tok::End => "end of input".into(),
            other => alloc::format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Ident(_) => "atom",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Not => "!",
            Tok::And => "&",
            Tok::Or => "|",
            Tok::Next => "X",
            Tok::WeakNext => "N",
            Tok::Eventually => "F",
            Tok::Always => "G",
            Tok::Until => "U",
            Tok::Release => "R",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::End => "end of input",
        }
    }
}

const OPERAND_START: &[&str] = &["atom", "true", "false", "(", "!", "X", "N", "F", "G"];

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    peeked: Option<(usize, Tok)>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            pos: 0,
            peeked: None,
        }
    }

    fn lex(&mut self) -> Result<(usize, Tok), ParseError> {
        let rest = &self.text[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        let start = self.pos;
        let Some(c) = trimmed.chars().next() else {
            return Ok((start, Tok::End));
        };
        self.pos += c.len_utf8();
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '!' | '¬' => Tok::Not,
            '&' | '∧' => Tok::And,
            '|' | '∨' => Tok::Or,
            'X' => Tok::Next,
            'N' => Tok::WeakNext,
            'F' => Tok::Eventually,
            'G' => Tok::Always,
            'U' => Tok::Until,
            'R' => Tok::Release,
            'a'..='z' => {
                let len = trimmed
                    .char_indices()
                    .find(|(_, ch)| !(ch.is_ascii_lowercase() || ch.is_ascii_digit() || *ch == '-'))
                    .map(|(i, _)| i)
                    .unwrap_or(trimmed.len());
                let word = &trimmed[..len];
                self.pos = start + len;
                match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word.to_string()),
                }
            }
            c if c.is_alphabetic() || c.is_ascii_punctuation() => {
                return Err(ParseError::UnknownOperator { offset: start, op: c });
            }
            c => {
                return Err(ParseError::Syntax {
                    offset: start,
                    found: alloc::format!("character `{c}`"),
                    expected: OPERAND_START.to_vec(),
                })
            }
        };
        Ok((start, tok))
    }

    fn peek(&mut self) -> Result<&(usize, Tok), ParseError> {
        if self.peeked.is_none() {
            let t = self.lex()?;
            self.peeked = Some(t);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn bump(&mut self) -> Result<(usize, Tok), ParseError> {
        self.peek()?;
        Ok(self.peeked.take().unwrap())
    }

    fn error(offset: usize, found: &Tok, expected: &[&'static str]) -> ParseError {
        ParseError::Syntax {
            offset,
            found: found.describe(),
            expected: expected.to_vec(),
        }
    }

    fn parse_all(mut self) -> Result<Formula, ParseError> {
        let f = self.parse_or()?;
        let (off, tok) = self.bump()?;
        if tok != Tok::End {
            return Err(Self::error(off, &tok, &["&", "|", "U", "R", "end of input"]));
        }
        Ok(f)
    }

    fn parse_or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.parse_and()?;
        while self.peek()?.1 == Tok::Or {
            self.bump()?;
            lhs = Formula::or(lhs, self.parse_and()?);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.parse_until()?;
        while self.peek()?.1 == Tok::And {
            self.bump()?;
            lhs = Formula::and(lhs, self.parse_until()?);
        }
        Ok(lhs)
    }

    fn parse_until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.parse_unary()?;
        match self.peek()?.1 {
            Tok::Until => {
                self.bump()?;
                Ok(Formula::until(lhs, self.parse_until()?))
            }
            Tok::Release => {
                self.bump()?;
                Ok(Formula::release(lhs, self.parse_until()?))
            }
            _ => Ok(lhs),
        }
    }

    fn parse_unary(&mut self) -> Result<Formula, ParseError> {
        let (off, tok) = self.bump()?;
        Ok(match tok {
            Tok::Not => Formula::not(self.parse_unary()?),
            Tok::Next => Formula::next(self.parse_unary()?),
            Tok::WeakNext => Formula::weak_next(self.parse_unary()?),
            Tok::Eventually => Formula::eventually(self.parse_unary()?),
            Tok::Always => Formula::always(self.parse_unary()?),
            Tok::True => Formula::True,
            Tok::False => Formula::False,
            Tok::Ident(name) => Formula::Atom(name),
            Tok::LParen => {
                let inner = self.parse_or()?;
                let (off, tok) = self.bump()?;
                if tok != Tok::RParen {
                    return Err(Self::error(off, &tok, &[")", "&", "|", "U", "R"]));
                }
                inner
            }
            other => return Err(Self::error(off, &other, OPERAND_START)),
        })
    }
}

// ---------------------------------------------------------------------------
// Negation normal form

/// A formula whose negations sit directly on atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nnf {
    True,
    False,
    Atom(String),
    NegAtom(String),
    And(Box<Nnf>, Box<Nnf>),
    Or(Box<Nnf>, Box<Nnf>),
    Next(Box<Nnf>),
    WeakNext(Box<Nnf>),
    Until(Box<Nnf>, Box<Nnf>),
    Release(Box<Nnf>, Box<Nnf>),
    Eventually(Box<Nnf>),
    Always(Box<Nnf>),
}

fn to_nnf(f: &Formula, negate: bool) -> Nnf {
    let b = |f: &Formula, n: bool| Box::new(to_nnf(f, n));
    match (f, negate) {
        (Formula::True, false) | (Formula::False, true) => Nnf::True,
        (Formula::True, true) | (Formula::False, false) => Nnf::False,
        (Formula::Atom(a), false) => Nnf::Atom(a.clone()),
        (Formula::Atom(a), true) => Nnf::NegAtom(a.clone()),
        (Formula::Not(x), n) => to_nnf(x, !n),
        (Formula::And(x, y), false) => Nnf::And(b(x, false), b(y, false)),
        (Formula::And(x, y), true) => Nnf::Or(b(x, true), b(y, true)),
        (Formula::Or(x, y), false) => Nnf::Or(b(x, false), b(y, false)),
        (Formula::Or(x, y), true) => Nnf::And(b(x, true), b(y, true)),
        (Formula::Next(x), false) => Nnf::Next(b(x, false)),
        (Formula::Next(x), true) => Nnf::WeakNext(b(x, true)),
        (Formula::WeakNext(x), false) => Nnf::WeakNext(b(x, false)),
        (Formula::WeakNext(x), true) => Nnf::Next(b(x, true)),
        (Formula::Until(x, y), false) => Nnf::Until(b(x, false), b(y, false)),
        (Formula::Until(x, y), true) => Nnf::Release(b(x, true), b(y, true)),
        (Formula::Release(x, y), false) => Nnf::Release(b(x, false), b(y, false)),
        (Formula::Release(x, y), true) => Nnf::Until(b(x, true), b(y, true)),
        (Formula::Eventually(x), false) => Nnf::Eventually(b(x, false)),
        (Formula::Eventually(x), true) => Nnf::Always(b(x, true)),
        (Formula::Always(x), false) => Nnf::Always(b(x, false)),
        (Formula::Always(x), true) => Nnf::Eventually(b(x, true)),
    }
}

impl Nnf {
    pub fn to_formula(&self) -> Formula {
        match self {
            Nnf::True => Formula::True,
            Nnf::False => Formula::False,
            Nnf::Atom(a) => Formula::atom(a),
            Nnf::NegAtom(a) => Formula::not(Formula::atom(a)),
            Nnf::And(a, b) => Formula::and(a.to_formula(), b.to_formula()),
            Nnf::Or(a, b) => Formula::or(a.to_formula(), b.to_formula()),
            Nnf::Next(a) => Formula::next(a.to_formula()),
            Nnf::WeakNext(a) => Formula::weak_next(a.to_formula()),
            Nnf::Until(a, b) => Formula::until(a.to_formula(), b.to_formula()),
            Nnf::Release(a, b) => Formula::release(a.to_formula(), b.to_formula()),
            Nnf::Eventually(a) => Formula::eventually(a.to_formula()),
            Nnf::Always(a) => Formula::always(a.to_formula()),
        }
    }
}

impl fmt::Display for Nnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_formula().fmt(f)
    }
}

// ---------------------------------------------------------------------------
// Direct semantics

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("cannot evaluate on an empty trace")]
    EmptyTrace,
    #[error("atom `{0}` is not in the vocabulary")]
    UnknownAtom(String),
    #[error("formula has temporal operators; a propositional formula is required")]
    NotPropositional,
}

/// Formula with atoms resolved to vocabulary bit positions.
enum Resolved {
    True,
    False,
    Atom(usize),
    Not(Box<Resolved>),
    And(Box<Resolved>, Box<Resolved>),
    Or(Box<Resolved>, Box<Resolved>),
    Next(Box<Resolved>),
    WeakNext(Box<Resolved>),
    Until(Box<Resolved>, Box<Resolved>),
    Release(Box<Resolved>, Box<Resolved>),
    Eventually(Box<Resolved>),
    Always(Box<Resolved>),
}

impl Resolved {
    fn resolve(f: &Formula, vocab: &Vocabulary) -> Result<Resolved, EvalError> {
        let r = |x: &Formula| Resolved::resolve(x, vocab).map(Box::new);
        Ok(match f {
            Formula::True => Resolved::True,
            Formula::False => Resolved::False,
            Formula::Atom(a) => Resolved::Atom(vocab.index_of(a).ok_or_else(|| EvalError::UnknownAtom(a.clone()))?),
            Formula::Not(x) => Resolved::Not(r(x)?),
            Formula::And(a, b) => Resolved::And(r(a)?, r(b)?),
            Formula::Or(a, b) => Resolved::Or(r(a)?, r(b)?),
            Formula::Next(x) => Resolved::Next(r(x)?),
            Formula::WeakNext(x) => Resolved::WeakNext(r(x)?),
            Formula::Until(a, b) => Resolved::Until(r(a)?, r(b)?),
            Formula::Release(a, b) => Resolved::Release(r(a)?, r(b)?),
            Formula::Eventually(x) => Resolved::Eventually(r(x)?),
            Formula::Always(x) => Resolved::Always(r(x)?),
        })
    }

    /// Truth of the formula on the suffix of `trace` starting at `i`, read
    /// straight off the quantifier definitions.
    fn holds_at(&self, trace: &[AbstractState], i: usize) -> bool {
        let n = trace.len();
        match self {
            Resolved::True => true,
            Resolved::False => false,
            Resolved::Atom(p) => trace[i].contains(*p),
            Resolved::Not(x) => !x.holds_at(trace, i),
            Resolved::And(a, b) => a.holds_at(trace, i) && b.holds_at(trace, i),
            Resolved::Or(a, b) => a.holds_at(trace, i) || b.holds_at(trace, i),
            Resolved::Next(x) => i + 1 < n && x.holds_at(trace, i + 1),
            Resolved::WeakNext(x) => i + 1 >= n || x.holds_at(trace, i + 1),
            // exists m >= i: b at m, and a at every j with i <= j < m
            Resolved::Until(a, b) => (i..n).any(|m| b.holds_at(trace, m) && (i..m).all(|j| a.holds_at(trace, j))),
            // for all m >= i: b at m, or a at some j with i <= j < m
            Resolved::Release(a, b) => (i..n).all(|m| b.holds_at(trace, m) || (i..m).any(|j| a.holds_at(trace, j))),
            Resolved::Eventually(x) => (i..n).any(|m| x.holds_at(trace, m)),
            Resolved::Always(x) => (i..n).all(|m| x.holds_at(trace, m)),
        }
    }
}

/// Evaluates every suffix of the trace at once; `out[i]` is the verdict on
/// `trace[i..]`. Quadratic per node but shares sub-results.
pub fn evaluate_suffixes(f: &Formula, trace: &[AbstractState], vocab: &Vocabulary) -> Result<Vec<bool>, EvalError> {
    let r = Resolved::resolve(f, vocab)?;
    Ok(table(&r, trace))
}

fn table(f: &Resolved, trace: &[AbstractState]) -> Vec<bool> {
    let n = trace.len();
    match f {
        Resolved::True => vec![true; n],
        Resolved::False => vec![false; n],
        Resolved::Atom(p) => trace.iter().map(|s| s.contains(*p)).collect(),
        Resolved::Not(x) => table(x, trace).into_iter().map(|v| !v).collect(),
        Resolved::And(a, b) => zip(table(a, trace), table(b, trace), |x, y| x && y),
        Resolved::Or(a, b) => zip(table(a, trace), table(b, trace), |x, y| x || y),
        Resolved::Next(x) => {
            let t = table(x, trace);
            (0..n).map(|i| i + 1 < n && t[i + 1]).collect()
        }
        Resolved::WeakNext(x) => {
            let t = table(x, trace);
            (0..n).map(|i| i + 1 >= n || t[i + 1]).collect()
        }
        Resolved::Until(a, b) => {
            let (ta, tb) = (table(a, trace), table(b, trace));
            (0..n).map(|i| (i..n).any(|m| tb[m] && (i..m).all(|j| ta[j]))).collect()
        }
        Resolved::Release(a, b) => {
            let (ta, tb) = (table(a, trace), table(b, trace));
            (0..n).map(|i| (i..n).all(|m| tb[m] || (i..m).any(|j| ta[j]))).collect()
        }
        Resolved::Eventually(x) => {
            let t = table(x, trace);
            (0..n).map(|i| (i..n).any(|m| t[m])).collect()
        }
        Resolved::Always(x) => {
            let t = table(x, trace);
            (0..n).map(|i| (i..n).all(|m| t[m])).collect()
        }
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_names(&["lane-1", "behind", "p", "q"]).unwrap()
    }

    fn trace(v: &Vocabulary, steps: &[&[&str]]) -> Vec<AbstractState> {
        steps.iter().map(|s| v.state_from_names(s).unwrap()).collect()
    }

    #[test]
    fn parses_examples() {
        assert_eq!(
            Formula::parse("X lane-1").unwrap(),
            Formula::next(Formula::atom("lane-1"))
        );
        assert_eq!(
            Formula::parse("lane-1 U behind").unwrap(),
            Formula::until(Formula::atom("lane-1"), Formula::atom("behind"))
        );
        assert_eq!(
            Formula::parse("!(a & b)").unwrap(),
            Formula::not(Formula::and(Formula::atom("a"), Formula::atom("b")))
        );
    }

    #[test]
    fn precedence_and_associativity() {
        let a = || Formula::atom("a");
        let b = || Formula::atom("b");
        let c = || Formula::atom("c");
        assert_eq!(
            Formula::parse("a U b U c").unwrap(),
            Formula::until(a(), Formula::until(b(), c()))
        );
        assert_eq!(
            Formula::parse("a R b U c").unwrap(),
            Formula::release(a(), Formula::until(b(), c()))
        );
        assert_eq!(
            Formula::parse("a & b | c").unwrap(),
            Formula::or(Formula::and(a(), b()), c())
        );
        assert_eq!(
            Formula::parse("a | b & c").unwrap(),
            Formula::or(a(), Formula::and(b(), c()))
        );
        assert_eq!(
            Formula::parse("a & b & c").unwrap(),
            Formula::and(Formula::and(a(), b()), c())
        );
        assert_eq!(
            Formula::parse("X a U b").unwrap(),
            Formula::until(Formula::next(a()), b())
        );
        assert_eq!(
            Formula::parse("a U b & c").unwrap(),
            Formula::and(Formula::until(a(), b()), c())
        );
        assert_eq!(Formula::parse("!F a").unwrap(), Formula::not(Formula::eventually(a())));
        assert_eq!(Formula::parse("Xa").unwrap(), Formula::next(a()));
        assert_eq!(
            Formula::parse("¬a ∧ b ∨ c").unwrap(),
            Formula::parse("!a & b | c").unwrap()
        );
    }

    #[test]
    fn parse_errors_carry_offset_and_expectations() {
        match Formula::parse("a & ") {
            Err(ParseError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 4);
                assert!(expected.contains(&"atom"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            Formula::parse("a Q b"),
            Err(ParseError::UnknownOperator { offset: 2, op: 'Q' })
        );
        assert_eq!(Formula::parse("a -> b").unwrap_err().offset(), 2);
        assert!(matches!(
            Formula::parse("(a & b"),
            Err(ParseError::Syntax { offset: 6, .. })
        ));
        assert!(matches!(
            Formula::parse("a b"),
            Err(ParseError::Syntax { offset: 2, .. })
        ));
        assert!(Formula::parse("").is_err());
    }

    #[test]
    fn canonical_printer() {
        let f = Formula::parse("a & X (b U !c) | G false").unwrap();
        assert_eq!(f.to_string(), "((a & X (b U !c)) | G false)");
        assert_eq!(Formula::parse(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn evaluate_examples() {
        let v = vocab();
        let next = Formula::parse("X lane-1").unwrap();
        assert!(next.evaluate(&trace(&v, &[&[], &["lane-1"]]), &v).unwrap());
        let ev = Formula::parse("F lane-1").unwrap();
        assert!(ev.evaluate(&trace(&v, &[&[], &[], &["lane-1"]]), &v).unwrap());
        assert!(!Formula::atom("p").evaluate(&trace(&v, &[&[]]), &v).unwrap());
        let until = Formula::parse("lane-1 U behind").unwrap();
        assert!(until
            .evaluate(&trace(&v, &[&["lane-1"], &["lane-1"], &["behind"]]), &v)
            .unwrap());
        // strict bound: lane-1 is not needed where behind holds
        assert!(until.evaluate(&trace(&v, &[&["lane-1"], &["behind"]]), &v).unwrap());
        assert!(!until
            .evaluate(&trace(&v, &[&["lane-1"], &[], &["behind"]]), &v)
            .unwrap());
    }

    #[test]
    fn evaluate_errors() {
        let v = vocab();
        assert_eq!(Formula::True.evaluate(&[], &v), Err(EvalError::EmptyTrace));
        assert_eq!(
            Formula::atom("zz").evaluate(&[AbstractState::EMPTY], &v),
            Err(EvalError::UnknownAtom("zz".into()))
        );
        assert_eq!(
            Formula::parse("X p").unwrap().holds_in(AbstractState::EMPTY, &v),
            Err(EvalError::NotPropositional)
        );
    }

    #[test]
    fn weak_and_strong_next_at_the_end() {
        let v = vocab();
        let one = [AbstractState::EMPTY];
        assert!(!Formula::next(Formula::True).evaluate(&one, &v).unwrap());
        assert!(Formula::weak_next(Formula::False).evaluate(&one, &v).unwrap());
    }

    #[test]
    fn nnf_dual_rules() {
        let p = || Formula::atom("p");
        let q = || Formula::atom("q");
        assert_eq!(
            Formula::not(Formula::next(p())).nnf(),
            Nnf::WeakNext(Box::new(Nnf::NegAtom("p".into())))
        );
        assert_eq!(
            Formula::not(Formula::until(p(), q())).nnf(),
            Nnf::Release(Box::new(Nnf::NegAtom("p".into())), Box::new(Nnf::NegAtom("q".into())))
        );
        assert_eq!(Formula::not(Formula::not(p())).nnf(), Nnf::Atom("p".into()));
    }

    #[test]
    fn suffix_table_matches_pointwise() {
        let v = vocab();
        let t = trace(&v, &[&["p"], &["q"], &[], &["p", "q"], &["q"]]);
        for text in ["p U q", "G F q", "N !p", "p R q", "X X q", "F (p & q)"] {
            let f = Formula::parse(text).unwrap();
            let tab = evaluate_suffixes(&f, &t, &v).unwrap();
            for i in 0..t.len() {
                assert_eq!(tab[i], f.evaluate(&t[i..], &v).unwrap(), "{text} at {i}");
            }
        }
    }
}
