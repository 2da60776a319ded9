//! Drop-down query model and its translation into LTLf templates.
//!
//! A [`PropSpec`] is one form section: for each field (an exclusive group
//! such as `lanes`, or a single predicate such as `behind`) the user picks a
//! member, a negated member, or "any". A [`Query`] combines a start section,
//! an end section and an optional constraint on what happens in between.
//!
//! Templates, with `s`, `e`, `c`, `c2` the compiled sections:
//!
//! ```text
//! none            s ∧ X F e
//! changes         (s ∧ c) ∧ X F (¬c ∧ F e)
//! stays constant  (s ∧ c) ∧ X (c U e)
//! changes into    (s ∧ c ∧ ¬c2) ∧ X F (¬c ∧ c2 ∧ F e)
//! ```
//!
//! Conjunctions are left-nested and duplicate conjuncts are kept.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ltlf::Formula;
use crate::tracedb::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("unknown field `{0}`: neither a group nor a predicate")]
    UnknownField(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{predicate}` cannot be selected under field `{field}`")]
    WrongField { field: String, predicate: String },
    #[error("field `{0}` is selected twice")]
    DuplicateField(String),
    #[error("`changes into` needs two different specifications")]
    IdenticalChangeSpecs,
    #[error("constraint `{0}` needs a specification")]
    MissingSpec(String),
    #[error("unknown constraint kind `{0}`")]
    UnknownKind(String),
    #[error("cannot parse selection `{0}`")]
    BadSelection(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Choice {
    Any,
    Is(String),
    IsNot(String),
}

impl Choice {
    /// `any`, `name` or `!name`.
    pub fn parse(text: &str) -> Result<Choice, QueryError> {
        let text = text.trim();
        let choice = match text {
            "" => return Err(QueryError::BadSelection(text.to_string())),
            "any" | "*" => Choice::Any,
            _ => match text.strip_prefix('!') {
                Some(rest) => Choice::IsNot(rest.trim().to_string()),
                None => Choice::Is(text.to_string()),
            },
        };
        match &choice {
            Choice::Is(n) | Choice::IsNot(n) if !crate::tracedb::is_valid_atom_name(n) => {
                Err(QueryError::BadSelection(text.to_string()))
            }
            _ => Ok(choice),
        }
    }

    fn predicate(&self) -> Option<&str> {
        match self {
            Choice::Any => None,
            Choice::Is(p) | Choice::IsNot(p) => Some(p),
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Any => f.write_str("any"),
            Choice::Is(p) => f.write_str(p),
            Choice::IsNot(p) => write!(f, "!{p}"),
        }
    }
}

/// Ordered field selections of one form section.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PropSpec {
    selections: Vec<(String, Choice)>,
}

impl PropSpec {
    pub fn new() -> Self {
        PropSpec::default()
    }

    pub fn select(mut self, field: &str, choice: Choice) -> Result<Self, QueryError> {
        self.push(field, choice)?;
        Ok(self)
    }

    pub fn is(self, field: &str, predicate: &str) -> Result<Self, QueryError> {
        self.select(field, Choice::Is(predicate.to_string()))
    }

    pub fn is_not(self, field: &str, predicate: &str) -> Result<Self, QueryError> {
        self.select(field, Choice::IsNot(predicate.to_string()))
    }

    pub fn push(&mut self, field: &str, choice: Choice) -> Result<(), QueryError> {
        if self.selections.iter().any(|(f, _)| f == field) {
            return Err(QueryError::DuplicateField(field.to_string()));
        }
        self.selections.push((field.to_string(), choice));
        Ok(())
    }

    pub fn selections(&self) -> &[(String, Choice)] {
        &self.selections
    }

    pub fn is_empty(&self) -> bool {
        self.selections.iter().all(|(_, c)| *c == Choice::Any)
    }

    /// Compact text form: `field=value` items separated by commas, where a
    /// bare `name` or `!name` selects a predicate under its own name.
    pub fn parse(text: &str) -> Result<PropSpec, QueryError> {
        let mut spec = PropSpec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('=') {
                Some((field, value)) => spec.push(field.trim(), Choice::parse(value)?)?,
                None => {
                    let choice = Choice::parse(item)?;
                    let field = choice
                        .predicate()
                        .ok_or_else(|| QueryError::BadSelection(item.to_string()))?
                        .to_string();
                    spec.push(&field, choice)?;
                }
            }
        }
        Ok(spec)
    }

    /// Conjunction of the selected literals in selection order; `True` when
    /// nothing is selected.
    pub fn compile(&self, vocab: &Vocabulary) -> Result<Formula, QueryError> {
        let mut literals = Vec::new();
        for (field, choice) in &self.selections {
            let Some(pred) = choice.predicate() else {
                self.check_field(field, None, vocab)?;
                continue;
            };
            self.check_field(field, Some(pred), vocab)?;
            let atom = Formula::atom(pred);
            literals.push(match choice {
                Choice::IsNot(_) => Formula::not(atom),
                _ => atom,
            });
        }
        Ok(Formula::conjunction(literals))
    }

    fn check_field(&self, field: &str, pred: Option<&str>, vocab: &Vocabulary) -> Result<(), QueryError> {
        let in_group = vocab.group(field).filter(|g| g.exclusive);
        if in_group.is_none() && vocab.predicate(field).is_none() {
            return Err(QueryError::UnknownField(field.to_string()));
        }
        let Some(pred) = pred else { return Ok(()) };
        let def = vocab
            .predicate(pred)
            .ok_or_else(|| QueryError::UnknownPredicate(pred.to_string()))?;
        let fits = match in_group {
            Some(g) => def.group == g.name,
            None => def.name == field,
        };
        if fits {
            Ok(())
        } else {
            Err(QueryError::WrongField {
                field: field.to_string(),
                predicate: pred.to_string(),
            })
        }
    }
}

impl fmt::Display for PropSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (field, choice)) in self.selections.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{field}={choice}")?;
        }
        Ok(())
    }
}

// Wire form: a JSON object keeping selection order, values "any", "name",
// "!name"; booleans select a predicate field under its own name.
impl Serialize for PropSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.selections.len()))?;
        for (field, choice) in &self.selections {
            map.serialize_entry(field, &choice.to_string())?;
        }
        map.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChoiceWire {
    Flag(bool),
    Text(String),
}

impl<'de> Deserialize<'de> for PropSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SpecVisitor;

        impl<'de> Visitor<'de> for SpecVisitor {
            type Value = PropSpec;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from field to selection")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<PropSpec, A::Error> {
                let mut spec = PropSpec::new();
                while let Some((field, value)) = access.next_entry::<String, ChoiceWire>()? {
                    let choice = match value {
                        ChoiceWire::Flag(true) => Choice::Is(field.clone()),
                        ChoiceWire::Flag(false) => Choice::IsNot(field.clone()),
                        ChoiceWire::Text(t) => Choice::parse(&t).map_err(de::Error::custom)?,
                    };
                    spec.push(&field, choice).map_err(de::Error::custom)?;
                }
                Ok(spec)
            }
        }

        deserializer.deserialize_map(SpecVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "ConstraintWire", into = "ConstraintWire")]
pub enum Constraint {
    #[default]
    None,
    Changes(PropSpec),
    StaysConstant(PropSpec),
    ChangesInto(PropSpec, PropSpec),
}

impl Constraint {
    pub fn kind(&self) -> &'static str {
        match self {
            Constraint::None => "none",
            Constraint::Changes(_) => "changes",
            Constraint::StaysConstant(_) => "stays-constant",
            Constraint::ChangesInto(..) => "changes-into",
        }
    }

    /// `none`, `changes:SPEC`, `stays:SPEC` or `changes-into:SPEC;SPEC`.
    pub fn parse(text: &str) -> Result<Constraint, QueryError> {
        let text = text.trim();
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        match kind.trim() {
            "none" | "" => Ok(Constraint::None),
            "changes" => Ok(Constraint::Changes(PropSpec::parse(rest)?)),
            "stays" | "stays-constant" => Ok(Constraint::StaysConstant(PropSpec::parse(rest)?)),
            "changes-into" => {
                let (a, b) = rest
                    .split_once(';')
                    .ok_or_else(|| QueryError::MissingSpec("changes-into".into()))?;
                Ok(Constraint::ChangesInto(PropSpec::parse(a)?, PropSpec::parse(b)?))
            }
            other => Err(QueryError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ConstraintWire {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<PropSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec2: Option<PropSpec>,
}

impl TryFrom<ConstraintWire> for Constraint {
    type Error = QueryError;

    fn try_from(w: ConstraintWire) -> Result<Self, QueryError> {
        let need = |s: Option<PropSpec>, kind: &str| s.ok_or_else(|| QueryError::MissingSpec(kind.to_string()));
        match w.kind.as_str() {
            "none" => Ok(Constraint::None),
            "changes" => Ok(Constraint::Changes(need(w.spec, "changes")?)),
            "stays-constant" => Ok(Constraint::StaysConstant(need(w.spec, "stays-constant")?)),
            "changes-into" => Ok(Constraint::ChangesInto(
                need(w.spec, "changes-into")?,
                need(w.spec2, "changes-into")?,
            )),
            other => Err(QueryError::UnknownKind(other.to_string())),
        }
    }
}

impl From<Constraint> for ConstraintWire {
    fn from(c: Constraint) -> Self {
        let kind = c.kind().to_string();
        let (spec, spec2) = match c {
            Constraint::None => (None, None),
            Constraint::Changes(s) | Constraint::StaysConstant(s) => (Some(s), None),
            Constraint::ChangesInto(a, b) => (Some(a), Some(b)),
        };
        ConstraintWire { kind, spec, spec2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Query {
    #[serde(default)]
    pub start: PropSpec,
    #[serde(default)]
    pub end: PropSpec,
    #[serde(default)]
    pub constraint: Constraint,
}

impl Query {
    pub fn new(start: PropSpec, end: PropSpec, constraint: Constraint) -> Self {
        Query { start, end, constraint }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if let Constraint::ChangesInto(a, b) = &self.constraint {
            if a == b {
                return Err(QueryError::IdenticalChangeSpecs);
            }
        }
        Ok(())
    }

    /// Instantiates the template for the constraint kind.
    pub fn compile(&self, vocab: &Vocabulary) -> Result<Formula, QueryError> {
        self.validate()?;
        let s = self.start.compile(vocab)?;
        let e = self.end.compile(vocab)?;
        Ok(match &self.constraint {
            Constraint::None => Formula::and(s, Formula::next(Formula::eventually(e))),
            Constraint::Changes(c) => {
                let c = c.compile(vocab)?;
                Formula::and(
                    Formula::and(s, c.clone()),
                    Formula::next(Formula::eventually(Formula::and(
                        Formula::not(c),
                        Formula::eventually(e),
                    ))),
                )
            }
            Constraint::StaysConstant(c) => {
                let c = c.compile(vocab)?;
                Formula::and(Formula::and(s, c.clone()), Formula::next(Formula::until(c, e)))
            }
            Constraint::ChangesInto(c, c2) => {
                let c = c.compile(vocab)?;
                let c2 = c2.compile(vocab)?;
                Formula::and(
                    Formula::and(Formula::and(s, c.clone()), Formula::not(c2.clone())),
                    Formula::next(Formula::eventually(Formula::and(
                        Formula::and(Formula::not(c), c2),
                        Formula::eventually(e),
                    ))),
                )
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracedb::{GroupDef, PredicateDef};
    use alloc::vec;

    fn vocab() -> Vocabulary {
        let g = |name: &str, exclusive| GroupDef {
            name: name.into(),
            exclusive,
            description: String::new(),
        };
        Vocabulary::new(
            1,
            vec![g("lanes", true), g("relations", false)],
            vec![
                PredicateDef::new("lane-1", "lanes"),
                PredicateDef::new("lane-2", "lanes"),
                PredicateDef::new("lane-3", "lanes"),
                PredicateDef::new("lane-4", "lanes"),
                PredicateDef::new("behind", "relations"),
                PredicateDef::new("car-above", "relations"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn prop_examples() {
        let v = vocab();
        let s = PropSpec::new()
            .is_not("lanes", "lane-1")
            .unwrap()
            .is("behind", "behind")
            .unwrap();
        assert_eq!(s.compile(&v).unwrap().to_string(), "(!lane-1 & behind)");
        assert_eq!(PropSpec::new().compile(&v).unwrap(), Formula::True);
        let l2 = PropSpec::new().is("lanes", "lane-2").unwrap();
        assert_eq!(l2.compile(&v).unwrap(), Formula::atom("lane-2"));
    }

    #[test]
    fn prop_errors() {
        let v = vocab();
        let bad = PropSpec::new().is("lanes", "lane-9").unwrap();
        assert_eq!(bad.compile(&v), Err(QueryError::UnknownPredicate("lane-9".into())));
        let wrong = PropSpec::new().is("lanes", "behind").unwrap();
        assert!(matches!(wrong.compile(&v), Err(QueryError::WrongField { .. })));
        let nofield = PropSpec::new().is("colour", "lane-1").unwrap();
        assert_eq!(nofield.compile(&v), Err(QueryError::UnknownField("colour".into())));
        let flag_mismatch = PropSpec::new().is("behind", "car-above").unwrap();
        assert!(matches!(flag_mismatch.compile(&v), Err(QueryError::WrongField { .. })));
        assert_eq!(
            PropSpec::new().is("lanes", "lane-1").unwrap().is("lanes", "lane-2"),
            Err(QueryError::DuplicateField("lanes".into()))
        );
    }

    #[test]
    fn text_form() {
        let v = vocab();
        let s = PropSpec::parse("lanes=lane-2, car-above").unwrap();
        assert_eq!(s.compile(&v).unwrap().to_string(), "(lane-2 & car-above)");
        let s = PropSpec::parse("lanes=!lane-1,!behind,lanes=any");
        assert_eq!(s, Err(QueryError::DuplicateField("lanes".into())));
        let s = PropSpec::parse("lanes=any,!behind").unwrap();
        assert_eq!(s.compile(&v).unwrap().to_string(), "!behind");
        assert!(PropSpec::parse("any").is_err());
        assert_eq!(PropSpec::parse("").unwrap(), PropSpec::new());
        assert_eq!(
            Constraint::parse("changes-into:lanes=lane-1;lanes=lane-2").unwrap(),
            Constraint::ChangesInto(
                PropSpec::parse("lanes=lane-1").unwrap(),
                PropSpec::parse("lanes=lane-2").unwrap()
            )
        );
        assert!(matches!(
            Constraint::parse("wobbles:x"),
            Err(QueryError::UnknownKind(_))
        ));
    }

    #[test]
    fn identical_change_specs_rejected() {
        let v = vocab();
        let c = PropSpec::parse("lanes=lane-1").unwrap();
        let q = Query::new(PropSpec::new(), PropSpec::new(), Constraint::ChangesInto(c.clone(), c));
        assert_eq!(q.compile(&v), Err(QueryError::IdenticalChangeSpecs));
    }

    #[test]
    fn none_template() {
        let v = vocab();
        let q = Query::new(
            PropSpec::parse("lanes=lane-1").unwrap(),
            PropSpec::parse("lanes=lane-3").unwrap(),
            Constraint::None,
        );
        assert_eq!(q.compile(&v).unwrap().to_string(), "(lane-1 & X F lane-3)");
    }
}
