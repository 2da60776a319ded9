//! Predicate vocabulary, abstract states and the in-memory episode store.
//!
//! An [`AbstractState`] is the set of predicates that hold in one concrete
//! state, stored as a bitset where bit `i` is the `i`-th predicate of the
//! [`Vocabulary`]. Episodes keep the concrete states and the abstract trace
//! side by side; a [`Dataset`] is an immutable snapshot of episodes that were
//! all abstracted under one vocabulary.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on vocabulary size; abstract states are single machine words.
pub const MAX_PREDICATES: usize = 64;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbstractState(u64);

impl AbstractState {
    pub const EMPTY: AbstractState = AbstractState(0);

    pub const fn from_bits(bits: u64) -> Self {
        AbstractState(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_PREDICATES && self.0 & (1 << index) != 0
    }

    pub fn insert(&mut self, index: usize) {
        debug_assert!(index < MAX_PREDICATES);
        self.0 |= 1 << index;
    }

    #[must_use]
    pub fn with(mut self, index: usize) -> Self {
        self.insert(index);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Hex encoding padded to `ceil(width / 4)` digits, most significant first.
    /// The lowest bit is the first predicate in vocabulary order.
    pub fn to_hex(self, width: usize) -> String {
        let digits = width.div_ceil(4).max(1);
        format!("{:0digits$x}", self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, TraceError> {
        if text.is_empty() || text.len() > 16 {
            return Err(TraceError::BadHex(text.to_string()));
        }
        u64::from_str_radix(text, 16)
            .map(AbstractState)
            .map_err(|_| TraceError::BadHex(text.to_string()))
    }
}

impl fmt::Debug for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AbstractState({:#x})", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDef {
    pub name: String,
    /// Members of an exclusive group never hold together (e.g. lanes).
    pub exclusive: bool,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub name: String,
    pub group: String,
    #[serde(default)]
    pub params: Vec<(String, f64)>,
    #[serde(default)]
    pub description: String,
}

impl PredicateDef {
    pub fn new(name: &str, group: &str) -> Self {
        PredicateDef {
            name: name.to_string(),
            group: group.to_string(),
            params: Vec::new(),
            description: String::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.push((key.to_string(), value));
        self
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = text.to_string();
        self
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VocabularyError {
    #[error("duplicate predicate `{0}`")]
    DuplicatePredicate(String),
    #[error("duplicate group `{0}`")]
    DuplicateGroup(String),
    #[error("predicate `{predicate}` refers to unknown group `{group}`")]
    UnknownGroup { predicate: String, group: String },
    #[error("`{0}` is not a valid predicate name")]
    BadName(String),
    #[error("vocabulary has {0} predicates, at most {MAX_PREDICATES} are supported")]
    TooLarge(usize),
}

/// Ordered predicate vocabulary with its drop-down groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub version: u32,
    groups: Vec<GroupDef>,
    predicates: Vec<PredicateDef>,
}

/// Atom names: `[a-z][a-z0-9-]*`, excluding the constants.
pub fn is_valid_atom_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-') && name != "true" && name != "false"
}

impl Vocabulary {
    pub fn new(version: u32, groups: Vec<GroupDef>, predicates: Vec<PredicateDef>) -> Result<Self, VocabularyError> {
        if predicates.len() > MAX_PREDICATES {
            return Err(VocabularyError::TooLarge(predicates.len()));
        }
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.name == g.name) {
                return Err(VocabularyError::DuplicateGroup(g.name.clone()));
            }
        }
        for (i, p) in predicates.iter().enumerate() {
            if !is_valid_atom_name(&p.name) {
                return Err(VocabularyError::BadName(p.name.clone()));
            }
            if predicates[..i].iter().any(|q| q.name == p.name) {
                return Err(VocabularyError::DuplicatePredicate(p.name.clone()));
            }
            if !groups.iter().any(|g| g.name == p.group) {
                return Err(VocabularyError::UnknownGroup {
                    predicate: p.name.clone(),
                    group: p.group.clone(),
                });
            }
        }
        Ok(Vocabulary {
            version,
            groups,
            predicates,
        })
    }

    /// A flat vocabulary: every name in one non-exclusive `flags` group.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, VocabularyError> {
        let groups = alloc::vec![GroupDef {
            name: "flags".into(),
            exclusive: false,
            description: String::new(),
        }];
        let preds = names.iter().map(|n| PredicateDef::new(n.as_ref(), "flags")).collect();
        Vocabulary::new(1, groups, preds)
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn predicates(&self) -> &[PredicateDef] {
        &self.predicates
    }

    pub fn groups(&self) -> &[GroupDef] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&GroupDef> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDef> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.predicates.iter().position(|p| p.name == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.predicates[index].name
    }

    pub fn members<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a PredicateDef> + 'a {
        self.predicates.iter().filter(move |p| p.group == group)
    }

    pub fn state_from_names<S: AsRef<str>>(&self, names: &[S]) -> Result<AbstractState, TraceError> {
        let mut state = AbstractState::EMPTY;
        for n in names {
            let i = self
                .index_of(n.as_ref())
                .ok_or_else(|| TraceError::UnknownPredicate(n.as_ref().to_string()))?;
            state.insert(i);
        }
        Ok(state)
    }

    pub fn names_of(&self, state: AbstractState) -> Vec<&str> {
        (0..self.len())
            .filter(|&i| state.contains(i))
            .map(|i| self.name(i))
            .collect()
    }

    /// Checks that no bit outside the vocabulary is set and that exclusive
    /// groups have at most one member present.
    pub fn check_state(&self, state: AbstractState) -> Result<(), TraceError> {
        if self.len() < MAX_PREDICATES && state.bits() >> self.len() != 0 {
            return Err(TraceError::StrayBits(state.bits()));
        }
        for g in self.groups.iter().filter(|g| g.exclusive) {
            let present: Vec<&str> = self
                .predicates
                .iter()
                .enumerate()
                .filter(|(i, p)| p.group == g.name && state.contains(*i))
                .map(|(_, p)| p.name.as_str())
                .collect();
            if present.len() > 1 {
                return Err(TraceError::GroupConflict {
                    group: g.name.clone(),
                    members: present.join(","),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("invalid hex bitset `{0}`")]
    BadHex(String),
    #[error("abstract state {0:#x} sets bits outside the vocabulary")]
    StrayBits(u64),
    #[error("exclusive group `{group}` has several members set: {members}")]
    GroupConflict { group: String, members: String },
    #[error("episode {id}: {concrete} concrete states but {abstract_len} abstract states")]
    LengthMismatch {
        id: u64,
        concrete: usize,
        abstract_len: usize,
    },
    #[error("episode {0} is empty")]
    EmptyEpisode(u64),
    #[error("episode {id} step {step}: stored abstraction differs from the vocabulary's")]
    StaleAbstraction { id: u64, step: usize },
    #[error("duplicate episode id {0}")]
    DuplicateEpisode(u64),
    #[error("abstraction failed: {0}")]
    Abstraction(#[from] AbstractionError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("predicate `{predicate}`: {reason}")]
pub struct AbstractionError {
    pub predicate: String,
    pub reason: String,
}

/// Maps concrete states of one domain into abstract states.
pub trait Abstractor<S> {
    fn vocabulary(&self) -> &Vocabulary;
    fn abstract_state(&self, state: &S) -> Result<AbstractState, AbstractionError>;

    fn abstract_trace(&self, states: &[S]) -> Result<Vec<AbstractState>, AbstractionError> {
        states.iter().map(|s| self.abstract_state(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub policy: String,
    pub seed: u64,
    /// First step (1-based) at which a fault trigger held, when one was configured.
    #[serde(default)]
    pub trigger_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode<S> {
    id: u64,
    meta: EpisodeMeta,
    concrete: Vec<S>,
    trace: Vec<AbstractState>,
}

impl<S> Episode<S> {
    pub fn new(id: u64, meta: EpisodeMeta, concrete: Vec<S>, trace: Vec<AbstractState>) -> Result<Self, TraceError> {
        if concrete.len() != trace.len() {
            return Err(TraceError::LengthMismatch {
                id,
                concrete: concrete.len(),
                abstract_len: trace.len(),
            });
        }
        if concrete.is_empty() {
            return Err(TraceError::EmptyEpisode(id));
        }
        Ok(Episode {
            id,
            meta,
            concrete,
            trace,
        })
    }

    /// Builds the abstract trace from the concrete states.
    pub fn abstracted<A: Abstractor<S> + ?Sized>(
        id: u64,
        meta: EpisodeMeta,
        concrete: Vec<S>,
        abstractor: &A,
    ) -> Result<Self, TraceError> {
        let trace = abstractor.abstract_trace(&concrete)?;
        Episode::new(id, meta, concrete, trace)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn meta(&self) -> &EpisodeMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    pub fn concrete(&self) -> &[S] {
        &self.concrete
    }

    pub fn trace(&self) -> &[AbstractState] {
        &self.trace
    }
}

/// Immutable snapshot of episodes sharing one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    vocabulary: Vocabulary,
    episodes: Vec<Episode<S>>,
}

impl<S> Dataset<S> {
    pub fn empty(vocabulary: Vocabulary) -> Self {
        Dataset {
            vocabulary,
            episodes: Vec::new(),
        }
    }

    /// Validates every episode against the abstractor: stored abstract states
    /// must equal a fresh abstraction and respect group exclusivity.
    pub fn ingest<A: Abstractor<S> + ?Sized>(abstractor: &A, episodes: Vec<Episode<S>>) -> Result<Self, TraceError> {
        let vocabulary = abstractor.vocabulary().clone();
        for (i, ep) in episodes.iter().enumerate() {
            if episodes[..i].iter().any(|e| e.id == ep.id) {
                return Err(TraceError::DuplicateEpisode(ep.id));
            }
            for (step, (s, a)) in ep.concrete.iter().zip(&ep.trace).enumerate() {
                vocabulary.check_state(*a)?;
                if abstractor.abstract_state(s)? != *a {
                    return Err(TraceError::StaleAbstraction {
                        id: ep.id,
                        step: step + 1,
                    });
                }
            }
        }
        Ok(Dataset { vocabulary, episodes })
    }

    /// Builds a dataset from abstract traces only, with no concrete payload
    /// validation. Used for synthetic traces.
    pub fn from_parts(vocabulary: Vocabulary, episodes: Vec<Episode<S>>) -> Result<Self, TraceError> {
        for ep in &episodes {
            for a in &ep.trace {
                vocabulary.check_state(*a)?;
            }
        }
        Ok(Dataset { vocabulary, episodes })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn episodes(&self) -> &[Episode<S>] {
        &self.episodes
    }

    pub fn episode(&self, id: u64) -> Option<&Episode<S>> {
        self.episodes.iter().find(|e| e.id == id)
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}
