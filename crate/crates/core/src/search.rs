//! Two-pass clip search.
//!
//! For a query `φ` two automata are compiled: `A_φ` and `A_{Fφ}`. The trace
//! is fed forward to `A_{Fφ}` until it accepts at some position `ℓ`, which
//! means some suffix of the prefix read so far satisfies `φ`. The start `k`
//! is then found by reading backwards from `ℓ` while tracking the set of
//! `A_φ` states from which the letters read so far lead into acceptance;
//! the scan stops as soon as that set contains the initial state, giving
//! the largest such `k`. Search then restarts at `ℓ + 1` with a fresh
//! forward automaton.
//!
//! Every backward segment lies inside the forward segment that produced it,
//! so an episode of length `n` costs at most `2n` letter reads.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{BindError, BoundDfa, CompileError, CompileOptions, Dfa};
use crate::ltlf::Formula;
use crate::tracedb::{AbstractState, Dataset, Episode, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Bind(#[from] BindError),
}

/// 1-based inclusive positions `start..=end` of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The covered letters of a trace.
    pub fn slice<'t, T>(&self, trace: &'t [T]) -> &'t [T] {
        &trace[self.start - 1..self.end]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub forward_reads: usize,
    pub backward_reads: usize,
}

impl SearchStats {
    pub fn letter_reads(&self) -> usize {
        self.forward_reads + self.backward_reads
    }
}

/// Compiled automaton pair for one query formula and vocabulary.
#[derive(Debug, Clone)]
pub struct QueryAutomata {
    formula: Formula,
    canonical: String,
    phi: BoundDfa,
    eventually: BoundDfa,
    states: (usize, usize),
}

impl QueryAutomata {
    pub fn compile(formula: &Formula, vocab: &Vocabulary) -> Result<Self, SearchError> {
        QueryAutomata::compile_with(formula, vocab, &CompileOptions::default())
    }

    pub fn compile_with(formula: &Formula, vocab: &Vocabulary, opts: &CompileOptions) -> Result<Self, SearchError> {
        let phi = Dfa::compile_with(formula, opts)?;
        let eventually = Dfa::compile_with(&Formula::eventually(formula.clone()), opts)?;
        Ok(QueryAutomata {
            formula: formula.clone(),
            canonical: formula.to_string(),
            states: (phi.len(), eventually.len()),
            phi: phi.bind(vocab)?,
            eventually: eventually.bind(vocab)?,
        })
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// State counts of `A_φ` and `A_{Fφ}`.
    pub fn state_counts(&self) -> (usize, usize) {
        self.states
    }

    pub fn find_next(&self, trace: &[AbstractState], start: usize, stats: &mut SearchStats) -> Option<Interval> {
        find_next(&self.phi, &self.eventually, trace, start, stats)
    }

    /// Every match of one trace, in order of end position.
    pub fn scan(&self, trace: &[AbstractState], stats: &mut SearchStats) -> Vec<Interval> {
        let mut out = Vec::new();
        let mut cursor = 1;
        while let Some(m) = self.find_next(trace, cursor, stats) {
            out.push(m);
            cursor = m.end + 1;
        }
        out
    }
}

/// Earliest-ending match with `end >= start`, and for that end the latest
/// start not before `start`. `start` is 1-based.
pub fn find_next(
    phi: &BoundDfa,
    eventually: &BoundDfa,
    trace: &[AbstractState],
    start: usize,
    stats: &mut SearchStats,
) -> Option<Interval> {
    let start = start.max(1);
    let mut q = eventually.initial();
    let mut end = None;
    for pos in start..=trace.len() {
        q = eventually.step(q, trace[pos - 1]);
        stats.forward_reads += 1;
        if eventually.is_accepting(q) {
            end = Some(pos);
            break;
        }
    }
    let end = end?;

    let mut live = phi.accepting().clone();
    for k in (start..=end).rev() {
        live = phi.step_backward(&live, trace[k - 1]);
        stats.backward_reads += 1;
        if live.contains(phi.initial()) {
            return Some(Interval { start: k, end });
        }
        if live.is_empty() {
            break;
        }
    }
    debug_assert!(false, "forward automaton accepted at {end} but no start was found");
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Cap on returned clips over the whole dataset.
    pub max_matches: Option<usize>,
    /// Matches shorter than this are dropped (the scan still resumes after them).
    pub min_len: usize,
    /// Context frames added on each side of a match.
    pub pad: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_matches: None,
            min_len: 2,
            pad: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Match {
    pub episode: u64,
    pub start: usize,
    pub end: usize,
    pub formula: String,
}

impl Match {
    pub fn interval(&self) -> Interval {
        Interval {
            start: self.start,
            end: self.end,
        }
    }
}

/// A match with its padded display window `window_start..=window_end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clip {
    #[serde(flatten)]
    pub matched: Match,
    pub window_start: usize,
    pub window_end: usize,
}

impl Clip {
    pub fn new(matched: Match, episode_len: usize, pad: usize) -> Self {
        Clip {
            window_start: matched.start.saturating_sub(pad).max(1),
            window_end: (matched.end + pad).min(episode_len),
            matched,
        }
    }

    pub fn window_len(&self) -> usize {
        self.window_end + 1 - self.window_start
    }

    /// Concrete states of the display window.
    pub fn frames<'e, S>(&self, episode: &'e Episode<S>) -> &'e [S] {
        &episode.concrete()[self.window_start - 1..self.window_end]
    }
}

/// Resumable position in a dataset scan: episode index and next 1-based start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cursor {
    pub episode_index: usize,
    pub position: usize,
}

impl Cursor {
    pub const START: Cursor = Cursor {
        episode_index: 0,
        position: 1,
    };
}

/// Lazily enumerates clips over a dataset in (episode, end) order.
pub struct Matches<'a, S> {
    query: &'a QueryAutomata,
    dataset: &'a Dataset<S>,
    opts: SearchOptions,
    cursor: Cursor,
    stats: SearchStats,
}

impl<'a, S> Matches<'a, S> {
    pub fn new(query: &'a QueryAutomata, dataset: &'a Dataset<S>, opts: SearchOptions, from: Cursor) -> Self {
        Matches {
            query,
            dataset,
            opts,
            cursor: from,
            stats: SearchStats::default(),
        }
    }

    /// Where the next call to `next` resumes.
    pub fn cursor(&self) -> Cursor {
        self.cursor
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor.episode_index >= self.dataset.episodes().len()
    }
}

impl<S> Iterator for Matches<'_, S> {
    type Item = Clip;

    fn next(&mut self) -> Option<Clip> {
        while let Some(ep) = self.dataset.episodes().get(self.cursor.episode_index) {
            let trace = ep.trace();
            match self.query.find_next(trace, self.cursor.position, &mut self.stats) {
                Some(m) => {
                    self.cursor.position = m.end + 1;
                    if self.cursor.position > trace.len() {
                        self.cursor = Cursor {
                            episode_index: self.cursor.episode_index + 1,
                            position: 1,
                        };
                    }
                    if m.len() < self.opts.min_len {
                        continue;
                    }
                    let matched = Match {
                        episode: ep.id(),
                        start: m.start,
                        end: m.end,
                        formula: self.query.canonical().to_string(),
                    };
                    return Some(Clip::new(matched, trace.len(), self.opts.pad));
                }
                None => {
                    self.cursor = Cursor {
                        episode_index: self.cursor.episode_index + 1,
                        position: 1,
                    };
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub clips: Vec<Clip>,
    /// True when `max_matches` cut the list short.
    pub more_available: bool,
    pub stats: SearchStats,
}

/// All clips of the dataset, truncated at `max_matches`.
pub fn find_all<S>(query: &QueryAutomata, dataset: &Dataset<S>, opts: &SearchOptions) -> SearchResult {
    let mut it = Matches::new(query, dataset, *opts, Cursor::START);
    let mut clips = Vec::new();
    let mut more_available = false;
    for c in it.by_ref() {
        if opts.max_matches.is_some_and(|m| clips.len() >= m) {
            more_available = true;
            break;
        }
        clips.push(c);
    }
    SearchResult {
        clips,
        more_available,
        stats: it.stats(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn setup(text: &str, names: &[&str]) -> (QueryAutomata, Vocabulary) {
        let v = Vocabulary::from_names(names).unwrap();
        (QueryAutomata::compile(&Formula::parse(text).unwrap(), &v).unwrap(), v)
    }

    fn trace(v: &Vocabulary, steps: &[&[&str]]) -> Vec<AbstractState> {
        steps.iter().map(|s| v.state_from_names(s).unwrap()).collect()
    }

    #[test]
    fn latest_start_for_earliest_end() {
        let (q, v) = setup("lane-1 & X F lane-2", &["lane-1", "lane-2"]);
        let t = trace(&v, &[&["lane-1"], &["lane-1"], &["lane-2"]]);
        let mut stats = SearchStats::default();
        assert_eq!(q.find_next(&t, 1, &mut stats), Some(Interval { start: 2, end: 3 }));
        assert_eq!(
            stats,
            SearchStats {
                forward_reads: 3,
                backward_reads: 2
            }
        );
    }

    #[test]
    fn absent_atom_gives_no_match() {
        let (q, v) = setup("p", &["p", "q"]);
        let t = trace(&v, &[&["q"], &[], &["q"]]);
        let mut stats = SearchStats::default();
        assert_eq!(q.find_next(&t, 1, &mut stats), None);
        assert_eq!(stats.letter_reads(), 3);
    }

    #[test]
    fn tautology_matches_first_letter() {
        let (q, v) = setup("true", &["p"]);
        let t = trace(&v, &[&[], &[], &[]]);
        let mut stats = SearchStats::default();
        assert_eq!(q.find_next(&t, 1, &mut stats), Some(Interval { start: 1, end: 1 }));
        assert_eq!(q.scan(&t, &mut stats).len(), 3);
    }

    #[test]
    fn restart_never_looks_before_cursor() {
        let (q, v) = setup("p & X q", &["p", "q"]);
        let t = trace(&v, &[&["p"], &["p", "q"], &["q"]]);
        let mut stats = SearchStats::default();
        // [1,2] then restart at 3: [2,3] would overlap and is not reported
        assert_eq!(q.scan(&t, &mut stats), vec![Interval { start: 1, end: 2 }]);
    }

    #[test]
    fn clip_window_is_clamped() {
        let m = Match {
            episode: 0,
            start: 2,
            end: 4,
            formula: "p".into(),
        };
        let c = Clip::new(m, 6, 5);
        assert_eq!((c.window_start, c.window_end, c.window_len()), (1, 6, 6));
        let m = Match {
            episode: 0,
            start: 10,
            end: 12,
            formula: "p".into(),
        };
        let c = Clip::new(m, 40, 3);
        assert_eq!((c.window_start, c.window_end), (7, 15));
    }
}
