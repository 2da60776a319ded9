//! Temporal queries over recorded agent behavior.
//!
//! Queries are LTLf formulas over a finite vocabulary of state predicates.
//! A formula is compiled into a deterministic automaton whose edges are
//! labelled by guard cubes, and a two-pass scan over predicate-abstracted
//! episodes finds every sub-trace ("clip") that satisfies it.
//!
//! The crate is `no_std` and only needs an allocator. Storage, the HTTP
//! service and the command line live in the `clipquery` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod automata;
pub mod highway;
pub mod ltlf;
pub mod querylang;
pub mod search;
pub mod tracedb;

pub use automata::{BoundDfa, CompileError, CompileOptions, Dfa, Guard, StateSet};
pub use ltlf::{EvalError, Formula, Nnf, ParseError};
pub use querylang::{Choice, Constraint, PropSpec, Query, QueryError};
pub use search::{Clip, Cursor, Interval, Match, QueryAutomata, SearchOptions, SearchStats};
pub use tracedb::{AbstractState, Abstractor, Dataset, Episode, EpisodeMeta, Vocabulary};
