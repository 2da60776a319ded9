//! LTLf to DFA compilation.
//!
//! The formula is put in negation normal form and every automaton state is a
//! positive Boolean combination of *obligations* `X ψ` (strong) and `N ψ`
//! (weak), where `ψ` ranges over the sub-formulas of the normal form. The
//! initial state is the single obligation `X φ`. Reading a letter discharges
//! every obligation by expanding its body one step:
//!
//! ```text
//! a U b  =  b | (a & X (a U b))        F a  =  a | X F a
//! a R b  =  b & (a | N (a R b))        G a  =  a & N G a
//! ```
//!
//! evaluating literals against the letter. The result is again a positive
//! combination of obligations. Combinations are kept as their set of minimal
//! terms (irredundant monotone DNF), which is a canonical form for monotone
//! functions, so the state space is finite. A state accepts when the
//! combination is true under `X ψ ↦ false, N ψ ↦ true`, i.e. when the trace
//! may end here.
//!
//! Edges carry [`Guard`] cubes over the formula's own atoms (its *support*);
//! the guards leaving a state partition the valuations of the support.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use thiserror::Error;

use crate::ltlf::{Formula, Nnf};
use crate::tracedb::{AbstractState, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("automaton for `{formula}` exceeds {limit} states")]
    TooManyStates { formula: String, limit: usize },
    #[error("a state of `{formula}` tests {atoms} atoms at once, at most {limit} are supported")]
    SupportTooLarge {
        formula: String,
        atoms: usize,
        limit: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("atom `{0}` is not in the dataset vocabulary")]
    UnknownAtom(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub max_states: usize,
    pub minimize: bool,
    /// Largest number of atoms a single state may branch on.
    pub max_state_support: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            max_states: 50_000,
            minimize: true,
            max_state_support: 16,
        }
    }
}

impl CompileOptions {
    pub fn unminimized() -> Self {
        CompileOptions {
            minimize: false,
            ..CompileOptions::default()
        }
    }
}

/// A cube: bit `i` of `mask` set means support atom `i` is constrained to
/// bit `i` of `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Guard {
    pub mask: u64,
    pub value: u64,
}

impl Guard {
    pub const ANY: Guard = Guard { mask: 0, value: 0 };

    pub fn new(mask: u64, value: u64) -> Self {
        Guard {
            mask,
            value: value & mask,
        }
    }

    pub fn matches(self, valuation: u64) -> bool {
        valuation & self.mask == self.value
    }

    fn disjoint(self, other: Guard) -> bool {
        (self.value ^ other.value) & self.mask & other.mask != 0
    }

    fn subset_of(self, other: Guard) -> bool {
        other.mask & !self.mask == 0 && (self.value ^ other.value) & other.mask == 0
    }

    /// Renders the cube as a conjunction of literals, `*` when unconstrained.
    pub fn render(self, support: &[String]) -> String {
        if self.mask == 0 {
            return "*".to_string();
        }
        let mut parts = Vec::new();
        for (i, name) in support.iter().enumerate() {
            if self.mask & (1 << i) != 0 {
                if self.value & (1 << i) != 0 {
                    parts.push(name.clone());
                } else {
                    parts.push(format!("!{name}"));
                }
            }
        }
        parts.join(" & ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub guard: Guard,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfaState {
    /// Canonical obligation combination this state stands for.
    pub label: String,
    pub accepting: bool,
    pub edges: Vec<Edge>,
}

/// Deterministic automaton over valuations of `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dfa {
    formula: Formula,
    support: Vec<String>,
    states: Vec<DfaState>,
    initial: usize,
}

impl Dfa {
    /// Compiles with default options (minimized).
    pub fn compile(formula: &Formula) -> Result<Dfa, CompileError> {
        Dfa::compile_with(formula, &CompileOptions::default())
    }

    pub fn compile_with(formula: &Formula, opts: &CompileOptions) -> Result<Dfa, CompileError> {
        let dfa = Builder::new(formula, opts).build()?;
        Ok(if opts.minimize { dfa.minimize() } else { dfa })
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn states(&self) -> &[DfaState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.states[state].accepting
    }

    pub fn accepting(&self) -> StateSet {
        StateSet::from_indices(self.len(), (0..self.len()).filter(|&q| self.states[q].accepting))
    }

    /// Successor on a valuation of the support.
    pub fn step_support(&self, state: usize, valuation: u64) -> usize {
        self.states[state]
            .edges
            .iter()
            .find(|e| e.guard.matches(valuation))
            .map(|e| e.target)
            .expect("guards of every state are total")
    }

    /// Resolves support atoms to vocabulary bits.
    pub fn bind(&self, vocab: &Vocabulary) -> Result<BoundDfa, BindError> {
        let mut bits = Vec::with_capacity(self.support.len());
        for name in &self.support {
            bits.push(
                vocab
                    .index_of(name)
                    .ok_or_else(|| BindError::UnknownAtom(name.clone()))?,
            );
        }
        let widen = |x: u64| {
            bits.iter()
                .enumerate()
                .filter(|(i, _)| x & (1 << i) != 0)
                .fold(0u64, |acc, (_, &b)| acc | (1 << b))
        };
        let edges = self
            .states
            .iter()
            .map(|s| {
                s.edges
                    .iter()
                    .map(|e| (widen(e.guard.mask), widen(e.guard.value), e.target))
                    .collect()
            })
            .collect();
        Ok(BoundDfa {
            edges,
            accepting: self.accepting(),
            initial: self.initial,
        })
    }

    /// Checks totality and determinism by enumerating every support valuation,
    /// and reachability of every state from the initial one.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.support.len() > 20 {
            return Err(format!(
                "support of {} atoms is too large to enumerate",
                self.support.len()
            ));
        }
        for (q, s) in self.states.iter().enumerate() {
            for v in 0..(1u64 << self.support.len()) {
                let n = s.edges.iter().filter(|e| e.guard.matches(v)).count();
                if n != 1 {
                    return Err(format!("state {q}: {n} guards match valuation {v:#b}"));
                }
            }
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            for e in &self.states[q].edges {
                if !seen[e.target] {
                    seen[e.target] = true;
                    queue.push_back(e.target);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(q) => Err(format!("state {q} is unreachable")),
            None => Ok(()),
        }
    }

    /// Moore partition refinement over the letter classes induced by the
    /// guards. When the initial state has no incoming edge its acceptance
    /// only decides the empty trace, so it is merged with any state that has
    /// the same successors; the result agrees with the input on every
    /// non-empty trace.
    pub fn minimize(&self) -> Dfa {
        let n = self.len();
        let letters = letter_classes(self.states.iter().flat_map(|s| s.edges.iter().map(|e| e.guard)));
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|q| letters.iter().map(|&l| self.step_support(q, l)).collect())
            .collect();
        let init = self.initial;
        let init_free = self.states.iter().all(|s| s.edges.iter().all(|e| e.target != init));
        let members: Vec<usize> = (0..n).filter(|&q| !(init_free && q == init)).collect();

        // class ids for `members`; usize::MAX for an excluded initial state
        let mut class = vec![usize::MAX; n];
        for &q in &members {
            class[q] = usize::from(self.states[q].accepting);
        }
        let mut count = renumber(&mut class, &members);
        loop {
            let mut sigs: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
            let mut next = vec![usize::MAX; n];
            for &q in &members {
                let sig = (class[q], succ[q].iter().map(|&t| class[t]).collect::<Vec<_>>());
                let len = sigs.len();
                next[q] = *sigs.entry(sig).or_insert(len);
            }
            let new_count = sigs.len();
            class = next;
            if new_count == count {
                break;
            }
            count = new_count;
        }
        let mut accepting_of: Vec<bool> = vec![false; count];
        for &q in &members {
            accepting_of[class[q]] = self.states[q].accepting;
        }
        if init_free {
            let sig: Vec<usize> = succ[init].iter().map(|&t| class[t]).collect();
            let twin = members
                .iter()
                .find(|&&q| succ[q].iter().map(|&t| class[t]).eq(sig.iter().copied()));
            class[init] = match twin {
                Some(&q) => class[q],
                None => {
                    accepting_of.push(self.states[init].accepting);
                    count += 1;
                    count - 1
                }
            };
        }

        // Representative = lowest original index per class; renumber in BFS order.
        let mut rep = vec![usize::MAX; count];
        for q in 0..n {
            if rep[class[q]] == usize::MAX {
                rep[class[q]] = q;
            }
        }
        let mut order = vec![usize::MAX; count];
        let mut queue = VecDeque::from([class[init]]);
        order[class[init]] = 0;
        let mut next_id = 1;
        let mut bfs = Vec::new();
        while let Some(c) = queue.pop_front() {
            bfs.push(c);
            for e in &self.states[rep[c]].edges {
                let t = class[e.target];
                if order[t] == usize::MAX {
                    order[t] = next_id;
                    next_id += 1;
                    queue.push_back(t);
                }
            }
        }
        let states = bfs
            .iter()
            .map(|&c| {
                let src = &self.states[rep[c]];
                let mut by_target: BTreeMap<usize, Vec<Guard>> = BTreeMap::new();
                for e in &src.edges {
                    by_target.entry(order[class[e.target]]).or_default().push(e.guard);
                }
                DfaState {
                    label: src.label.clone(),
                    accepting: accepting_of[c],
                    edges: edges_from_groups(by_target),
                }
            })
            .collect();
        Dfa {
            formula: self.formula.clone(),
            support: self.support.clone(),
            states,
            initial: 0,
        }
    }

    /// Graphviz rendering; accepting states are double circles.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dfa {\n  rankdir=LR;\n  __start [shape=point];\n");
        let _ = writeln!(out, "  __start -> s{};", self.initial);
        for (q, s) in self.states.iter().enumerate() {
            let shape = if s.accepting { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  s{q} [shape={shape}, label=\"{q}: {}\"];", escape(&s.label));
        }
        for (q, s) in self.states.iter().enumerate() {
            for e in &s.edges {
                let _ = writeln!(
                    out,
                    "  s{q} -> s{} [label=\"{}\"];",
                    e.target,
                    escape(&e.guard.render(&self.support))
                );
            }
        }
        out.push_str("}\n");
        out
    }

    /// Plain-text listing of states, acceptance flags and guarded edges.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "formula: {}", self.formula);
        let _ = writeln!(out, "support: {}", self.support.join(", "));
        let _ = writeln!(out, "states: {}", self.len());
        let _ = writeln!(out, "initial: {}", self.initial);
        for (q, s) in self.states.iter().enumerate() {
            let flag = if s.accepting { "accepting" } else { "rejecting" };
            let _ = writeln!(out, "state {q} [{flag}] {}", s.label);
            for e in &s.edges {
                let _ = writeln!(out, "  {} -> {}", e.guard.render(&self.support), e.target);
            }
        }
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn renumber(class: &mut [usize], members: &[usize]) -> usize {
    let mut ids = BTreeMap::new();
    for &q in members {
        let len = ids.len();
        class[q] = *ids.entry(class[q]).or_insert(len);
    }
    ids.len()
}

fn edges_from_groups(by_target: BTreeMap<usize, Vec<Guard>>) -> Vec<Edge> {
    let mut edges = Vec::new();
    for (target, guards) in by_target {
        for guard in merge_cubes(guards) {
            edges.push(Edge { guard, target });
        }
    }
    edges
}

/// Merges a set of disjoint cubes into a (usually smaller) set of disjoint
/// cubes with the same union, by repeatedly joining cubes that differ in a
/// single literal.
fn merge_cubes(cubes: Vec<Guard>) -> Vec<Guard> {
    let mut set: BTreeSet<Guard> = cubes.into_iter().collect();
    loop {
        let mut changed = false;
        let vars = set.iter().fold(0u64, |acc, g| acc | g.mask);
        for b in (0..64).filter(|b| vars & (1 << b) != 0) {
            let bit = 1u64 << b;
            let pairs: Vec<(Guard, Guard)> = set
                .iter()
                .filter(|g| g.mask & bit != 0 && g.value & bit == 0)
                .map(|&g| {
                    (
                        g,
                        Guard {
                            mask: g.mask,
                            value: g.value | bit,
                        },
                    )
                })
                .filter(|(_, partner)| set.contains(partner))
                .collect();
            for (low, high) in pairs {
                set.remove(&low);
                set.remove(&high);
                set.insert(Guard::new(low.mask & !bit, low.value));
                changed = true;
            }
        }
        if !changed {
            return set.into_iter().collect();
        }
    }
}

/// Partition of the valuation space into cubes on which every given guard is
/// constant; returns one representative valuation per class.
fn letter_classes(guards: impl Iterator<Item = Guard>) -> Vec<u64> {
    let distinct: BTreeSet<Guard> = guards.filter(|g| g.mask != 0).collect();
    let mut parts = vec![Guard::ANY];
    for g in distinct {
        let mut next = Vec::with_capacity(parts.len());
        for c in parts {
            if c.disjoint(g) || c.subset_of(g) {
                next.push(c);
                continue;
            }
            let mut rest = c;
            let open = g.mask & !c.mask;
            for b in (0..64).filter(|b| open & (1 << b) != 0) {
                let bit = 1u64 << b;
                next.push(Guard::new(rest.mask | bit, rest.value | (!g.value & bit)));
                rest = Guard::new(rest.mask | bit, rest.value | (g.value & bit));
            }
            next.push(rest);
        }
        parts = next;
    }
    parts.into_iter().map(|c| c.value).collect()
}

// ---------------------------------------------------------------------------
// Construction

type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    True,
    False,
    Lit { atom: u32, positive: bool },
    And(NodeId, NodeId),
    Or(NodeId, NodeId),
    Next(NodeId),
    WeakNext(NodeId),
    Until(NodeId, NodeId),
    Release(NodeId, NodeId),
    Eventually(NodeId),
    Always(NodeId),
}

/// Positive combination of obligations as sorted minimal terms; each term is
/// a sorted list of obligation ids. `[]` is false, `[[]]` is true.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Comb(Vec<Vec<u32>>);

impl Comb {
    fn top() -> Comb {
        Comb(vec![Vec::new()])
    }

    fn bottom() -> Comb {
        Comb(Vec::new())
    }

    fn single(ob: u32) -> Comb {
        Comb(vec![vec![ob]])
    }

    fn normalize(mut terms: Vec<Vec<u32>>) -> Comb {
        terms.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        terms.dedup();
        let mut kept: Vec<Vec<u32>> = Vec::with_capacity(terms.len());
        for t in terms {
            if !kept.iter().any(|k| is_subset(k, &t)) {
                kept.push(t);
            }
        }
        kept.sort();
        Comb(kept)
    }

    fn or(self, other: Comb) -> Comb {
        let mut terms = self.0;
        terms.extend(other.0);
        Comb::normalize(terms)
    }

    fn and(self, other: Comb) -> Comb {
        if self.0.is_empty() || other.0.is_empty() {
            return Comb::bottom();
        }
        let mut terms = Vec::with_capacity(self.0.len() * other.0.len());
        for a in &self.0 {
            for b in &other.0 {
                terms.push(sorted_union(a, b));
            }
        }
        Comb::normalize(terms)
    }
}

fn is_subset(small: &[u32], big: &[u32]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

fn sorted_union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

struct Builder<'a> {
    formula: &'a Formula,
    opts: &'a CompileOptions,
    support: Vec<String>,
    nodes: Vec<Node>,
    node_ids: BTreeMap<Node, NodeId>,
    /// atoms tested by a node before the next letter, as a support bitmask
    tested: Vec<u64>,
    obligations: Vec<(bool, NodeId)>,
    obligation_ids: BTreeMap<(bool, NodeId), u32>,
}

impl<'a> Builder<'a> {
    fn new(formula: &'a Formula, opts: &'a CompileOptions) -> Self {
        Builder {
            formula,
            opts,
            support: formula.atoms().into_iter().collect(),
            nodes: Vec::new(),
            node_ids: BTreeMap::new(),
            tested: Vec::new(),
            obligations: Vec::new(),
            obligation_ids: BTreeMap::new(),
        }
    }

    fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.node_ids.get(&node) {
            return id;
        }
        let tested = match node {
            Node::True | Node::False | Node::Next(_) | Node::WeakNext(_) => 0,
            Node::Lit { atom, .. } => 1u64 << atom,
            Node::And(a, b) | Node::Or(a, b) | Node::Until(a, b) | Node::Release(a, b) => {
                self.tested[a as usize] | self.tested[b as usize]
            }
            Node::Eventually(a) | Node::Always(a) => self.tested[a as usize],
        };
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node.clone());
        self.tested.push(tested);
        self.node_ids.insert(node, id);
        id
    }

    fn lower(&mut self, f: &Nnf) -> NodeId {
        let node = match f {
            Nnf::True => Node::True,
            Nnf::False => Node::False,
            Nnf::Atom(a) | Nnf::NegAtom(a) => Node::Lit {
                atom: self.support.iter().position(|s| s == a).expect("atom in support") as u32,
                positive: matches!(f, Nnf::Atom(_)),
            },
            Nnf::And(a, b) => Node::And(self.lower(a), self.lower(b)),
            Nnf::Or(a, b) => Node::Or(self.lower(a), self.lower(b)),
            Nnf::Next(a) => Node::Next(self.lower(a)),
            Nnf::WeakNext(a) => Node::WeakNext(self.lower(a)),
            Nnf::Until(a, b) => Node::Until(self.lower(a), self.lower(b)),
            Nnf::Release(a, b) => Node::Release(self.lower(a), self.lower(b)),
            Nnf::Eventually(a) => Node::Eventually(self.lower(a)),
            Nnf::Always(a) => Node::Always(self.lower(a)),
        };
        self.intern(node)
    }

    fn obligation(&mut self, strong: bool, body: NodeId) -> u32 {
        if let Some(&id) = self.obligation_ids.get(&(strong, body)) {
            return id;
        }
        let id = self.obligations.len() as u32;
        self.obligations.push((strong, body));
        self.obligation_ids.insert((strong, body), id);
        id
    }

    /// One-step unfolding of `node` under the support valuation `val`.
    fn expand(&mut self, node: NodeId, val: u64) -> Comb {
        match self.nodes[node as usize].clone() {
            Node::True => Comb::top(),
            Node::False => Comb::bottom(),
            Node::Lit { atom, positive } => {
                if (val >> atom & 1 == 1) == positive {
                    Comb::top()
                } else {
                    Comb::bottom()
                }
            }
            Node::And(a, b) => {
                let x = self.expand(a, val);
                if x.0.is_empty() {
                    return x;
                }
                x.and(self.expand(b, val))
            }
            Node::Or(a, b) => {
                let x = self.expand(a, val);
                if x == Comb::top() {
                    return x;
                }
                x.or(self.expand(b, val))
            }
            Node::Next(a) => Comb::single(self.obligation(true, a)),
            Node::WeakNext(a) => Comb::single(self.obligation(false, a)),
            Node::Until(a, b) => {
                let again = Comb::single(self.obligation(true, node));
                let hold = self.expand(a, val).and(again);
                self.expand(b, val).or(hold)
            }
            Node::Release(a, b) => {
                let again = Comb::single(self.obligation(false, node));
                let escape = self.expand(a, val).or(again);
                self.expand(b, val).and(escape)
            }
            Node::Eventually(a) => {
                let again = Comb::single(self.obligation(true, node));
                self.expand(a, val).or(again)
            }
            Node::Always(a) => {
                let again = Comb::single(self.obligation(false, node));
                self.expand(a, val).and(again)
            }
        }
    }

    fn successor(&mut self, state: &Comb, val: u64) -> Comb {
        let mut acc = Comb::bottom();
        for term in &state.0 {
            let mut conj = Comb::top();
            for &ob in term {
                if conj.0.is_empty() {
                    break;
                }
                let body = self.obligations[ob as usize].1;
                conj = conj.and(self.expand(body, val));
            }
            acc = acc.or(conj);
            if acc == Comb::top() {
                break;
            }
        }
        acc
    }

    fn accepting(&self, state: &Comb) -> bool {
        state
            .0
            .iter()
            .any(|t| t.iter().all(|&ob| !self.obligations[ob as usize].0))
    }

    fn tested_by(&self, state: &Comb) -> u64 {
        state.0.iter().flatten().fold(0, |acc, &ob| {
            acc | self.tested[self.obligations[ob as usize].1 as usize]
        })
    }

    fn node_formula(&self, id: NodeId) -> Formula {
        let f = |x: NodeId| self.node_formula(x);
        match self.nodes[id as usize] {
            Node::True => Formula::True,
            Node::False => Formula::False,
            Node::Lit { atom, positive } => {
                let a = Formula::atom(&self.support[atom as usize]);
                if positive {
                    a
                } else {
                    Formula::not(a)
                }
            }
            Node::And(a, b) => Formula::and(f(a), f(b)),
            Node::Or(a, b) => Formula::or(f(a), f(b)),
            Node::Next(a) => Formula::next(f(a)),
            Node::WeakNext(a) => Formula::weak_next(f(a)),
            Node::Until(a, b) => Formula::until(f(a), f(b)),
            Node::Release(a, b) => Formula::release(f(a), f(b)),
            Node::Eventually(a) => Formula::eventually(f(a)),
            Node::Always(a) => Formula::always(f(a)),
        }
    }

    fn label(&self, state: &Comb) -> String {
        match state.0.as_slice() {
            [] => return "false".into(),
            [t] if t.is_empty() => return "true".into(),
            _ => {}
        }
        let multi = state.0.len() > 1;
        let terms: Vec<String> = state
            .0
            .iter()
            .map(|t| {
                let obs: Vec<String> = t
                    .iter()
                    .map(|&ob| {
                        let (strong, body) = self.obligations[ob as usize];
                        format!("{} {}", if strong { "X" } else { "N" }, self.node_formula(body))
                    })
                    .collect();
                if multi && obs.len() > 1 {
                    format!("({})", obs.join(" & "))
                } else {
                    obs.join(" & ")
                }
            })
            .collect();
        terms.join(" | ")
    }

    fn build(mut self) -> Result<Dfa, CompileError> {
        let root = self.lower(&self.formula.nnf());
        let init = Comb::single(self.obligation(true, root));
        let mut index: BTreeMap<Comb, usize> = BTreeMap::new();
        let mut combs = vec![init.clone()];
        index.insert(init, 0);
        let mut states = Vec::new();
        let mut q = 0;
        while q < combs.len() {
            let comb = combs[q].clone();
            let tested = self.tested_by(&comb);
            let width = tested.count_ones() as usize;
            if width > self.opts.max_state_support {
                return Err(CompileError::SupportTooLarge {
                    formula: self.formula.to_string(),
                    atoms: width,
                    limit: self.opts.max_state_support,
                });
            }
            let bits: Vec<u64> = (0..64).filter(|b| tested & (1 << b) != 0).map(|b| 1 << b).collect();
            let mut by_target: BTreeMap<usize, Vec<Guard>> = BTreeMap::new();
            for k in 0..(1u64 << width) {
                let val = bits
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| k & (1 << i) != 0)
                    .fold(0, |acc, (_, b)| acc | b);
                let next = self.successor(&comb, val);
                let target = match index.get(&next) {
                    Some(&t) => t,
                    None => {
                        if combs.len() >= self.opts.max_states {
                            return Err(CompileError::TooManyStates {
                                formula: self.formula.to_string(),
                                limit: self.opts.max_states,
                            });
                        }
                        combs.push(next.clone());
                        index.insert(next, combs.len() - 1);
                        combs.len() - 1
                    }
                };
                by_target.entry(target).or_default().push(Guard::new(tested, val));
            }
            states.push(DfaState {
                label: self.label(&comb),
                accepting: self.accepting(&comb),
                edges: edges_from_groups(by_target),
            });
            q += 1;
        }
        Ok(Dfa {
            formula: self.formula.clone(),
            support: self.support,
            states,
            initial: 0,
        })
    }
}

// ---------------------------------------------------------------------------
// Runs over abstract traces

/// Bitset over automaton states.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    words: Vec<u64>,
    len: usize,
}

impl StateSet {
    pub fn empty(len: usize) -> Self {
        StateSet {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        StateSet::from_indices(len, 0..len)
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = StateSet::empty(len);
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, q: usize) {
        assert!(q < self.len, "state {q} out of range");
        self.words[q / 64] |= 1 << (q % 64);
    }

    pub fn contains(&self, q: usize) -> bool {
        q < self.len && self.words[q / 64] & (1 << (q % 64)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of automaton states the set ranges over.
    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&q| self.contains(q))
    }
}

/// A [`Dfa`] whose guards are expressed over vocabulary bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundDfa {
    edges: Vec<Vec<(u64, u64, usize)>>,
    accepting: StateSet,
    initial: usize,
}

impl BoundDfa {
    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting.contains(q)
    }

    pub fn accepting(&self) -> &StateSet {
        &self.accepting
    }

    #[inline]
    pub fn step(&self, q: usize, letter: AbstractState) -> usize {
        let bits = letter.bits();
        for &(mask, value, target) in &self.edges[q] {
            if bits & mask == value {
                return target;
            }
        }
        unreachable!("guards of every state are total")
    }

    /// Final state and verdict; the empty trace ends in the initial state.
    pub fn run(&self, trace: &[AbstractState]) -> (usize, bool) {
        let q = trace.iter().fold(self.initial, |q, &l| self.step(q, l));
        (q, self.is_accepting(q))
    }

    /// `{q : step(q, letter) ∈ targets}`.
    pub fn step_backward(&self, targets: &StateSet, letter: AbstractState) -> StateSet {
        let mut out = StateSet::empty(self.len());
        for q in 0..self.len() {
            if targets.contains(self.step(q, letter)) {
                out.insert(q);
            }
        }
        out
    }
}
