#![allow(dead_code)]

use clipquery_core::{AbstractState, Formula, Vocabulary};
use proptest::prelude::*;

pub const ATOMS: [&str; 4] = ["p", "q", "r", "s"];

pub fn vocab() -> Vocabulary {
    Vocabulary::from_names(&ATOMS).unwrap()
}

/// Random formulas over `p, q, r, s` with nesting depth at most `depth`.
pub fn formula(depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        1 => Just(Formula::True),
        1 => Just(Formula::False),
        6 => (0..ATOMS.len()).prop_map(|i| Formula::atom(ATOMS[i])),
    ];
    leaf.prop_recursive(depth, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            inner.clone().prop_map(Formula::next),
            inner.clone().prop_map(Formula::weak_next),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::until(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::release(a, b)),
            inner.clone().prop_map(Formula::eventually),
            inner.prop_map(Formula::always),
        ]
    })
}

pub fn trace(min: usize, max: usize) -> impl Strategy<Value = Vec<AbstractState>> {
    prop::collection::vec((0u64..16).prop_map(AbstractState::from_bits), min..=max)
}

/// Restart semantics by exhaustive evaluation: from `cursor`, the smallest
/// end `l` with some satisfying segment `[k, l]`, `k >= cursor`, and for it
/// the largest such `k`. Segments are evaluated from scratch.
pub fn brute_scan(f: &Formula, trace: &[AbstractState], v: &Vocabulary) -> Vec<(usize, usize)> {
    let first = |cursor: usize| {
        (cursor..=trace.len()).find_map(|l| {
            (cursor..=l)
                .rev()
                .find(|&k| f.evaluate(&trace[k - 1..l], v).unwrap())
                .map(|k| (k, l))
        })
    };
    let mut out = Vec::new();
    let mut cursor = 1;
    while let Some((k, l)) = first(cursor) {
        out.push((k, l));
        cursor = l + 1;
    }
    out
}
