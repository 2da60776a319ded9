//! Hand-written trace fixtures.
//!
//! One abstract state per line, predicate names separated by commas. A line
//! holding only `-` is the empty state; blank lines and `#` comments are
//! skipped.
//!
//! ```text
//! # overtake
//! lane-2, behind
//! lane-1
//! -
//! ```

use std::collections::BTreeSet;

use clipquery_core::{AbstractState, Vocabulary};

pub fn parse_names(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            if l == "-" {
                Vec::new()
            } else {
                l.split(',')
                    .map(|n| n.trim().to_string())
                    .filter(|n| !n.is_empty())
                    .collect()
            }
        })
        .collect()
}

/// A flat vocabulary over every name in the trace plus `extra`.
pub fn vocabulary_for<'a>(
    steps: &'a [Vec<String>],
    extra: impl IntoIterator<Item = &'a String>,
) -> Result<Vocabulary, String> {
    let names: BTreeSet<&str> = steps
        .iter()
        .flatten()
        .map(String::as_str)
        .chain(extra.into_iter().map(String::as_str))
        .collect();
    let names: Vec<&str> = names.into_iter().collect();
    Vocabulary::from_names(&names).map_err(|e| e.to_string())
}

pub fn encode(steps: &[Vec<String>], vocab: &Vocabulary) -> Result<Vec<AbstractState>, String> {
    steps
        .iter()
        .map(|s| vocab.state_from_names(s).map_err(|e| e.to_string()))
        .collect()
}

pub fn render(trace: &[AbstractState], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for s in trace {
        let names = vocab.names_of(*s);
        if names.is_empty() {
            out.push('-');
        } else {
            out.push_str(&names.join(","));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let steps = parse_names("# c\nlane-2, behind\n\n-\nlane-1\n");
        assert_eq!(steps.len(), 3);
        let v = vocabulary_for(&steps, []).unwrap();
        let t = encode(&steps, &v).unwrap();
        assert_eq!(render(&t, &v), "behind,lane-2\n-\nlane-1\n");
    }
}
