mod common;

use clipquery_core::search::{find_all, SearchStats};
use clipquery_core::{AbstractState, Dataset, Episode, EpisodeMeta, Formula, QueryAutomata, SearchOptions};
use common::{brute_scan, formula, trace, vocab};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scan_agrees_with_exhaustive_search(f in formula(4), t in trace(1, 30)) {
        let v = vocab();
        let q = QueryAutomata::compile(&f, &v).unwrap();
        let mut stats = SearchStats::default();
        let got: Vec<_> = q.scan(&t, &mut stats).into_iter().map(|m| (m.start, m.end)).collect();
        prop_assert_eq!(got, brute_scan(&f, &t, &v));
        prop_assert!(stats.letter_reads() <= 2 * t.len());
    }

    #[test]
    fn every_match_satisfies_the_formula(f in formula(5), t in trace(1, 50)) {
        let v = vocab();
        let q = QueryAutomata::compile(&f, &v).unwrap();
        let mut stats = SearchStats::default();
        for m in q.scan(&t, &mut stats) {
            prop_assert!(f.evaluate(m.slice(&t), &v).unwrap());
        }
    }
}

fn single_episode(t: Vec<AbstractState>) -> Dataset<()> {
    let meta = EpisodeMeta {
        policy: "fixture".into(),
        seed: 0,
        trigger_step: None,
    };
    let ep = Episode::new(0, meta, vec![(); t.len()], t).unwrap();
    Dataset::from_parts(vocab(), vec![ep]).unwrap()
}

#[test]
fn read_bound_on_adversarial_traces() {
    let v = vocab();
    let p = v.state_from_names(&["p"]).unwrap();
    let q = v.state_from_names(&["q"]).unwrap();
    let none = AbstractState::EMPTY;
    let n = 2000;
    let cases: Vec<(&str, Vec<AbstractState>)> = vec![
        // one long match ending at the last letter
        (
            "p & X F q",
            std::iter::once(p)
                .chain(std::iter::repeat_n(none, n - 2))
                .chain([q])
                .collect(),
        ),
        // a match at every position
        ("true", vec![none; n]),
        // long backward scan per match, then restart
        ("p U q", (0..n).map(|i| if i % 50 == 49 { q } else { p }).collect()),
        ("F q", vec![none; n]),
        ("G p", vec![p; n]),
    ];
    for (text, t) in cases {
        let f = Formula::parse(text).unwrap();
        let qa = QueryAutomata::compile(&f, &v).unwrap();
        let opts = SearchOptions {
            min_len: 1,
            ..SearchOptions::default()
        };
        let res = find_all(&qa, &single_episode(t.clone()), &opts);
        assert!(
            res.stats.letter_reads() <= 2 * n,
            "{text}: {} reads",
            res.stats.letter_reads()
        );
        let mut s = SearchStats::default();
        assert_eq!(res.clips.len(), qa.scan(&t, &mut s).len(), "{text}");
    }
}

#[test]
fn max_matches_sets_more_available() {
    let v = vocab();
    let qa = QueryAutomata::compile(&Formula::parse("p").unwrap(), &v).unwrap();
    let p = v.state_from_names(&["p"]).unwrap();
    let ds = single_episode(vec![p; 10]);
    let opts = SearchOptions {
        max_matches: Some(4),
        min_len: 1,
        pad: 0,
    };
    let res = find_all(&qa, &ds, &opts);
    assert_eq!(res.clips.len(), 4);
    assert!(res.more_available);
    let all = find_all(
        &qa,
        &ds,
        &SearchOptions {
            max_matches: Some(10),
            ..opts
        },
    );
    assert!(!all.more_available);
}

#[test]
fn short_matches_are_dropped_but_skipped() {
    let v = vocab();
    let qa = QueryAutomata::compile(&Formula::parse("p | (q & X q)").unwrap(), &v).unwrap();
    let p = v.state_from_names(&["p"]).unwrap();
    let q = v.state_from_names(&["q"]).unwrap();
    let ds = single_episode(vec![p, q, q, p]);
    let res = find_all(&qa, &ds, &SearchOptions::default());
    let spans: Vec<_> = res.clips.iter().map(|c| (c.matched.start, c.matched.end)).collect();
    assert_eq!(spans, [(2, 3)]);
}
