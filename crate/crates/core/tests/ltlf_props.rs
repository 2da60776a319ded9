mod common;

use clipquery_core::{AbstractState, Formula};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printer_round_trips(f in common::formula(6)) {
        let printed = f.to_string();
        prop_assert_eq!(Formula::parse(&printed).unwrap(), f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn nnf_preserves_verdicts(f in common::formula(4), t in common::trace(1, 8)) {
        let v = common::vocab();
        let nnf = f.nnf().to_formula();
        prop_assert_eq!(f.evaluate(&t, &v).unwrap(), nnf.evaluate(&t, &v).unwrap());
    }

    #[test]
    fn eventually_is_true_until(f in common::formula(4), t in common::trace(1, 8)) {
        let v = common::vocab();
        prop_assert_eq!(
            Formula::eventually(f.clone()).evaluate(&t, &v).unwrap(),
            Formula::until(Formula::True, f).evaluate(&t, &v).unwrap()
        );
    }
}

proptest! {
    #[test]
    fn next_boundary_on_single_letters(f in common::formula(4), bits in 0u64..16) {
        let v = common::vocab();
        let t = [AbstractState::from_bits(bits)];
        prop_assert!(!Formula::next(f.clone()).evaluate(&t, &v).unwrap());
        prop_assert!(Formula::weak_next(f).evaluate(&t, &v).unwrap());
    }

    #[test]
    fn always_is_false_release(f in common::formula(4), t in common::trace(1, 8)) {
        let v = common::vocab();
        prop_assert_eq!(
            Formula::always(f.clone()).evaluate(&t, &v).unwrap(),
            Formula::release(Formula::False, f).evaluate(&t, &v).unwrap()
        );
    }
}
