use proptest::prelude::*;
use stochlog::terms::{canonical, is_variant, parse_term, unify, unify_with, Term};

fn leaf() -> impl Strategy<Value = Term> {
    prop_oneof![
        prop::sample::select(vec!["a", "b", "nil", "+", "tok:3", "Hello world"]).prop_map(Term::atom),
        (-50i64..50).prop_map(Term::int),
        prop::sample::select(vec!["X", "Y", "Z", "_A"]).prop_map(Term::var),
    ]
}

fn term() -> impl Strategy<Value = Term> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (prop::sample::select(vec!["f", "g", "+", "-", "*", ":-", "is"]), prop::collection::vec(inner.clone(), 1..3))
                .prop_map(|(f, args)| Term::apply(f, args)),
            prop::collection::vec(inner.clone(), 0..4).prop_map(Term::list),
            (prop::collection::vec(inner.clone(), 1..3), inner).prop_map(|(xs, tail)| Term::list_with_tail(xs, tail)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn printing_round_trips(t in term()) {
        let text = t.to_string();
        let back = parse_term(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, t, "{}", text);
    }

    #[test]
    fn unifiers_equate_and_are_idempotent(a in term(), b in term()) {
        if let Some(s) = unify(&a, &b) {
            let (sa, sb) = (s.apply(&a), s.apply(&b));
            prop_assert_eq!(&sa, &sb);
            prop_assert_eq!(s.apply(&sa), sa);
        }
    }

    #[test]
    fn unification_is_symmetric(a in term(), b in term()) {
        let ab = unify(&a, &b);
        let ba = unify(&b, &a);
        prop_assert_eq!(ab.is_some(), ba.is_some());
        if let (Some(x), Some(y)) = (ab, ba) {
            prop_assert!(is_variant(&x.apply(&a), &y.apply(&a)));
        }
    }

    #[test]
    fn a_term_unifies_with_itself_trivially(t in term()) {
        let s = unify(&t, &t).unwrap();
        prop_assert!(s.is_empty());
    }

    #[test]
    fn renaming_preserves_the_variant_class(t in term(), scope in 1u32..100) {
        let r = t.rename(scope);
        prop_assert!(is_variant(&t, &r));
        prop_assert_eq!(canonical(&t), canonical(&r));
        prop_assert!(unify(&t, &r).is_some());
    }

    #[test]
    fn occurs_check_rejects_cyclic_bindings(t in term()) {
        let x = Term::var("X");
        let wrapped = Term::apply("f", vec![x.clone(), t]);
        prop_assert!(unify_with(&x, &wrapped, true).is_none());
    }

    #[test]
    fn ground_terms_unify_iff_equal(a in term(), b in term()) {
        if a.is_ground() && b.is_ground() {
            prop_assert_eq!(unify(&a, &b).is_some(), a == b);
        }
    }
}
