use alignrw::{
    canonicalize, parse_class_expression, parse_select, serialize_class_expression, serialize_select,
    ClassExpression, Side,
};
use proptest::prelude::*;

mod support;
use support::parsers::{expression, query, vocab};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn expression_round_trip(e in expression()) {
        let text = serialize_class_expression(&e);
        let back = parse_class_expression(&text, Side::Source, &vocab());
        prop_assert_eq!(back.as_ref(), Ok(&e), "text: {}", text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn canonicalize_is_idempotent(e in expression()) {
        prop_assert_eq!(canonicalize(&e), e);
    }

    #[test]
    fn connective_order_is_irrelevant(children in prop::collection::vec(expression(), 2..5), seed in any::<u64>()) {
        let mut shuffled = children.clone();
        // Deterministic rotation and reversal stand in for arbitrary permutations.
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        if seed % 2 == 0 {
            shuffled.reverse();
        }
        prop_assert_eq!(
            canonicalize(&ClassExpression::And(children.clone())),
            canonicalize(&ClassExpression::And(shuffled.clone()))
        );
        prop_assert_eq!(
            canonicalize(&ClassExpression::Or(children)),
            canonicalize(&ClassExpression::Or(shuffled))
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn query_round_trip(q in query()) {
        let text = serialize_select(&q);
        let back = parse_select(&text);
        prop_assert_eq!(back.as_ref(), Ok(&q), "text:\n{}", text);
    }
}
