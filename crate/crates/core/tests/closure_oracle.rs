use std::collections::BTreeMap;

use alignrw::closure::{build_equivalence_graph, close, derive_closure, derive_closure_with};
use alignrw::Execution;
use proptest::prelude::*;

mod support;
use support::graphs::{brute_force_closure, correspondences, graph};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_brute_force((sides, edges) in graph()) {
        let cs = correspondences(&sides, &edges);
        let derived: BTreeMap<(String, String), f64> = derive_closure(&build_equivalence_graph(&cs))
            .into_iter()
            .map(|c| ((c.source.to_string(), c.target.to_string()), c.confidence))
            .collect();
        let expected = brute_force_closure(&sides, &edges);
        prop_assert_eq!(derived, expected);
    }

    #[test]
    fn modes_agree((sides, edges) in graph()) {
        let g = build_equivalence_graph(&correspondences(&sides, &edges));
        prop_assert_eq!(derive_closure_with(&g, Execution::Sequential), derive_closure_with(&g, Execution::Parallel));
    }

    #[test]
    fn closing_twice_adds_nothing((sides, edges) in graph()) {
        let once = close(&correspondences(&sides, &edges), 0.0);
        prop_assert!(derive_closure(&build_equivalence_graph(&once)).is_empty());
    }

    #[test]
    fn adding_an_edge_keeps_derived_pairs((sides, edges) in graph(), extra in (0usize..8, 0usize..8, 1u32..=20)) {
        let n = sides.len();
        let (a, b) = (extra.0 % n, extra.1 % n);
        prop_assume!(a != b);
        let derived = |es: &[(usize, usize, f64)]| -> BTreeMap<(String, String), f64> {
            derive_closure(&build_equivalence_graph(&correspondences(&sides, es)))
                .into_iter()
                .map(|c| ((c.source.to_string(), c.target.to_string()), c.confidence))
                .collect()
        };
        let before = derived(&edges);
        let mut more = edges.clone();
        more.push((a.min(b), a.max(b), f64::from(extra.2) * 0.05));
        let after = derived(&more);
        let added = correspondences(&sides, &more[more.len() - 1..]).remove(0);
        let added = (added.source.to_string(), added.target.to_string());
        for (pair, w) in &before {
            // A derived pair may only leave the derived set by becoming asserted.
            if *pair == added {
                continue;
            }
            let now = after.get(pair);
            prop_assert!(now.is_some_and(|v| v >= w), "{:?} weakened: {} -> {:?}", pair, w, now);
        }
    }
}
