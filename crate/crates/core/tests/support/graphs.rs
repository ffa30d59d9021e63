use std::collections::BTreeMap;

use alignrw::{ClassExpression, Correspondence, EntityIri, Origin, Side};
use proptest::prelude::*;

pub fn node(i: usize, side: Side) -> ClassExpression {
    let name = match side {
        Side::Source => format!("S{i}"),
        Side::Target => format!("T{i}"),
    };
    ClassExpression::Atom(EntityIri::new(side, name).unwrap())
}

/// Up to 8 nodes with random sides and a random edge set; weights are
/// multiples of 0.05 so exact comparison is meaningful.
pub fn graph() -> impl Strategy<Value = (Vec<Side>, Vec<(usize, usize, f64)>)> {
    prop::collection::vec(any::<bool>(), 2..=8).prop_flat_map(|sides| {
        let n = sides.len();
        let sides: Vec<Side> = sides
            .into_iter()
            .map(|s| if s { Side::Source } else { Side::Target })
            .collect();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let m = pairs.len();
        (
            Just(sides),
            prop::collection::vec((any::<bool>(), 1u32..=20), m).prop_map(move |picks| {
                pairs
                    .iter()
                    .zip(picks)
                    .filter(|(_, (on, _))| *on)
                    .map(|(&(a, b), (_, w))| (a, b, f64::from(w) * 0.05))
                    .collect::<Vec<_>>()
            }),
        )
    })
}

pub fn correspondences(sides: &[Side], edges: &[(usize, usize, f64)]) -> Vec<Correspondence> {
    edges
        .iter()
        .map(|&(a, b, w)| {
            // Keep the source field source-side whenever one member is.
            let (a, b) = if sides[a] == Side::Target && sides[b] == Side::Source { (b, a) } else { (a, b) };
            Correspondence {
                source: node(a, sides[a]),
                target: node(b, sides[b]),
                confidence: w,
                origin: Origin::Asserted,
            }
        })
        .collect()
}

/// Best bottleneck over every simple path, by exhaustive search.
pub fn brute_force(n: usize, edges: &[(usize, usize, f64)], from: usize, to: usize) -> Option<f64> {
    let mut adj = vec![vec![None; n]; n];
    for &(a, b, w) in edges {
        adj[a][b] = Some(w);
        adj[b][a] = Some(w);
    }
    fn dfs(at: usize, to: usize, bottleneck: f64, seen: &mut Vec<bool>, adj: &[Vec<Option<f64>>], best: &mut Option<f64>) {
        if at == to {
            *best = Some(best.map_or(bottleneck, |b: f64| b.max(bottleneck)));
            return;
        }
        for next in 0..adj.len() {
            if let (Some(w), false) = (adj[at][next], seen[next]) {
                seen[next] = true;
                dfs(next, to, bottleneck.min(w), seen, adj, best);
                seen[next] = false;
            }
        }
    }
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut best = None;
    dfs(from, to, f64::INFINITY, &mut seen, &adj, &mut best);
    best
}

/// Expected derived pairs: source/target members joined by a path but not by
/// a direct edge, with their widest-path confidence.
pub fn brute_force_closure(sides: &[Side], edges: &[(usize, usize, f64)]) -> BTreeMap<(String, String), f64> {
    let n = sides.len();
    let direct = |a: usize, b: usize| edges.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a));
    let mut expected = BTreeMap::new();
    for a in (0..n).filter(|&a| sides[a] == Side::Source) {
        for b in (0..n).filter(|&b| sides[b] == Side::Target) {
            if direct(a, b) {
                continue;
            }
            if let Some(w) = brute_force(n, edges, a, b) {
                expected.insert((node(a, Side::Source).to_string(), node(b, Side::Target).to_string()), w);
            }
        }
    }
    expected
}
