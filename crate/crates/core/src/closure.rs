//! Equivalence transitivity over asserted correspondences.
//!
//! Every member becomes a node; every correspondence an undirected edge
//! weighted by its confidence. Two members connected through any chain of
//! equivalences are equivalent, and the derived confidence is the widest
//! path value: the best, over all connecting paths, of the weakest edge.

use std::collections::{BTreeMap, HashMap};

use crate::alignment::{Correspondence, Origin};
use crate::model::{ClassExpression, Side};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceGraph {
    nodes: Vec<ClassExpression>,
    /// Keyed by `(min, max)` node index.
    edges: BTreeMap<(usize, usize), f64>,
}

impl EquivalenceGraph {
    pub fn nodes(&self) -> &[ClassExpression] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, e: &ClassExpression) -> Option<usize> {
        self.nodes.iter().position(|n| n == e)
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    fn side(&self, i: usize) -> Side {
        self.nodes[i].side().unwrap_or(Side::Source)
    }

    /// Connected components as sorted node-index lists, in order of their
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in self.edges.keys() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.nodes.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// All-pairs widest path values within one component, by max-min
    /// relaxation in Floyd-Warshall order.
    fn widest_paths(&self, component: &[usize], adjacency: &[Vec<(usize, f64)>]) -> Vec<Vec<f64>> {
        let n = component.len();
        let local: HashMap<usize, usize> =
            component.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let mut w = vec![vec![f64::NEG_INFINITY; n]; n];
        for (i, &a) in component.iter().enumerate() {
            w[i][i] = f64::INFINITY;
            for &(b, c) in &adjacency[a] {
                let j = local[&b];
                w[i][j] = w[i][j].max(c);
            }
        }
        for k in 0..n {
            for i in 0..n {
                let wik = w[i][k];
                if wik == f64::NEG_INFINITY || i == k {
                    continue;
                }
                let (row_i, row_k) = if i < k {
                    let (lo, hi) = w.split_at_mut(k);
                    (&mut lo[i], &hi[0])
                } else {
                    let (lo, hi) = w.split_at_mut(i);
                    (&mut hi[0], &lo[k])
                };
                for (wij, &wkj) in row_i.iter_mut().zip(row_k.iter()) {
                    let through = wik.min(wkj);
                    if through > *wij {
                        *wij = through;
                    }
                }
            }
        }
        w
    }
}

/// One node per distinct canonical member, one edge per member pair
/// (the highest confidence wins on duplicates).
pub fn build_equivalence_graph<'a>(
    cs: impl IntoIterator<Item = &'a Correspondence>,
) -> EquivalenceGraph {
    let mut nodes: Vec<ClassExpression> = Vec::new();
    let mut index: HashMap<ClassExpression, usize> = HashMap::new();
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut intern = |e: &ClassExpression, nodes: &mut Vec<ClassExpression>| -> usize {
        *index.entry(e.clone()).or_insert_with(|| {
            nodes.push(e.clone());
            nodes.len() - 1
        })
    };
    for c in cs {
        let a = intern(&c.source, &mut nodes);
        let b = intern(&c.target, &mut nodes);
        if a == b {
            continue;
        }
        let w = edges.entry((a.min(b), a.max(b))).or_insert(c.confidence);
        if c.confidence > *w {
            *w = c.confidence;
        }
    }
    EquivalenceGraph { nodes, edges }
}

/// Derives every cross-ontology equivalence implied by transitivity that is
/// not already asserted as a direct edge. Output is sorted by source then
/// target serialization.
pub fn derive_closure(g: &EquivalenceGraph) -> Vec<Correspondence> {
    derive_closure_with(g, Execution::default())
}

pub fn derive_closure_with(g: &EquivalenceGraph, exec: Execution) -> Vec<Correspondence> {
    let components = g.components();
    let mut adjacency = vec![Vec::new(); g.nodes.len()];
    for (&(a, b), &c) in &g.edges {
        adjacency[a].push((b, c));
        adjacency[b].push((a, c));
    }
    let per_component = par::map(exec, &components, |comp| {
        if comp.len() < 3 {
            return Vec::new();
        }
        let w = g.widest_paths(comp, &adjacency);
        let mut out = Vec::new();
        for (i, &a) in comp.iter().enumerate() {
            if g.side(a) != Side::Source {
                continue;
            }
            for (j, &b) in comp.iter().enumerate() {
                if g.side(b) != Side::Target || g.edge_weight(a, b).is_some() {
                    continue;
                }
                let conf = w[i][j];
                if conf.is_finite() {
                    out.push(Correspondence {
                        source: g.nodes[a].clone(),
                        target: g.nodes[b].clone(),
                        confidence: conf,
                        origin: Origin::Derived,
                    });
                }
            }
        }
        out
    });
    let mut out: Vec<(String, String, Correspondence)> = per_component
        .into_iter()
        .flatten()
        .map(|c| (c.source.to_string(), c.target.to_string(), c))
        .collect();
    out.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
    out.into_iter().map(|(_, _, c)| c).collect()
}

/// Asserted correspondences followed by derived ones at or above `min_confidence`.
pub fn close(cs: &[Correspondence], min_confidence: f64) -> Vec<Correspondence> {
    close_with(cs, min_confidence, Execution::default())
}

pub fn close_with(cs: &[Correspondence], min_confidence: f64, exec: Execution) -> Vec<Correspondence> {
    let g = build_equivalence_graph(cs);
    let mut out = cs.to_vec();
    out.extend(
        derive_closure_with(&g, exec)
            .into_iter()
            .filter(|c| c.confidence >= min_confidence),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::Alignment;

    fn alignment(entries: &str) -> Alignment {
        Alignment::from_json_str(&format!(
            r#"{{ "source_prefixes": {{"s": "http://s#"}}, "target_prefixes": {{"t": "http://t#"}},
                 "correspondences": [{entries}] }}"#
        ))
        .unwrap()
    }

    #[test]
    fn counting_nodes_and_edges() {
        let a = alignment(
            r#"{"source": "A", "target": "X"}, {"source": "B", "target": "X"}, {"source": "A", "target": "Y"}"#,
        );
        let g = build_equivalence_graph(&a.correspondences);
        assert_eq!((g.node_count(), g.edge_count()), (4, 3));
    }

    #[test]
    fn duplicate_edge_keeps_max() {
        let a = alignment(
            r#"{"source": "A", "target": "X", "confidence": 0.7}, {"source": "A", "target": "X", "confidence": 0.9}"#,
        );
        let g = build_equivalence_graph(&a.correspondences);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_weight(0, 1), Some(0.9));
    }

    #[test]
    fn reasoning_one_shape() {
        // E ≡ F1 inside the source ontology, E ≡ F1' across.
        let a = alignment(
            r#"{"source": "E", "target": "s:F and (s:p some s:G)"},
               {"source": "E", "target": "H and (q value true)"}"#,
        );
        let d = derive_closure(&build_equivalence_graph(&a.correspondences));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].source.to_string(), "F and (p some G)");
        assert_eq!(d[0].target.to_string(), "H and (q value true)");
        assert_eq!(d[0].origin, Origin::Derived);
    }

    #[test]
    fn chain_takes_weakest_link() {
        let a = alignment(
            r#"{"source": "A", "target": "X", "confidence": 1.0},
               {"source": "B", "target": "X", "confidence": 0.9},
               {"source": "B", "target": "Y", "confidence": 0.8}"#,
        );
        let d = derive_closure(&build_equivalence_graph(&a.correspondences));
        let ay = d
            .iter()
            .find(|c| c.source.to_string() == "A" && c.target.to_string() == "Y")
            .unwrap();
        assert_eq!(ay.confidence, 0.8);
        // B-X and A-X are asserted; only A-Y is new.
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn widest_of_two_paths() {
        // A - X (0.6) - B... two routes from A to Y: via X (min 0.6) or via Z (min 0.9).
        let a = alignment(
            r#"{"source": "A", "target": "X", "confidence": 0.6},
               {"source": "B", "target": "X", "confidence": 1.0},
               {"source": "B", "target": "Y", "confidence": 1.0},
               {"source": "A", "target": "Z", "confidence": 0.9},
               {"source": "C", "target": "Z", "confidence": 0.95},
               {"source": "C", "target": "Y", "confidence": 0.9}"#,
        );
        let d = derive_closure(&build_equivalence_graph(&a.correspondences));
        let ay = d
            .iter()
            .find(|c| c.source.to_string() == "A" && c.target.to_string() == "Y")
            .unwrap();
        assert_eq!(ay.confidence, 0.9);
    }

    #[test]
    fn same_side_pairs_discarded() {
        let a = alignment(r#"{"source": "A", "target": "X"}, {"source": "B", "target": "X"}"#);
        let d = derive_closure(&build_equivalence_graph(&a.correspondences));
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let a = alignment(
            r#"{"source": "A", "target": "X"}, {"source": "B", "target": "X"}, {"source": "B", "target": "Y", "confidence": 0.3},
               {"source": "C", "target": "Z"}, {"source": "D", "target": "Z"}, {"source": "D", "target": "W"}"#,
        );
        let g = build_equivalence_graph(&a.correspondences);
        assert_eq!(
            derive_closure_with(&g, Execution::Sequential),
            derive_closure_with(&g, Execution::Parallel)
        );
    }
}
