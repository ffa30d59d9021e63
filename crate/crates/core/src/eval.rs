//! In-memory fact stores, a BGP evaluator for the query subset, and an
//! oracle that checks rewrites against synthetic aligned data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alignment::{build_dictionary, AlignmentDictionary, Correspondence};
use crate::closure::build_equivalence_graph;
use crate::error::FactsError;
use crate::model::{ClassExpression, PrefixTable, Side, Vocabulary};
use crate::par::{self, Execution};
use crate::rewrite::{member_query, rewrite_query_with, RewriteOptions};
use crate::sparql::{lex, GroupPattern, Iri, SelectQuery, Term, TermReader, Tok, TriplePattern, RDF_NS};

/// Ground triples tagged with the ontology they belong to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactStore {
    side: Side,
    facts: BTreeSet<TriplePattern>,
}

impl FactStore {
    pub fn new(side: Side) -> Self {
        FactStore {
            side,
            facts: BTreeSet::new(),
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Adds a ground triple; returns false if it was already present.
    ///
    /// # Panics
    /// If the triple contains a variable.
    pub fn insert(&mut self, t: TriplePattern) -> bool {
        assert!(
            t.terms().iter().all(|x| !matches!(x, Term::Variable(_))),
            "facts must be ground"
        );
        self.facts.insert(t)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TriplePattern> {
        self.facts.iter()
    }

    pub fn contains(&self, t: &TriplePattern) -> bool {
        self.facts.contains(t)
    }

    /// Line-oriented text, one `s p o .` per line.
    pub fn to_text(&self, prefixes: &PrefixTable) -> String {
        let mut out = String::new();
        for t in &self.facts {
            for (k, term) in t.terms().into_iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                crate::sparql::write_term(&mut out, term, prefixes);
            }
            out.push_str(" .\n");
        }
        out
    }
}

/// Parses facts for `side`. Prefixed names resolve against both prefix
/// tables so that IRIs of the other ontology are reported as such.
pub fn parse_facts(text: &str, side: Side, vocab: &Vocabulary) -> Result<FactStore, FactsError> {
    let mut both: PrefixTable = vocab.source.clone();
    for (l, ns) in vocab.target.iter() {
        if !both.contains_label(l) {
            both.insert(l, ns);
        }
    }
    let own = vocab.table(side);
    let mut store = FactStore::new(side);
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let parse_err = |message: String| FactsError::Parse {
            line: line_no,
            message,
        };
        let toks = lex(raw).map_err(|e| parse_err(e.to_string()))?;
        if toks.is_empty() {
            continue;
        }
        let mut r = TermReader {
            toks: &toks,
            pos: 0,
            prefixes: both.clone(),
            ambient: None,
        };
        let t = r.triple().map_err(|e| parse_err(e.to_string()))?;
        match r.peek() {
            Some(Tok::Dot) if r.pos + 1 == toks.len() => {}
            _ => return Err(parse_err("expected '.' at end of line".into())),
        }
        for term in t.terms() {
            match term {
                Term::Variable(v) => return Err(parse_err(format!("variable ?{v} in a fact"))),
                Term::Iri(i) if i.ns != RDF_NS && !own.contains_namespace(&i.ns) => {
                    let mut shown = String::new();
                    crate::sparql::write_iri(&mut shown, i, &both);
                    return Err(FactsError::WrongSide {
                        line: line_no,
                        iri: shown,
                        side,
                    });
                }
                _ => {}
            }
        }
        store.insert(t);
    }
    Ok(store)
}

pub fn load_facts(path: impl AsRef<Path>, side: Side, vocab: &Vocabulary) -> Result<FactStore, FactsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FactsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_facts(&text, side, vocab)
}

pub type Row = Vec<Option<Term>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultSet {
    pub header: Vec<String>,
    pub rows: Vec<Row>,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub type Solution = BTreeMap<String, Term>;

fn bind(sol: &Solution, pattern: &TriplePattern, fact: &TriplePattern) -> Option<Solution> {
    let mut out: Option<Solution> = None;
    for (p, f) in pattern.terms().into_iter().zip(fact.terms()) {
        match p {
            Term::Variable(v) => {
                let current = out.as_ref().unwrap_or(sol);
                match current.get(v) {
                    Some(bound) if bound != f => return None,
                    Some(_) => {}
                    None => {
                        out.get_or_insert_with(|| sol.clone()).insert(v.clone(), f.clone());
                    }
                }
            }
            other if other != f => return None,
            _ => {}
        }
    }
    Some(out.unwrap_or_else(|| sol.clone()))
}

fn compatible(a: &Solution, b: &Solution) -> bool {
    a.iter().all(|(k, v)| b.get(k).is_none_or(|w| w == v))
}

/// Bag of solutions of a group: its triples joined in order, then joined
/// with the multiset union of its branches.
pub fn solutions(g: &GroupPattern, store: &FactStore) -> Vec<Solution> {
    let mut sols = vec![Solution::new()];
    for t in &g.triples {
        let mut next = Vec::new();
        for s in &sols {
            next.extend(store.iter().filter_map(|f| bind(s, t, f)));
        }
        sols = next;
        if sols.is_empty() {
            return sols;
        }
    }
    if let Some(branches) = &g.union {
        let alt: Vec<Solution> = branches.iter().flat_map(|b| solutions(b, store)).collect();
        let mut joined = Vec::new();
        for s in &sols {
            for a in &alt {
                if compatible(s, a) {
                    let mut m = s.clone();
                    m.extend(a.iter().map(|(k, v)| (k.clone(), v.clone())));
                    joined.push(m);
                }
            }
        }
        sols = joined;
    }
    sols
}

/// Evaluates `q` over `s` with multiset semantics; DISTINCT removes
/// duplicate rows keeping first occurrences.
pub fn evaluate(q: &SelectQuery, s: &FactStore) -> ResultSet {
    let mut rows: Vec<Row> = solutions(&q.where_clause, s)
        .into_iter()
        .map(|sol| q.projection.iter().map(|v| sol.get(v).cloned()).collect())
        .collect();
    if q.distinct {
        let mut seen = BTreeSet::new();
        rows.retain(|r| seen.insert(r.clone()));
    }
    ResultSet {
        header: q.projection.clone(),
        rows,
    }
}

// ---------------------------------------------------------------------------
// Synthetic aligned data

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub source: FactStore,
    pub target: FactStore,
    pub warnings: Vec<String>,
    /// Members whose equivalence class could not be instantiated.
    pub skipped: BTreeSet<String>,
}

struct Emitter<'a> {
    vocab: &'a Vocabulary,
    rng: &'a mut ChaCha8Rng,
}

impl Emitter<'_> {
    fn individual(&self, side: Side, local: &str) -> Iri {
        let ns = self.vocab.table(side).default_entry().map(|(_, ns)| ns).unwrap_or_default();
        Iri::new(ns, local)
    }

    fn entity(&self, e: &crate::model::EntityIri) -> Iri {
        Iri::new(self.vocab.namespace_of(e).unwrap_or_default(), e.local.clone())
    }

    /// Facts making `subject` an instance of `expr`.
    fn emit(&mut self, expr: &ClassExpression, side: Side, subject: &Iri, fresh: &mut usize, out: &mut Vec<TriplePattern>) {
        let s = Term::Iri(subject.clone());
        match expr {
            ClassExpression::Atom(c) => out.push(TriplePattern::new(
                s,
                Term::Iri(Iri::rdf_type()),
                Term::Iri(self.entity(c)),
            )),
            ClassExpression::Value { property, literal } => out.push(TriplePattern::new(
                s,
                Term::Iri(self.entity(property)),
                Term::Literal(literal.clone()),
            )),
            ClassExpression::Some { property, filler } => {
                *fresh += 1;
                let obj = self.individual(side, &format!("{}_o{}", subject.local, fresh));
                out.push(TriplePattern::new(s, Term::Iri(self.entity(property)), Term::Iri(obj.clone())));
                self.emit(filler, side, &obj, fresh, out);
            }
            ClassExpression::And(cs) => {
                for c in cs {
                    self.emit(c, side, subject, fresh, out);
                }
            }
            ClassExpression::Or(cs) => {
                let pick = self.rng.random_range(0..cs.len());
                self.emit(&cs[pick], side, subject, fresh, out);
            }
            ClassExpression::Only { .. } | ClassExpression::Card { .. } => {
                unreachable!("components with universal or cardinality restrictions are skipped")
            }
        }
    }
}

fn noise_count(n: usize) -> usize {
    n.div_ceil(2)
}

/// Seeded synthetic facts: `n` individuals per equivalence class (each an
/// instance of every member on both sides, under the same local name) and
/// `ceil(n / 2)` noise individuals carrying partial member facts that
/// satisfy no member at all.
pub fn generate_aligned_pair(cs: &[Correspondence], vocab: &Vocabulary, n: usize, seed: u64) -> AlignedPair {
    let g = build_equivalence_graph(cs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pair = AlignedPair {
        source: FactStore::new(Side::Source),
        target: FactStore::new(Side::Target),
        warnings: Vec::new(),
        skipped: BTreeSet::new(),
    };
    let nodes = g.nodes();
    let mut class_members: Vec<Vec<&ClassExpression>> = Vec::new();
    let mut noise_pool: Vec<(Side, &ClassExpression)> = Vec::new();
    for comp in g.components() {
        let members: Vec<&ClassExpression> = comp.iter().map(|&i| &nodes[i]).collect();
        let sides: BTreeSet<Side> = members.iter().filter_map(|m| m.side().ok()).collect();
        if sides.len() < 2 {
            continue;
        }
        if let Some(bad) = members.iter().find(|m| m.has_non_existential_restriction()) {
            pair.warnings.push(format!(
                "skipped equivalence class of {bad}: universal and cardinality restrictions cannot be instantiated"
            ));
            pair.skipped.extend(members.iter().map(|m| m.to_string()));
            continue;
        }
        let is_property = members
            .iter()
            .all(|m| m.as_atom().is_some_and(|a| a.looks_like_property()));
        let c = class_members.len() + 1;
        let mut em = Emitter { vocab, rng: &mut rng };
        for i in 0..n {
            if is_property {
                for m in &members {
                    let side = m.side().unwrap();
                    let s = em.individual(side, &format!("r{c}_{i}"));
                    let o = em.individual(side, &format!("r{c}_{i}_o"));
                    let p = em.entity(m.as_atom().unwrap());
                    store_mut(&mut pair, side).insert(TriplePattern::new(Term::Iri(s), Term::Iri(p), Term::Iri(o)));
                }
                continue;
            }
            let mut fresh = 0;
            for m in &members {
                let side = m.side().unwrap();
                let subject = em.individual(side, &format!("c{c}_{i}"));
                let mut facts = Vec::new();
                em.emit(m, side, &subject, &mut fresh, &mut facts);
                let store = store_mut(&mut pair, side);
                facts.into_iter().for_each(|f| {
                    store.insert(f);
                });
            }
        }
        if !is_property {
            noise_pool.extend(members.iter().map(|m| (m.side().unwrap(), *m)));
        }
        class_members.push(members);
    }

    // Noise: a random member with one of its facts removed.
    let mut noise_subjects: Vec<(Side, String)> = Vec::new();
    if !noise_pool.is_empty() {
        for k in 0..noise_count(n) * class_members.len() {
            let (side, m) = noise_pool[rng.random_range(0..noise_pool.len())];
            let mut em = Emitter { vocab, rng: &mut rng };
            let local = format!("noise{k}");
            let subject = em.individual(side, &local);
            let mut facts = Vec::new();
            em.emit(m, side, &subject, &mut 0, &mut facts);
            if facts.len() > 1 {
                let drop = rng.random_range(0..facts.len());
                facts.remove(drop);
            } else {
                let decoy = Iri::new(subject.ns.clone(), "UnalignedThing");
                facts = vec![TriplePattern::new(
                    Term::Iri(subject),
                    Term::Iri(Iri::rdf_type()),
                    Term::Iri(decoy),
                )];
            }
            let store = store_mut(&mut pair, side);
            facts.into_iter().for_each(|f| {
                store.insert(f);
            });
            noise_subjects.push((side, local));
        }
    }

    // A noise individual that happens to satisfy some member is removed.
    for side in [Side::Source, Side::Target] {
        let mut hits: BTreeSet<String> = BTreeSet::new();
        for m in class_members.iter().flatten().filter(|m| m.side().ok() == Some(side)) {
            let (q, _) = member_query(m, vocab);
            let store = store_mut(&mut pair, side);
            for row in evaluate(&q, store).rows {
                if let Some(Some(Term::Iri(i))) = row.first() {
                    if i.local.starts_with("noise") {
                        hits.insert(i.local.clone());
                    }
                }
            }
        }
        if hits.is_empty() {
            continue;
        }
        let store = store_mut(&mut pair, side);
        store.facts.retain(|t| match &t.subject {
            Term::Iri(i) => !hits.iter().any(|h| i.local == *h || i.local.starts_with(&format!("{h}_"))),
            _ => true,
        });
    }
    pair
}

fn store_mut(pair: &mut AlignedPair, side: Side) -> &mut FactStore {
    match side {
        Side::Source => &mut pair.source,
        Side::Target => &mut pair.target,
    }
}

// ---------------------------------------------------------------------------
// Oracle

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCase {
    pub source: String,
    pub target: String,
    pub passed: bool,
    pub skipped: bool,
    /// Number of rewritten queries checked.
    pub rewrites: usize,
    pub source_rows: usize,
    pub detail: Option<String>,
}

/// Rows restricted to `vars`, individuals compared by local name.
fn comparable(rs: &ResultSet, vars: &[String]) -> BTreeSet<Vec<Option<String>>> {
    let idx: Vec<usize> = vars
        .iter()
        .map(|v| rs.header.iter().position(|h| h == v).unwrap())
        .collect();
    rs.rows
        .iter()
        .map(|r| {
            idx.iter()
                .map(|&i| {
                    r[i].as_ref().map(|t| match t {
                        Term::Iri(iri) => iri.local.clone(),
                        other => {
                            let mut s = String::new();
                            crate::sparql::write_term(&mut s, other, &PrefixTable::new());
                            s
                        }
                    })
                })
                .collect()
        })
        .collect()
}

fn row_diff(a: &BTreeSet<Vec<Option<String>>>, b: &BTreeSet<Vec<Option<String>>>) -> String {
    let show = |r: &Vec<Option<String>>| {
        r.iter()
            .map(|x| x.as_deref().unwrap_or("UNBOUND"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut out = String::new();
    for r in a.difference(b).take(5) {
        let _ = write!(out, "\n  - ({})", show(r));
    }
    for r in b.difference(a).take(5) {
        let _ = write!(out, "\n  + ({})", show(r));
    }
    out
}

/// Checks one correspondence: its source member as a query over the source
/// facts against every rewrite of it over the target facts.
pub fn check_correspondence(
    c: &Correspondence,
    d: &AlignmentDictionary,
    pair: &AlignedPair,
) -> OracleCase {
    let mut case = OracleCase {
        source: c.source.to_string(),
        target: c.target.to_string(),
        passed: false,
        skipped: false,
        rewrites: 0,
        source_rows: 0,
        detail: None,
    };
    if pair.skipped.contains(&case.source) {
        case.skipped = true;
        case.passed = true;
        case.detail = Some("not instantiable".into());
        return case;
    }
    let (q, _) = member_query(&c.source, d.vocab());
    let expected = evaluate(&q, &pair.source);
    case.source_rows = expected.len();
    if expected.is_empty() {
        case.detail = Some("source query returned no rows".into());
        return case;
    }
    let outputs = match rewrite_query_with(&q, d, &RewriteOptions::default()) {
        Ok(o) => o,
        Err(e) => {
            case.detail = Some(format!("rewrite failed: {e}"));
            return case;
        }
    };
    case.rewrites = outputs.len();
    for out in &outputs {
        let got = evaluate(&out.query, &pair.target);
        let shared: Vec<String> = expected
            .header
            .iter()
            .filter(|v| got.header.contains(v))
            .cloned()
            .collect();
        let (a, b) = (comparable(&expected, &shared), comparable(&got, &shared));
        if a != b {
            case.detail = Some(format!(
                "rewrite differs:\n{}rows (- source only, + target only):{}",
                crate::sparql::serialize_select(&out.query),
                row_diff(&a, &b)
            ));
            return case;
        }
    }
    case.passed = true;
    case
}

/// Runs the oracle for every cross-ontology correspondence in `cs`, using a
/// dictionary built from `cs` and facts generated from `reference`.
pub fn run_oracle(
    cs: &[Correspondence],
    reference: &[Correspondence],
    vocab: &Vocabulary,
    n: usize,
    seed: u64,
    exec: Execution,
) -> (AlignedPair, Vec<OracleCase>) {
    let pair = generate_aligned_pair(reference, vocab, n, seed);
    let d = build_dictionary(vocab, cs);
    let cross: Vec<&Correspondence> = cs.iter().filter(|c| c.is_cross()).collect();
    let cases = par::map(exec, &cross, |c| check_correspondence(c, &d, &pair));
    (pair, cases)
}
