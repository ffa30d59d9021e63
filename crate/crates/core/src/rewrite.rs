//! Compiling correspondence members into graph patterns and rewriting
//! source queries into target queries.
//!
//! A dictionary key is compiled into a basic graph pattern rooted at an
//! anchor variable. Rewriting finds sub-BGPs of the query that are
//! isomorphic to a key's pattern (longest patterns first), removes them and
//! splices in the compiled target member bound to the same anchor.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::alignment::{AlignmentDictionary, DictEntry, Origin, PatternKind};
use crate::error::RewriteError;
use crate::par::{self, Execution};
use crate::model::{ClassExpression, EntityIri, Literal, PrefixTable, Side, Vocabulary};
use crate::sparql::{GroupPattern, Iri, SelectQuery, Term, TriplePattern, RDF_NS};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternTerm {
    Var(String),
    Entity(EntityIri),
    Literal(Literal),
    RdfType,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternTriple {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl PatternTriple {
    fn new(subject: PatternTerm, predicate: PatternTerm, object: PatternTerm) -> Self {
        PatternTriple {
            subject,
            predicate,
            object,
        }
    }
}

/// A compiled member: conjunctive `triples` plus, for disjunctive members,
/// the alternatives that are conjoined with them.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBgp {
    pub anchor: String,
    pub triples: Vec<PatternTriple>,
    pub disjunctive: Option<Vec<Vec<PatternTriple>>>,
    pub warnings: Vec<String>,
}

impl PatternBgp {
    /// Total number of triples, alternatives included.
    pub fn size(&self) -> usize {
        self.triples.len() + self.disjunctive.as_ref().map_or(0, |a| a.iter().map(Vec::len).sum())
    }

    /// Variables in first-use order, anchor first.
    pub fn variables(&self) -> Vec<String> {
        let mut out = vec![self.anchor.clone()];
        let all = self
            .triples
            .iter()
            .chain(self.disjunctive.iter().flatten().flatten());
        for t in all {
            for term in [&t.subject, &t.predicate, &t.object] {
                if let PatternTerm::Var(v) = term {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
        }
        out
    }
}

pub(crate) const APPROXIMATED: &str = "restriction approximated existentially";

/// Compiles `expr` with internal variables named `y1`, `y2`, ...
pub fn compile_pattern(expr: &ClassExpression, anchor: &str) -> PatternBgp {
    let mut k = 0;
    let mut gen = || loop {
        k += 1;
        let name = format!("y{k}");
        if name != anchor {
            return name;
        }
    };
    compile_pattern_with(expr, anchor, &mut gen)
}

/// Compiles `expr` drawing internal variable names from `fresh`.
pub fn compile_pattern_with(
    expr: &ClassExpression,
    anchor: &str,
    fresh: &mut dyn FnMut() -> String,
) -> PatternBgp {
    let mut warnings = Vec::new();
    let (triples, alts) = dnf(expr, anchor, fresh, &mut warnings);
    warnings.sort();
    warnings.dedup();
    let (triples, disjunctive) = match alts {
        Some(mut a) if a.len() == 1 => {
            let mut t = triples;
            t.extend(a.pop().unwrap());
            (t, None)
        }
        other => (triples, other),
    };
    PatternBgp {
        anchor: anchor.to_string(),
        triples,
        disjunctive,
        warnings,
    }
}

type Dnf = (Vec<PatternTriple>, Option<Vec<Vec<PatternTriple>>>);

fn dnf(
    expr: &ClassExpression,
    anchor: &str,
    fresh: &mut dyn FnMut() -> String,
    warnings: &mut Vec<String>,
) -> Dnf {
    let a = || PatternTerm::Var(anchor.to_string());
    match expr {
        ClassExpression::Atom(c) => (
            vec![PatternTriple::new(a(), PatternTerm::RdfType, PatternTerm::Entity(c.clone()))],
            None,
        ),
        ClassExpression::Value { property, literal } => (
            vec![PatternTriple::new(
                a(),
                PatternTerm::Entity(property.clone()),
                PatternTerm::Literal(literal.clone()),
            )],
            None,
        ),
        ClassExpression::Some { property, filler } => {
            restriction(anchor, property, Some(filler), fresh, warnings)
        }
        ClassExpression::Only { property, filler } => {
            warnings.push(format!("{APPROXIMATED}: {expr}"));
            restriction(anchor, property, Some(filler), fresh, warnings)
        }
        ClassExpression::Card {
            property, filler, ..
        } => {
            warnings.push(format!("{APPROXIMATED}: {expr}"));
            restriction(anchor, property, filler.as_deref(), fresh, warnings)
        }
        ClassExpression::And(children) => {
            let mut common = Vec::new();
            let mut alts: Option<Vec<Vec<PatternTriple>>> = None;
            for c in children {
                let (t, a2) = dnf(c, anchor, fresh, warnings);
                common.extend(t);
                if let Some(a2) = a2 {
                    alts = Some(match alts {
                        None => a2,
                        Some(a1) => a1
                            .iter()
                            .flat_map(|x| {
                                a2.iter().map(move |y| {
                                    let mut v = x.clone();
                                    v.extend(y.iter().cloned());
                                    v
                                })
                            })
                            .collect(),
                    });
                }
            }
            (common, alts)
        }
        ClassExpression::Or(children) => {
            let mut alts = Vec::new();
            for c in children {
                let (t, a2) = dnf(c, anchor, fresh, warnings);
                match a2 {
                    None => alts.push(t),
                    Some(a2) => {
                        for y in a2 {
                            let mut v = t.clone();
                            v.extend(y);
                            alts.push(v);
                        }
                    }
                }
            }
            (Vec::new(), Some(alts))
        }
    }
}

fn restriction(
    anchor: &str,
    property: &EntityIri,
    filler: Option<&ClassExpression>,
    fresh: &mut dyn FnMut() -> String,
    warnings: &mut Vec<String>,
) -> Dnf {
    let y = fresh();
    let mut triples = vec![PatternTriple::new(
        PatternTerm::Var(anchor.to_string()),
        PatternTerm::Entity(property.clone()),
        PatternTerm::Var(y.clone()),
    )];
    match filler {
        None => (triples, None),
        Some(f) => {
            let (t, alts) = dnf(f, &y, fresh, warnings);
            triples.extend(t);
            (triples, alts)
        }
    }
}

// ---------------------------------------------------------------------------
// Matching

/// A pattern variable -> query term homomorphism and the query triples it covers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatchBinding {
    /// Sorted indices into the group's triples.
    pub consumed: Vec<usize>,
    pub map: BTreeMap<String, Term>,
}

impl MatchBinding {
    pub fn anchor_term(&self, anchor: &str) -> Option<&Term> {
        self.map.get(anchor)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Var(String),
    Const(Term),
}

type SlotTriple = [Slot; 3];

fn entity_iri(e: &EntityIri, vocab: &Vocabulary) -> Iri {
    Iri::new(vocab.namespace_of(e).unwrap_or_default(), e.local.clone())
}

fn to_term(t: &PatternTerm, vocab: &Vocabulary) -> Term {
    match t {
        PatternTerm::Var(v) => Term::Variable(v.clone()),
        PatternTerm::Entity(e) => Term::Iri(entity_iri(e, vocab)),
        PatternTerm::Literal(l) => Term::Literal(l.clone()),
        PatternTerm::RdfType => Term::Iri(Iri::rdf_type()),
    }
}

pub(crate) fn to_triple(t: &PatternTriple, vocab: &Vocabulary) -> TriplePattern {
    TriplePattern::new(
        to_term(&t.subject, vocab),
        to_term(&t.predicate, vocab),
        to_term(&t.object, vocab),
    )
}

fn slots(ts: &[PatternTriple], vocab: &Vocabulary) -> Vec<SlotTriple> {
    let slot = |t: &PatternTerm| match t {
        PatternTerm::Var(v) => Slot::Var(v.clone()),
        other => Slot::Const(to_term(other, vocab)),
    };
    ts.iter()
        .map(|t| [slot(&t.subject), slot(&t.predicate), slot(&t.object)])
        .collect()
}

/// Injective homomorphisms of `pattern` into `triples` mapping every
/// pattern variable to a distinct query variable. `seed` pre-binds
/// variables; `available` filters candidate triple indices.
fn homomorphisms(
    pattern: &[SlotTriple],
    triples: &[TriplePattern],
    seed: &BTreeMap<String, Term>,
    available: &dyn Fn(usize) -> bool,
) -> Vec<MatchBinding> {
    fn extend(
        k: usize,
        pattern: &[SlotTriple],
        triples: &[TriplePattern],
        available: &dyn Fn(usize) -> bool,
        map: &mut BTreeMap<String, Term>,
        used: &mut Vec<usize>,
        out: &mut Vec<MatchBinding>,
    ) {
        if k == pattern.len() {
            let mut consumed = used.clone();
            consumed.sort_unstable();
            out.push(MatchBinding {
                consumed,
                map: map.clone(),
            });
            return;
        }
        for (idx, t) in triples.iter().enumerate() {
            if used.contains(&idx) || !available(idx) {
                continue;
            }
            let mut added: Vec<String> = Vec::new();
            let mut ok = true;
            for (slot, term) in pattern[k].iter().zip(t.terms()) {
                match slot {
                    Slot::Const(c) => ok = c == term,
                    Slot::Var(v) => match map.get(v) {
                        Some(bound) => ok = bound == term,
                        None => {
                            let fresh_image = matches!(term, Term::Variable(_))
                                && !map.values().any(|b| b == term);
                            if fresh_image {
                                map.insert(v.clone(), term.clone());
                                added.push(v.clone());
                            } else {
                                ok = false;
                            }
                        }
                    },
                }
                if !ok {
                    break;
                }
            }
            if ok {
                used.push(idx);
                extend(k + 1, pattern, triples, available, map, used, out);
                used.pop();
            }
            for v in added {
                map.remove(&v);
            }
        }
    }
    let mut out = Vec::new();
    let mut map = seed.clone();
    extend(0, pattern, triples, available, &mut map, &mut Vec::new(), &mut out);
    out.sort();
    out.dedup();
    out
}

/// Every embedding of a conjunctive pattern into the group's own triples
/// (union branches are not searched). Disjunctive patterns yield nothing;
/// the rewriter matches those against union blocks branch by branch.
pub fn match_pattern(p: &PatternBgp, g: &GroupPattern, vocab: &Vocabulary) -> Vec<MatchBinding> {
    if p.disjunctive.is_some() || p.triples.is_empty() {
        return Vec::new();
    }
    homomorphisms(&slots(&p.triples, vocab), &g.triples, &BTreeMap::new(), &|_| true)
}

// ---------------------------------------------------------------------------
// Rewriting

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppliedCorrespondence {
    pub source: String,
    pub target: String,
    pub kind: PatternKind,
    pub confidence: f64,
    pub origin: Origin,
    /// Path of union-branch indices from the top-level group.
    pub group: Vec<usize>,
    pub consumed: Vec<usize>,
    /// Whether the group's union block was consumed by a disjunctive key.
    pub consumed_union: bool,
    pub binding: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewriteReport {
    pub confidence: f64,
    pub applied: Vec<AppliedCorrespondence>,
    pub dropped_variables: BTreeSet<String>,
    pub unmapped_iris: BTreeSet<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteOutput {
    pub query: SelectQuery,
    pub report: RewriteReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteOptions {
    /// Fail when source vocabulary survives in the output.
    pub strict: bool,
    /// Upper bound on the number of alternative output queries.
    pub max_branches: usize,
}

impl Default for RewriteOptions {
    fn default() -> Self {
        RewriteOptions {
            strict: true,
            max_branches: 4096,
        }
    }
}

struct Candidate<'d> {
    entry: &'d DictEntry,
    key: String,
    anchor: String,
    common: Vec<SlotTriple>,
    alternatives: Option<Vec<Vec<SlotTriple>>>,
    size: usize,
}

fn candidates<'d>(d: &'d AlignmentDictionary) -> Vec<Candidate<'d>> {
    let mut out: Vec<Candidate<'d>> = d
        .entries()
        .filter(|e| !e.is_property_key() && !e.values.is_empty())
        .map(|entry| {
            let p = compile_pattern(&entry.key, "x");
            Candidate {
                entry,
                key: entry.key.to_string(),
                anchor: p.anchor.clone(),
                common: slots(&p.triples, d.vocab()),
                alternatives: p
                    .disjunctive
                    .as_ref()
                    .map(|alts| alts.iter().map(|a| slots(a, d.vocab())).collect()),
                size: p.size(),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then_with(|| b.entry.best_confidence().total_cmp(&a.entry.best_confidence()))
            .then_with(|| a.key.cmp(&b.key))
    });
    out
}

/// Where every variable occurs: (group path, triple index).
type Occurrences = HashMap<String, Vec<(Vec<usize>, usize)>>;

fn occurrences(g: &GroupPattern, path: &mut Vec<usize>, out: &mut Occurrences) {
    for (i, t) in g.triples.iter().enumerate() {
        for term in t.terms() {
            if let Term::Variable(v) = term {
                out.entry(v.clone()).or_default().push((path.clone(), i));
            }
        }
    }
    if let Some(bs) = &g.union {
        for (j, b) in bs.iter().enumerate() {
            path.push(j);
            occurrences(b, path, out);
            path.pop();
        }
    }
}

/// Internal pattern variables must be confined to the consumed triples,
/// otherwise removing those triples would disconnect the rest of the query.
fn internals_confined(
    b: &MatchBinding,
    anchor: &str,
    path: &[usize],
    occ: &Occurrences,
) -> bool {
    b.map.iter().filter(|(k, _)| k.as_str() != anchor).all(|(_, t)| {
        let Term::Variable(v) = t else { return true };
        occ.get(v).is_none_or(|places| {
            places
                .iter()
                .all(|(p, i)| p.as_slice() == path && b.consumed.binary_search(i).is_ok())
        })
    })
}

#[derive(Debug, Clone)]
struct Application<'d> {
    entry: &'d DictEntry,
    path: Vec<usize>,
    binding: MatchBinding,
    anchor_var: String,
    consumed_union: bool,
}

fn plan_group<'d>(
    g: &GroupPattern,
    path: &mut Vec<usize>,
    cands: &[Candidate<'d>],
    occ: &Occurrences,
    apps: &mut Vec<Application<'d>>,
) {
    let mut consumed: BTreeSet<usize> = BTreeSet::new();
    let mut union_taken = false;
    for c in cands {
        match &c.alternatives {
            None => {
                let avail = |i: usize| !consumed.contains(&i);
                let found = homomorphisms(&c.common, &g.triples, &BTreeMap::new(), &avail);
                for b in found {
                    if b.consumed.iter().any(|i| consumed.contains(i))
                        || !internals_confined(&b, &c.anchor, path, occ)
                    {
                        continue;
                    }
                    let Some(Term::Variable(anchor_var)) = b.anchor_term(&c.anchor).cloned() else {
                        continue;
                    };
                    consumed.extend(b.consumed.iter().copied());
                    apps.push(Application {
                        entry: c.entry,
                        path: path.clone(),
                        binding: b,
                        anchor_var,
                        consumed_union: false,
                    });
                }
            }
            Some(alts) => {
                if union_taken {
                    continue;
                }
                let Some(branches) = &g.union else { continue };
                if let Some(b) = match_union(c, alts, g, branches, &consumed, path, occ) {
                    let Some(Term::Variable(anchor_var)) = b.anchor_term(&c.anchor).cloned() else {
                        continue;
                    };
                    consumed.extend(b.consumed.iter().copied());
                    union_taken = true;
                    apps.push(Application {
                        entry: c.entry,
                        path: path.clone(),
                        binding: b,
                        anchor_var,
                        consumed_union: true,
                    });
                }
            }
        }
    }
    if !union_taken {
        if let Some(bs) = &g.union {
            for (j, b) in bs.iter().enumerate() {
                path.push(j);
                plan_group(b, path, cands, occ, apps);
                path.pop();
            }
        }
    }
}

/// Matches a disjunctive key against the group's union block: the common
/// part against the group's triples, and each alternative against exactly
/// one branch, covering that branch completely.
fn match_union(
    c: &Candidate<'_>,
    alts: &[Vec<SlotTriple>],
    g: &GroupPattern,
    branches: &[GroupPattern],
    consumed: &BTreeSet<usize>,
    path: &[usize],
    occ: &Occurrences,
) -> Option<MatchBinding> {
    if alts.len() != branches.len() || branches.iter().any(|b| b.union.is_some()) {
        return None;
    }
    let avail = |i: usize| !consumed.contains(&i);
    let commons = if c.common.is_empty() {
        vec![MatchBinding {
            consumed: vec![],
            map: BTreeMap::new(),
        }]
    } else {
        homomorphisms(&c.common, &g.triples, &BTreeMap::new(), &avail)
    };
    for base in commons {
        if !internals_confined(&base, &c.anchor, path, occ) {
            continue;
        }
        let seed: BTreeMap<String, Term> = base
            .map
            .iter()
            .filter(|(k, _)| **k == c.anchor)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut used = vec![false; alts.len()];
        if assign_branches(c, alts, branches, 0, &seed, &mut used, path, occ).is_some() {
            let mut b = base;
            if b.map.is_empty() {
                // The anchor was bound while matching the branches.
                if let Some(anchor) = first_branch_anchor(c, alts, branches) {
                    b.map.insert(c.anchor.clone(), anchor);
                }
            }
            return Some(b);
        }
    }
    None
}

fn first_branch_anchor(c: &Candidate<'_>, alts: &[Vec<SlotTriple>], branches: &[GroupPattern]) -> Option<Term> {
    alts.iter().find_map(|a| {
        homomorphisms(a, &branches[0].triples, &BTreeMap::new(), &|_| true)
            .into_iter()
            .find(|m| m.consumed.len() == branches[0].triples.len())
            .and_then(|m| m.map.get(&c.anchor).cloned())
    })
}

#[allow(clippy::too_many_arguments)]
fn assign_branches(
    c: &Candidate<'_>,
    alts: &[Vec<SlotTriple>],
    branches: &[GroupPattern],
    j: usize,
    seed: &BTreeMap<String, Term>,
    used: &mut [bool],
    path: &[usize],
    occ: &Occurrences,
) -> Option<()> {
    if j == branches.len() {
        return Some(());
    }
    let branch = &branches[j];
    let mut bpath = path.to_vec();
    bpath.push(j);
    for i in 0..alts.len() {
        if used[i] || alts[i].len() != branch.triples.len() {
            continue;
        }
        for m in homomorphisms(&alts[i], &branch.triples, seed, &|_| true) {
            if m.consumed.len() != branch.triples.len() || !internals_confined(&m, &c.anchor, &bpath, occ) {
                continue;
            }
            let mut next_seed = seed.clone();
            if let Some(a) = m.map.get(&c.anchor) {
                next_seed.insert(c.anchor.clone(), a.clone());
            }
            used[i] = true;
            if assign_branches(c, alts, branches, j + 1, &next_seed, used, path, occ).is_some() {
                return Some(());
            }
            used[i] = false;
        }
    }
    None
}

/// Predicate substitutions from property-to-property entries.
fn property_map(d: &AlignmentDictionary) -> BTreeMap<Iri, &DictEntry> {
    d.entries()
        .filter(|e| e.is_property_key())
        .filter_map(|e| Some((entity_iri(e.key.as_atom()?, d.vocab()), e)))
        .collect()
}

fn residual_predicates(
    g: &GroupPattern,
    path: &mut Vec<usize>,
    apps: &[Application<'_>],
    out: &mut BTreeSet<Iri>,
) {
    let consumed: BTreeSet<usize> = apps
        .iter()
        .filter(|a| a.path == *path)
        .flat_map(|a| a.binding.consumed.iter().copied())
        .collect();
    for (i, t) in g.triples.iter().enumerate() {
        if !consumed.contains(&i) {
            if let Term::Iri(p) = &t.predicate {
                out.insert(p.clone());
            }
        }
    }
    let union_taken = apps.iter().any(|a| a.path == *path && a.consumed_union);
    if let (false, Some(bs)) = (union_taken, &g.union) {
        for (j, b) in bs.iter().enumerate() {
            path.push(j);
            residual_predicates(b, path, apps, out);
            path.pop();
        }
    }
}

/// One point of choice in the output: a matched subgraph or a predicate.
enum Choice<'d> {
    Subgraph(usize),
    Predicate(Iri, &'d DictEntry),
}

struct Build<'a, 'd> {
    vocab: &'a Vocabulary,
    apps: &'a [Application<'d>],
    /// Chosen value index per application.
    app_choice: Vec<usize>,
    predicates: BTreeMap<Iri, Iri>,
    next_var: usize,
    taken: &'a BTreeSet<String>,
    warnings: Vec<String>,
}

impl Build<'_, '_> {
    fn fresh(&mut self) -> String {
        loop {
            let name = format!("v{}", self.next_var);
            self.next_var += 1;
            if !self.taken.contains(&name) {
                return name;
            }
        }
    }

    fn instantiate(&mut self, app_idx: usize) -> (Vec<TriplePattern>, Option<Vec<GroupPattern>>) {
        let app = &self.apps[app_idx];
        let value = &app.entry.values[self.app_choice[app_idx]];
        let anchor = app.anchor_var.clone();
        let mut names = Vec::new();
        let p = {
            let mut gen = || {
                let n = self.fresh_placeholder(names.len());
                names.push(n.clone());
                n
            };
            compile_pattern_with(&value.target, &anchor, &mut gen)
        };
        // Resolve placeholders to real fresh names in first-use order.
        let mut rename: HashMap<String, String> = HashMap::new();
        for n in &names {
            let fresh = self.fresh();
            rename.insert(n.clone(), fresh);
        }
        self.warnings.extend(p.warnings.iter().cloned());
        let conv = |t: &PatternTriple| {
            let mut tp = to_triple(t, self.vocab);
            for term in [&mut tp.subject, &mut tp.predicate, &mut tp.object] {
                if let Term::Variable(v) = term {
                    if let Some(r) = rename.get(v) {
                        *v = r.clone();
                    }
                }
            }
            tp
        };
        let triples = p.triples.iter().map(conv).collect();
        let alts = p.disjunctive.as_ref().map(|alts| {
            alts.iter()
                .map(|a| GroupPattern::from_triples(a.iter().map(conv).collect()))
                .collect()
        });
        (triples, alts)
    }

    fn fresh_placeholder(&self, k: usize) -> String {
        format!("\u{0}fresh{k}")
    }

    fn group(&mut self, g: &GroupPattern, path: &mut Vec<usize>) -> GroupPattern {
        let here: Vec<usize> = (0..self.apps.len())
            .filter(|&i| self.apps[i].path == *path)
            .collect();
        let mut first_of: BTreeMap<usize, usize> = BTreeMap::new();
        let mut consumed: BTreeSet<usize> = BTreeSet::new();
        let mut trailing: Vec<usize> = Vec::new();
        let mut union_taken = false;
        for &i in &here {
            let app = &self.apps[i];
            union_taken |= app.consumed_union;
            consumed.extend(app.binding.consumed.iter().copied());
            match app.binding.consumed.first() {
                Some(&f) => {
                    first_of.insert(f, i);
                }
                None => trailing.push(i),
            }
        }
        let mut triples: Vec<TriplePattern> = Vec::new();
        let mut unions: Vec<Vec<GroupPattern>> = Vec::new();
        for (idx, t) in g.triples.iter().enumerate() {
            if let Some(&app) = first_of.get(&idx) {
                let (ts, alts) = self.instantiate(app);
                triples.extend(ts);
                unions.extend(alts);
            } else if !consumed.contains(&idx) {
                let mut t = t.clone();
                if let Term::Iri(p) = &t.predicate {
                    if let Some(np) = self.predicates.get(p) {
                        t.predicate = Term::Iri(np.clone());
                    }
                }
                triples.push(t);
            }
        }
        for app in trailing {
            let (ts, alts) = self.instantiate(app);
            triples.extend(ts);
            unions.extend(alts);
        }
        let mut seen = BTreeSet::new();
        triples.retain(|t| seen.insert(t.clone()));
        let mut out = GroupPattern::from_triples(triples);
        if !union_taken {
            if let Some(bs) = &g.union {
                let mut branches = Vec::with_capacity(bs.len());
                for (j, b) in bs.iter().enumerate() {
                    path.push(j);
                    branches.push(self.group(b, path));
                    path.pop();
                }
                out.union = Some(branches);
            }
        }
        for u in unions {
            out.conjoin_union(u);
        }
        out
    }
}

fn collect_iris(g: &GroupPattern, out: &mut BTreeSet<Iri>) {
    for t in g.all_triples() {
        for term in t.terms() {
            if let Term::Iri(i) = term {
                out.insert(i.clone());
            }
        }
    }
}

fn compact(iri: &Iri, prefixes: &PrefixTable) -> String {
    let mut s = String::new();
    crate::sparql::write_iri(&mut s, iri, prefixes);
    s
}

/// Output prefix table: input declarations still in use or not bound to a
/// source namespace, then target prefixes needed by new IRIs.
fn output_prefixes(q: &SelectQuery, vocab: &Vocabulary, used: &BTreeSet<Iri>) -> PrefixTable {
    let used_ns: BTreeSet<&str> = used.iter().map(|i| i.ns.as_str()).collect();
    let mut out = PrefixTable::new();
    for (label, ns) in q.prefixes.iter() {
        let source_only = vocab.source.contains_namespace(ns) && !vocab.target.contains_namespace(ns);
        if used_ns.contains(ns) || !source_only {
            out.insert(label, ns);
        }
    }
    for (label, ns) in vocab.target.iter() {
        if used_ns.contains(ns) && !out.contains_namespace(ns) && !out.contains_label(label) {
            out.insert(label, ns);
        }
    }
    out
}

/// Rewrites `q` in strict mode. Each output comes with its report; outputs
/// are ordered by descending confidence.
pub fn rewrite_query(
    q: &SelectQuery,
    d: &AlignmentDictionary,
) -> Result<Vec<(SelectQuery, RewriteReport)>, RewriteError> {
    Ok(rewrite_query_with(q, d, &RewriteOptions::default())?
        .into_iter()
        .map(|o| (o.query, o.report))
        .collect())
}

/// Rewrites a batch of queries, in input order.
pub fn rewrite_many(
    queries: &[SelectQuery],
    d: &AlignmentDictionary,
    opts: &RewriteOptions,
    exec: Execution,
) -> Vec<Result<Vec<RewriteOutput>, RewriteError>> {
    par::map(exec, queries, |q| rewrite_query_with(q, d, opts))
}

pub fn rewrite_query_with(
    q: &SelectQuery,
    d: &AlignmentDictionary,
    opts: &RewriteOptions,
) -> Result<Vec<RewriteOutput>, RewriteError> {
    let vocab = d.vocab();
    let cands = candidates(d);
    let mut occ = Occurrences::new();
    occurrences(&q.where_clause, &mut Vec::new(), &mut occ);
    let mut apps: Vec<Application<'_>> = Vec::new();
    plan_group(&q.where_clause, &mut Vec::new(), &cands, &occ, &mut apps);

    let props = property_map(d);
    let mut preds = BTreeSet::new();
    residual_predicates(&q.where_clause, &mut Vec::new(), &apps, &mut preds);
    let mut choices: Vec<Choice<'_>> = (0..apps.len()).map(Choice::Subgraph).collect();
    let mut warnings = Vec::new();
    for p in preds {
        if let Some(e) = props.get(&p) {
            if e.values.iter().any(|v| v.target.is_atom()) {
                choices.push(Choice::Predicate(p, e));
            } else {
                warnings.push(format!("property {} has no simple counterpart", e.key));
            }
        }
    }
    let arity: Vec<usize> = choices
        .iter()
        .map(|c| match c {
            Choice::Subgraph(i) => apps[*i].entry.values.len(),
            Choice::Predicate(_, e) => e.values.iter().filter(|v| v.target.is_atom()).count(),
        })
        .collect();
    let total = arity.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    match total {
        Some(t) if t <= opts.max_branches => {}
        other => {
            return Err(RewriteError::TooManyBranches(
                other.unwrap_or(usize::MAX),
                opts.max_branches,
            ))
        }
    }

    let taken: BTreeSet<String> = occ.keys().cloned().chain(q.projection.iter().cloned()).collect();
    let first_fresh = taken
        .iter()
        .filter_map(|v| v.strip_prefix('v')?.parse::<usize>().ok())
        .max()
        .unwrap_or(0)
        + 1;

    let mut outputs: Vec<(usize, RewriteOutput)> = Vec::new();
    let mut combo = vec![0usize; choices.len()];
    let mut ordinal = 0;
    loop {
        let mut confidence = 1.0;
        let mut applied = Vec::new();
        let mut predicates = BTreeMap::new();
        let mut app_choice = vec![0; apps.len()];
        for (ci, c) in choices.iter().enumerate() {
            match c {
                Choice::Subgraph(i) => {
                    let app = &apps[*i];
                    let v = &app.entry.values[combo[ci]];
                    app_choice[*i] = combo[ci];
                    confidence *= v.confidence;
                    applied.push(AppliedCorrespondence {
                        source: app.entry.key.to_string(),
                        target: v.target.to_string(),
                        kind: app.entry.kind_of(v),
                        confidence: v.confidence,
                        origin: v.origin,
                        group: app.path.clone(),
                        consumed: app.binding.consumed.clone(),
                        consumed_union: app.consumed_union,
                        binding: app
                            .binding
                            .map
                            .iter()
                            .map(|(k, t)| (k.clone(), term_text(t, &q.prefixes)))
                            .collect(),
                    });
                }
                Choice::Predicate(p, e) => {
                    let v = e.values.iter().filter(|v| v.target.is_atom()).nth(combo[ci]).unwrap();
                    confidence *= v.confidence;
                    predicates.insert(p.clone(), entity_iri(v.target.as_atom().unwrap(), vocab));
                    applied.push(AppliedCorrespondence {
                        source: e.key.to_string(),
                        target: v.target.to_string(),
                        kind: PatternKind::PropSs,
                        confidence: v.confidence,
                        origin: v.origin,
                        group: vec![],
                        consumed: vec![],
                        consumed_union: false,
                        binding: BTreeMap::new(),
                    });
                }
            }
        }
        let mut build = Build {
            vocab,
            apps: &apps,
            app_choice,
            predicates,
            next_var: first_fresh,
            taken: &taken,
            warnings: warnings.clone(),
        };
        let where_clause = build.group(&q.where_clause, &mut Vec::new());
        let present: BTreeSet<String> = where_clause.variables_in_order().into_iter().collect();
        let projection: Vec<String> = q
            .projection
            .iter()
            .filter(|v| present.contains(*v))
            .cloned()
            .collect();
        if projection.is_empty() {
            return Err(RewriteError::EmptyProjection);
        }
        let dropped: BTreeSet<String> = q
            .projection
            .iter()
            .filter(|v| !present.contains(*v))
            .cloned()
            .collect();
        let mut iris = BTreeSet::new();
        collect_iris(&where_clause, &mut iris);
        let unmapped: BTreeSet<String> = iris
            .iter()
            .filter(|i| i.ns != RDF_NS && !vocab.target.contains_namespace(&i.ns))
            .map(|i| compact(i, &q.prefixes))
            .collect();
        if opts.strict && !unmapped.is_empty() {
            return Err(RewriteError::Unmapped(unmapped.into_iter().collect()));
        }
        let mut warnings = build.warnings;
        warnings.sort();
        warnings.dedup();
        let query = SelectQuery {
            prefixes: output_prefixes(q, vocab, &iris),
            projection,
            distinct: q.distinct,
            where_clause,
        };
        outputs.push((
            ordinal,
            RewriteOutput {
                query,
                report: RewriteReport {
                    confidence,
                    applied,
                    dropped_variables: dropped,
                    unmapped_iris: unmapped,
                    warnings,
                },
            },
        ));
        ordinal += 1;

        // Next combination, last position fastest.
        let mut k = choices.len();
        loop {
            if k == 0 {
                outputs.sort_by(|a, b| {
                    b.1.report
                        .confidence
                        .total_cmp(&a.1.report.confidence)
                        .then(a.0.cmp(&b.0))
                });
                return Ok(outputs.into_iter().map(|(_, o)| o).collect());
            }
            k -= 1;
            combo[k] += 1;
            if combo[k] < arity[k] {
                break;
            }
            combo[k] = 0;
        }
    }
}

fn term_text(t: &Term, prefixes: &PrefixTable) -> String {
    let mut s = String::new();
    crate::sparql::write_term(&mut s, t, prefixes);
    s
}

/// Builds a query selecting the instances of `expr`, anchored at `?v1`.
/// Conjunctive patterns project every variable in first-use order;
/// disjunctive ones project the anchor only. A property atom selects its subject/object pairs.
pub fn member_query(expr: &ClassExpression, vocab: &Vocabulary) -> (SelectQuery, Vec<String>) {
    let mut k = 1;
    let mut gen = || {
        k += 1;
        format!("v{k}")
    };
    let p = match expr.as_atom() {
        Some(prop) if prop.looks_like_property() => PatternBgp {
            anchor: "v1".into(),
            triples: vec![PatternTriple::new(
                PatternTerm::Var("v1".into()),
                PatternTerm::Entity(prop.clone()),
                PatternTerm::Var("v2".into()),
            )],
            disjunctive: None,
            warnings: vec![],
        },
        _ => compile_pattern_with(expr, "v1", &mut gen),
    };
    let mut group = GroupPattern::from_triples(p.triples.iter().map(|t| to_triple(t, vocab)).collect());
    let projection = match &p.disjunctive {
        Some(alts) => {
            group.union = Some(
                alts.iter()
                    .map(|a| GroupPattern::from_triples(a.iter().map(|t| to_triple(t, vocab)).collect()))
                    .collect(),
            );
            vec![p.anchor.clone()]
        }
        None => p.variables(),
    };
    let mut iris = BTreeSet::new();
    collect_iris(&group, &mut iris);
    let side = expr.side().unwrap_or(Side::Source);
    let mut prefixes = PrefixTable::new();
    for (label, ns) in vocab.table(side).iter() {
        if iris.iter().any(|i| i.ns == ns) {
            prefixes.insert(label, ns);
        }
    }
    (SelectQuery::new(prefixes, projection, group), p.warnings)
}

/// The source query for `key` and one target query per dictionary value.
pub fn generate_query_pair(
    key: &ClassExpression,
    d: &AlignmentDictionary,
) -> Result<(SelectQuery, Vec<SelectQuery>), RewriteError> {
    let entry = d
        .get(key)
        .ok_or_else(|| RewriteError::KeyNotFound(key.to_string()))?;
    let (source, _) = member_query(&entry.key, d.vocab());
    let targets = entry
        .values
        .iter()
        .map(|v| member_query(&v.target, d.vocab()).0)
        .collect();
    Ok((source, targets))
}
