//! Correspondences, the alignment file format, pattern classification and
//! the source-key dictionary.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{AlignmentError, ExprError};
use crate::expr_parser::parse_class_expression;
use crate::model::{serialize_qualified, ClassExpression, PrefixTable, Side, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Asserted,
    Derived,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Asserted => f.write_str("asserted"),
            Origin::Derived => f.write_str("derived"),
        }
    }
}

/// Correspondence pattern family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PatternKind {
    /// Class to class.
    ClassSs,
    /// Class by attribute type.
    Cat,
    /// Class by attribute value.
    Cav,
    /// Class union.
    Cu,
    /// Class intersection.
    Ci,
    /// Complex to complex.
    Cc,
    /// Property to property.
    PropSs,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::ClassSs => "CLASS_SS",
            PatternKind::Cat => "CAT",
            PatternKind::Cav => "CAV",
            PatternKind::Cu => "CU",
            PatternKind::Ci => "CI",
            PatternKind::Cc => "CC",
            PatternKind::PropSs => "PROP_SS",
        })
    }
}

/// Which ontologies the two members of a correspondence come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Source member from the source ontology, target member from the target.
    Cross,
    /// Both members from the source ontology.
    IntraSource,
    /// Both members from the target ontology.
    IntraTarget,
}

/// An equivalence between two members with a confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub source: ClassExpression,
    pub target: ClassExpression,
    pub confidence: f64,
    pub origin: Origin,
}

impl Correspondence {
    pub fn scope(&self) -> Scope {
        let s = self.source.side().unwrap_or(Side::Source);
        let t = self.target.side().unwrap_or(Side::Target);
        match (s, t) {
            (Side::Source, Side::Target) => Scope::Cross,
            (Side::Source, Side::Source) => Scope::IntraSource,
            _ => Scope::IntraTarget,
        }
    }

    pub fn is_cross(&self) -> bool {
        self.scope() == Scope::Cross
    }

    pub fn kind(&self) -> PatternKind {
        classify_pattern(self)
    }

    fn inverted(&self) -> Correspondence {
        let s = self.source.with_flipped_side();
        let t = self.target.with_flipped_side();
        // Intra-ontology axioms keep their orientation; cross ones swap.
        let (source, target) = match self.scope() {
            Scope::Cross => (t, s),
            _ => (s, t),
        };
        Correspondence {
            source,
            target,
            confidence: self.confidence,
            origin: self.origin,
        }
    }
}

impl fmt::Display for Correspondence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ≡ {} ({:.3})", self.source, self.target, self.confidence)
    }
}

/// Classifies a correspondence by the shape of its members.
pub fn classify_pattern(c: &Correspondence) -> PatternKind {
    match (c.source.as_atom(), c.target.as_atom()) {
        (Some(a), Some(b)) => {
            if a.looks_like_property() && b.looks_like_property() {
                PatternKind::PropSs
            } else {
                PatternKind::ClassSs
            }
        }
        (Some(_), None) => classify_complex(&c.target),
        (None, Some(_)) => classify_complex(&c.source),
        (None, None) => PatternKind::Cc,
    }
}

fn classify_complex(e: &ClassExpression) -> PatternKind {
    match e {
        ClassExpression::Or(_) => PatternKind::Cu,
        ClassExpression::Value { .. } => PatternKind::Cav,
        ClassExpression::And(cs) => {
            if cs.iter().any(|c| matches!(c, ClassExpression::Value { .. })) {
                PatternKind::Cav
            } else if cs.iter().any(ClassExpression::is_restriction) {
                PatternKind::Cat
            } else {
                PatternKind::Ci
            }
        }
        _ => PatternKind::Cat,
    }
}

/// A loaded alignment: both prefix tables plus every correspondence,
/// including intra-ontology equivalences used by the closure.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub vocab: Vocabulary,
    pub correspondences: Vec<Correspondence>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AlignmentFile {
    #[serde(default)]
    source_prefixes: IndexMap<String, String>,
    #[serde(default)]
    target_prefixes: IndexMap<String, String>,
    #[serde(default)]
    correspondences: Vec<EntryFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryFile {
    source: String,
    target: String,
    #[serde(default = "default_relation")]
    relation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<String>,
}

fn default_relation() -> String {
    "equivalence".into()
}

impl Alignment {
    pub fn new(vocab: Vocabulary, correspondences: Vec<Correspondence>) -> Self {
        Alignment {
            vocab,
            correspondences,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Alignment, AlignmentError> {
        let file: AlignmentFile = serde_json::from_str(text).map_err(|e| AlignmentError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let source: PrefixTable = file.source_prefixes.into_iter().collect();
        let target: PrefixTable = file.target_prefixes.into_iter().collect();
        for (label, _) in source.iter() {
            if target.contains_label(label) && source.get(label) != target.get(label) {
                return Err(AlignmentError::Prefix(format!(
                    "label '{label}' is bound to different namespaces on the two sides"
                )));
            }
        }
        let vocab = Vocabulary::new(source, target);
        let mut correspondences = Vec::with_capacity(file.correspondences.len());
        for (index, entry) in file.correspondences.iter().enumerate() {
            correspondences.push(parse_entry(index, entry, &vocab)?);
        }
        Ok(Alignment {
            vocab,
            correspondences,
        })
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let entries = self
            .correspondences
            .iter()
            .map(|c| EntryFile {
                source: member_text(&c.source, Side::Source, &self.vocab),
                target: member_text(&c.target, Side::Target, &self.vocab),
                relation: default_relation(),
                confidence: Some(c.confidence),
                origin: Some(c.origin.to_string()),
            })
            .collect();
        let file = AlignmentFile {
            source_prefixes: self
                .vocab
                .source
                .iter()
                .map(|(l, n)| (l.to_string(), n.to_string()))
                .collect(),
            target_prefixes: self
                .vocab
                .target
                .iter()
                .map(|(l, n)| (l.to_string(), n.to_string()))
                .collect(),
            correspondences: entries,
        };
        serde_json::to_value(file).expect("alignment serializes")
    }

    /// Swaps source and target ontologies.
    pub fn inverted(&self) -> Alignment {
        Alignment {
            vocab: self.vocab.inverted(),
            correspondences: self.correspondences.iter().map(|c| c.inverted()).collect(),
        }
    }

    pub fn cross(&self) -> impl Iterator<Item = &Correspondence> {
        self.correspondences.iter().filter(|c| c.is_cross())
    }
}

fn member_text(e: &ClassExpression, field_side: Side, vocab: &Vocabulary) -> String {
    if e.side().ok() == Some(field_side) {
        e.to_string()
    } else {
        serialize_qualified(e, vocab)
    }
}

fn parse_entry(
    index: usize,
    entry: &EntryFile,
    vocab: &Vocabulary,
) -> Result<Correspondence, AlignmentError> {
    let relation = entry.relation.trim().to_ascii_lowercase();
    if !matches!(relation.as_str(), "equivalence" | "=" | "≡") {
        return Err(AlignmentError::UnsupportedRelation {
            index,
            relation: entry.relation.clone(),
        });
    }
    let wrap = |field: &'static str| move |source: ExprError| AlignmentError::Expression {
        index,
        field,
        source,
    };
    let source = parse_class_expression(&entry.source, Side::Source, vocab).map_err(wrap("source"))?;
    let target = parse_class_expression(&entry.target, Side::Target, vocab).map_err(wrap("target"))?;
    if source.side().ok() == Some(Side::Target) && target.side().ok() == Some(Side::Source) {
        return Err(AlignmentError::SideViolation {
            index,
            message: format!(
                "source member '{}' uses target vocabulary and target member '{}' uses source vocabulary",
                entry.source, entry.target
            ),
        });
    }
    let confidence = entry.confidence.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&confidence) {
        return Err(AlignmentError::ConfidenceOutOfRange {
            index,
            value: confidence,
        });
    }
    let origin = match entry.origin.as_deref() {
        Some("derived") => Origin::Derived,
        _ => Origin::Asserted,
    };
    Ok(Correspondence {
        source,
        target,
        confidence,
        origin,
    })
}

/// Reads and validates an alignment file.
pub fn load_alignment(path: impl AsRef<Path>) -> Result<Alignment, AlignmentError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AlignmentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Alignment::from_json_str(&text)
}

/// One value under a dictionary key.
#[derive(Debug, Clone, PartialEq)]
pub struct DictValue {
    pub target: ClassExpression,
    pub confidence: f64,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictEntry {
    pub key: ClassExpression,
    pub values: Vec<DictValue>,
}

impl DictEntry {
    /// Highest confidence among the values.
    pub fn best_confidence(&self) -> f64 {
        self.values.first().map_or(0.0, |v| v.confidence)
    }

    /// True for property keys, which rewrite predicates instead of subgraphs.
    pub fn is_property_key(&self) -> bool {
        self.key.as_atom().is_some_and(|a| a.looks_like_property())
    }

    pub fn kind_of(&self, value: &DictValue) -> PatternKind {
        classify_pattern(&Correspondence {
            source: self.key.clone(),
            target: value.target.clone(),
            confidence: value.confidence,
            origin: value.origin,
        })
    }
}

/// Canonical source expression -> equivalent target expressions, ordered by
/// descending confidence then target serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentDictionary {
    vocab: Vocabulary,
    entries: BTreeMap<String, DictEntry>,
}

impl AlignmentDictionary {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &ClassExpression) -> Option<&DictEntry> {
        self.entries.get(&key.to_string()).filter(|e| &e.key == key)
    }

    /// Entries in canonical key order.
    pub fn entries(&self) -> impl Iterator<Item = &DictEntry> {
        self.entries.values()
    }
}

/// Groups cross-ontology correspondences by canonical source member.
/// Intra-ontology equivalences only feed the closure and are skipped here.
pub fn build_dictionary<'a>(
    vocab: &Vocabulary,
    cs: impl IntoIterator<Item = &'a Correspondence>,
) -> AlignmentDictionary {
    let mut entries: BTreeMap<String, DictEntry> = BTreeMap::new();
    for c in cs.into_iter().filter(|c| c.is_cross()) {
        let entry = entries
            .entry(c.source.to_string())
            .or_insert_with(|| DictEntry {
                key: c.source.clone(),
                values: Vec::new(),
            });
        match entry.values.iter_mut().find(|v| v.target == c.target) {
            Some(v) => {
                let better = c.confidence > v.confidence
                    || (c.confidence == v.confidence && c.origin < v.origin);
                if better {
                    v.confidence = c.confidence;
                    v.origin = c.origin;
                }
            }
            None => entry.values.push(DictValue {
                target: c.target.clone(),
                confidence: c.confidence,
                origin: c.origin,
            }),
        }
    }
    for e in entries.values_mut() {
        e.values.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.target.to_string().cmp(&b.target.to_string()))
        });
    }
    AlignmentDictionary {
        vocab: vocab.clone(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#""source_prefixes": {"onto_Source": "http://ekaw#"},
        "target_prefixes": {"target_onto": "http://edas#"}"#;

    fn load(entries: &str) -> Result<Alignment, AlignmentError> {
        Alignment::from_json_str(&format!("{{ {HEADER}, \"correspondences\": [{entries}] }}"))
    }

    fn corr(s: &str, t: &str) -> Correspondence {
        load(&format!(r#"{{"source": "{s}", "target": "{t}"}}"#))
            .unwrap()
            .correspondences
            .remove(0)
    }

    #[test]
    fn union_correspondence_is_cu() {
        let a = load(r#"{"source": "Event", "target": "Conference or ConferenceEvent or ConferenceSession", "relation": "equivalence", "confidence": 1.0}"#).unwrap();
        assert_eq!(a.correspondences.len(), 1);
        assert_eq!(a.correspondences[0].kind(), PatternKind::Cu);
    }

    #[test]
    fn confidence_out_of_range() {
        let err = load(r#"{"source": "A", "target": "B", "confidence": 1.3}"#).unwrap_err();
        assert!(err.to_string().contains("confidence out of range"), "{err}");
    }

    #[test]
    fn default_confidence_is_one() {
        assert_eq!(corr("A", "B").confidence, 1.0);
    }

    #[test]
    fn reversed_sides_rejected() {
        let err =
            load(r#"{"source": "target_onto:A", "target": "onto_Source:B"}"#).unwrap_err();
        assert!(matches!(err, AlignmentError::SideViolation { .. }));
    }

    #[test]
    fn mixed_member_rejected() {
        let err = load(r#"{"source": "A and target_onto:B", "target": "C"}"#).unwrap_err();
        assert!(matches!(err, AlignmentError::Expression { .. }));
    }

    #[test]
    fn json_syntax_error_reports_line() {
        let err = Alignment::from_json_str("{\n\"source_prefixes\": {,\n}").unwrap_err();
        match err {
            AlignmentError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn subsumption_is_unsupported() {
        let err = load(r#"{"source": "A", "target": "B", "relation": "subsumption"}"#).unwrap_err();
        assert!(matches!(err, AlignmentError::UnsupportedRelation { .. }));
    }

    #[test]
    fn classification() {
        assert_eq!(corr("Conference_Banquet", "ConferenceDinner").kind(), PatternKind::ClassSs);
        assert_eq!(corr("writtenBy", "hasAuthor").kind(), PatternKind::PropSs);
        assert_eq!(
            corr(
                "ConferencePaper and (hasDecision some Acceptance)",
                "Paper and (accepted value true)"
            )
            .kind(),
            PatternKind::Cc
        );
        assert_eq!(
            corr("Accepted_Paper", "Paper and (accepted value true)").kind(),
            PatternKind::Cav
        );
        assert_eq!(
            corr("ConferencePaper and (hasDecision some Acceptance)", "AcceptedPaper").kind(),
            PatternKind::Cat
        );
        assert_eq!(corr("A", "hasX only Y").kind(), PatternKind::Cat);
        assert_eq!(corr("A", "X and (p min 2 Y)").kind(), PatternKind::Cat);
        assert_eq!(corr("A", "X and Y").kind(), PatternKind::Ci);
    }

    #[test]
    fn intra_ontology_scopes() {
        let c = corr("Accepted_Paper", "onto_Source:ConferencePaper");
        assert_eq!(c.scope(), Scope::IntraSource);
        let c = corr("target_onto:AcceptedPaper", "Paper");
        assert_eq!(c.scope(), Scope::IntraTarget);
    }

    #[test]
    fn dictionary_ordering() {
        let a = load(
            r#"{"source": "A", "target": "X", "confidence": 0.9},
               {"source": "A", "target": "Y", "confidence": 1.0}"#,
        )
        .unwrap();
        let d = build_dictionary(&a.vocab, &a.correspondences);
        assert_eq!(d.len(), 1);
        let e = d.entries().next().unwrap();
        let targets: Vec<String> = e.values.iter().map(|v| v.target.to_string()).collect();
        assert_eq!(targets, ["Y", "X"]);
        assert_eq!(e.values[1].confidence, 0.9);
    }

    #[test]
    fn empty_dictionary() {
        let a = load("").unwrap();
        assert!(build_dictionary(&a.vocab, &a.correspondences).is_empty());
    }

    #[test]
    fn duplicate_pair_keeps_max() {
        let a = load(
            r#"{"source": "A", "target": "X", "confidence": 0.4},
               {"source": "A", "target": "X", "confidence": 0.8}"#,
        )
        .unwrap();
        let d = build_dictionary(&a.vocab, &a.correspondences);
        let e = d.entries().next().unwrap();
        assert_eq!(e.values.len(), 1);
        assert_eq!(e.values[0].confidence, 0.8);
    }

    #[test]
    fn inversion_swaps_cross_members() {
        let a = load(
            r#"{"source": "Conference_Banquet", "target": "ConferenceDinner"},
               {"source": "Accepted_Paper", "target": "onto_Source:ConferencePaper"}"#,
        )
        .unwrap();
        let inv = a.inverted();
        assert_eq!(inv.correspondences[0].source.to_string(), "ConferenceDinner");
        assert!(inv.correspondences[0].is_cross());
        assert_eq!(inv.correspondences[1].scope(), Scope::IntraTarget);
        assert_eq!(inv.inverted(), a);
    }

    #[test]
    fn json_round_trip() {
        let a = load(
            r#"{"source": "Accepted_Paper", "target": "onto_Source:ConferencePaper and (onto_Source:hasDecision some onto_Source:Acceptance)"},
               {"source": "target_onto:AcceptedPaper", "target": "Paper and (accepted value true)", "confidence": 0.5}"#,
        )
        .unwrap();
        let text = serde_json::to_string(&a.to_json_value()).unwrap();
        assert_eq!(Alignment::from_json_str(&text).unwrap(), a);
    }
}
