//! Ontology entities, prefix tables and class expressions.
//!
//! A [`ClassExpression`] is always kept in canonical form: `and`/`or`
//! children are flattened, deduplicated and sorted by their serialization,
//! so structural equality is the equality used for dictionary keys.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;

use crate::error::ExprError;

/// Which ontology of the alignment an entity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Source => Side::Target,
            Side::Target => Side::Source,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Source => f.write_str("source"),
            Side::Target => f.write_str("target"),
        }
    }
}

/// Ordered prefix label -> namespace IRI table. The first entry is the
/// default namespace used for bare local names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefixTable {
    entries: IndexMap<String, String>,
}

impl PrefixTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, namespace: impl Into<String>) {
        self.entries.insert(label.into(), namespace.into());
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.entries.get(label).map(String::as_str)
    }

    pub fn contains_label(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    pub fn label_for(&self, namespace: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, ns)| ns.as_str() == namespace)
            .map(|(l, _)| l.as_str())
    }

    pub fn contains_namespace(&self, namespace: &str) -> bool {
        self.entries.values().any(|ns| ns == namespace)
    }

    pub fn default_entry(&self) -> Option<(&str, &str)> {
        self.entries.first().map(|(l, n)| (l.as_str(), n.as_str()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(l, n)| (l.as_str(), n.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<L: Into<String>, N: Into<String>> FromIterator<(L, N)> for PrefixTable {
    fn from_iter<I: IntoIterator<Item = (L, N)>>(iter: I) -> Self {
        let mut t = PrefixTable::new();
        for (l, n) in iter {
            t.insert(l, n);
        }
        t
    }
}

/// The prefix tables of both aligned ontologies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub source: PrefixTable,
    pub target: PrefixTable,
}

impl Vocabulary {
    pub fn new(source: PrefixTable, target: PrefixTable) -> Self {
        Vocabulary { source, target }
    }

    pub fn table(&self, side: Side) -> &PrefixTable {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }

    /// Swaps the two sides.
    pub fn inverted(&self) -> Vocabulary {
        Vocabulary {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    /// Side owning `label`, preferring `preferred` when both sides declare it.
    pub fn side_of_label(&self, label: &str, preferred: Side) -> Option<Side> {
        if self.table(preferred).contains_label(label) {
            Some(preferred)
        } else if self.table(preferred.flip()).contains_label(label) {
            Some(preferred.flip())
        } else {
            None
        }
    }

    pub fn namespace_of(&self, iri: &EntityIri) -> Option<&str> {
        let table = self.table(iri.side);
        match &iri.prefix {
            Some(label) => table.get(label),
            None => table.default_entry().map(|(_, ns)| ns),
        }
    }

    pub fn label_of<'a>(&'a self, iri: &'a EntityIri) -> Option<&'a str> {
        match &iri.prefix {
            Some(label) => Some(label.as_str()),
            None => self.table(iri.side).default_entry().map(|(l, _)| l),
        }
    }
}

/// A named class or property of one ontology.
///
/// `prefix` is `None` when the entity lives in its side's default namespace;
/// the parser normalizes an explicit default prefix to `None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityIri {
    pub side: Side,
    pub prefix: Option<String>,
    pub local: String,
}

impl EntityIri {
    pub fn new(side: Side, local: impl Into<String>) -> Result<Self, ExprError> {
        let local = local.into();
        if !is_local_name(&local) {
            return Err(ExprError::InvalidName(local));
        }
        Ok(EntityIri {
            side,
            prefix: None,
            local,
        })
    }

    pub fn with_prefix(
        side: Side,
        prefix: impl Into<String>,
        local: impl Into<String>,
    ) -> Result<Self, ExprError> {
        let mut e = EntityIri::new(side, local)?;
        e.prefix = Some(prefix.into());
        Ok(e)
    }

    /// Properties follow the lowerCamel naming convention of OWL vocabularies.
    pub fn looks_like_property(&self) -> bool {
        self.local.starts_with(|c: char| c.is_ascii_lowercase())
    }
}

impl fmt::Display for EntityIri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.prefix {
            Some(p) => write!(f, "{}:{}", p, self.local),
            None => f.write_str(&self.local),
        }
    }
}

pub(crate) fn is_local_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Boolean(bool),
    Integer(i64),
    String(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Boolean(b) => write!(f, "{b}"),
            Literal::Integer(i) => write!(f, "{i}"),
            Literal::String(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CardKind {
    Min,
    Max,
    Exactly,
}

impl CardKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CardKind::Min => "min",
            CardKind::Max => "max",
            CardKind::Exactly => "exactly",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ClassExpression {
    Atom(EntityIri),
    And(Vec<ClassExpression>),
    Or(Vec<ClassExpression>),
    Some {
        property: EntityIri,
        filler: Box<ClassExpression>,
    },
    Only {
        property: EntityIri,
        filler: Box<ClassExpression>,
    },
    Card {
        kind: CardKind,
        n: u32,
        property: EntityIri,
        filler: Option<Box<ClassExpression>>,
    },
    Value {
        property: EntityIri,
        literal: Literal,
    },
}

impl ClassExpression {
    pub fn atom(iri: EntityIri) -> Self {
        ClassExpression::Atom(iri)
    }

    /// Canonical conjunction. Fails on mixed ontology sides.
    pub fn and(children: Vec<ClassExpression>) -> Result<Self, ExprError> {
        let e = canonicalize(&ClassExpression::And(children));
        e.side()?;
        Ok(e)
    }

    /// Canonical disjunction. Fails on mixed ontology sides.
    pub fn or(children: Vec<ClassExpression>) -> Result<Self, ExprError> {
        let e = canonicalize(&ClassExpression::Or(children));
        e.side()?;
        Ok(e)
    }

    pub fn some(property: EntityIri, filler: ClassExpression) -> Result<Self, ExprError> {
        let e = canonicalize(&ClassExpression::Some {
            property,
            filler: Box::new(filler),
        });
        e.side()?;
        Ok(e)
    }

    pub fn value(property: EntityIri, literal: Literal) -> Self {
        ClassExpression::Value { property, literal }
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, ClassExpression::Atom(_))
    }

    pub fn as_atom(&self) -> Option<&EntityIri> {
        match self {
            ClassExpression::Atom(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_restriction(&self) -> bool {
        matches!(
            self,
            ClassExpression::Some { .. }
                | ClassExpression::Only { .. }
                | ClassExpression::Card { .. }
                | ClassExpression::Value { .. }
        )
    }

    /// Every entity mentioned, classes and properties alike, in pre-order.
    pub fn entities(&self) -> Vec<&EntityIri> {
        let mut out = Vec::new();
        self.collect_entities(&mut out);
        out
    }

    fn collect_entities<'a>(&'a self, out: &mut Vec<&'a EntityIri>) {
        match self {
            ClassExpression::Atom(e) => out.push(e),
            ClassExpression::And(cs) | ClassExpression::Or(cs) => {
                cs.iter().for_each(|c| c.collect_entities(out))
            }
            ClassExpression::Some { property, filler }
            | ClassExpression::Only { property, filler } => {
                out.push(property);
                filler.collect_entities(out);
            }
            ClassExpression::Card {
                property, filler, ..
            } => {
                out.push(property);
                if let Some(f) = filler {
                    f.collect_entities(out);
                }
            }
            ClassExpression::Value { property, .. } => out.push(property),
        }
    }

    /// The single ontology side of this expression.
    pub fn side(&self) -> Result<Side, ExprError> {
        let entities = self.entities();
        let first = entities.first().map(|e| e.side).ok_or(ExprError::Empty)?;
        if entities.iter().any(|e| e.side != first) {
            return Err(ExprError::MixedSides(serialize_class_expression(self)));
        }
        Ok(first)
    }

    /// True when the expression contains a universal or cardinality restriction.
    pub fn has_non_existential_restriction(&self) -> bool {
        match self {
            ClassExpression::Atom(_) | ClassExpression::Value { .. } => false,
            ClassExpression::And(cs) | ClassExpression::Or(cs) => {
                cs.iter().any(|c| c.has_non_existential_restriction())
            }
            ClassExpression::Some { filler, .. } => filler.has_non_existential_restriction(),
            ClassExpression::Only { .. } | ClassExpression::Card { .. } => true,
        }
    }

    /// Same expression with every entity moved to the other ontology side.
    pub fn with_flipped_side(&self) -> ClassExpression {
        self.map_entities(&|e: &EntityIri| EntityIri {
            side: e.side.flip(),
            ..e.clone()
        })
    }

    pub(crate) fn map_entities(&self, f: &dyn Fn(&EntityIri) -> EntityIri) -> ClassExpression {
        match self {
            ClassExpression::Atom(e) => ClassExpression::Atom(f(e)),
            ClassExpression::And(cs) => {
                ClassExpression::And(cs.iter().map(|c| c.map_entities(f)).collect())
            }
            ClassExpression::Or(cs) => {
                ClassExpression::Or(cs.iter().map(|c| c.map_entities(f)).collect())
            }
            ClassExpression::Some { property, filler } => ClassExpression::Some {
                property: f(property),
                filler: Box::new(filler.map_entities(f)),
            },
            ClassExpression::Only { property, filler } => ClassExpression::Only {
                property: f(property),
                filler: Box::new(filler.map_entities(f)),
            },
            ClassExpression::Card {
                kind,
                n,
                property,
                filler,
            } => ClassExpression::Card {
                kind: *kind,
                n: *n,
                property: f(property),
                filler: filler.as_ref().map(|x| Box::new(x.map_entities(f))),
            },
            ClassExpression::Value { property, literal } => ClassExpression::Value {
                property: f(property),
                literal: literal.clone(),
            },
        }
    }
}

impl fmt::Display for ClassExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f, &|e, f| write!(f, "{e}"))
    }
}

type EntityWriter<'a> = dyn Fn(&EntityIri, &mut fmt::Formatter<'_>) -> fmt::Result + 'a;

fn write_expr(
    e: &ClassExpression,
    f: &mut fmt::Formatter<'_>,
    ent: &EntityWriter<'_>,
) -> fmt::Result {
    match e {
        ClassExpression::Atom(iri) => ent(iri, f),
        ClassExpression::And(cs) | ClassExpression::Or(cs) => {
            let sep = if matches!(e, ClassExpression::And(_)) {
                " and "
            } else {
                " or "
            };
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write_operand(c, f, ent)?;
            }
            Ok(())
        }
        ClassExpression::Some { property, filler } => {
            ent(property, f)?;
            f.write_str(" some ")?;
            write_operand(filler, f, ent)
        }
        ClassExpression::Only { property, filler } => {
            ent(property, f)?;
            f.write_str(" only ")?;
            write_operand(filler, f, ent)
        }
        ClassExpression::Card {
            kind,
            n,
            property,
            filler,
        } => {
            ent(property, f)?;
            write!(f, " {} {}", kind.keyword(), n)?;
            if let Some(x) = filler {
                f.write_str(" ")?;
                write_operand(x, f, ent)?;
            }
            Ok(())
        }
        ClassExpression::Value { property, literal } => {
            ent(property, f)?;
            write!(f, " value {literal}")
        }
    }
}

fn write_operand(
    e: &ClassExpression,
    f: &mut fmt::Formatter<'_>,
    ent: &EntityWriter<'_>,
) -> fmt::Result {
    if e.is_atom() {
        write_expr(e, f, ent)
    } else {
        f.write_str("(")?;
        write_expr(e, f, ent)?;
        f.write_str(")")
    }
}

/// Surface syntax of an expression; bare local names for default-namespace entities.
pub fn serialize_class_expression(expr: &ClassExpression) -> String {
    expr.to_string()
}

/// Serialization with every entity written as `prefix:local`, suitable for
/// files where the reader's default side may differ from the expression's.
pub fn serialize_qualified(expr: &ClassExpression, vocab: &Vocabulary) -> String {
    struct Q<'a>(&'a ClassExpression, &'a Vocabulary);
    impl fmt::Display for Q<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let vocab = self.1;
            write_expr(self.0, f, &|e, f| match vocab.label_of(e) {
                Some(l) => write!(f, "{}:{}", l, e.local),
                None => write!(f, "{e}"),
            })
        }
    }
    Q(expr, vocab).to_string()
}

/// Flattens, deduplicates and sorts `and`/`or` operands at every depth.
pub fn canonicalize(expr: &ClassExpression) -> ClassExpression {
    match expr {
        ClassExpression::Atom(_) | ClassExpression::Value { .. } => expr.clone(),
        ClassExpression::And(cs) | ClassExpression::Or(cs) => {
            let is_and = matches!(expr, ClassExpression::And(_));
            let mut flat: Vec<ClassExpression> = Vec::with_capacity(cs.len());
            for c in cs {
                match canonicalize(c) {
                    ClassExpression::And(inner) if is_and => flat.extend(inner),
                    ClassExpression::Or(inner) if !is_and => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            let mut keyed: Vec<(String, ClassExpression)> =
                flat.into_iter().map(|c| (c.to_string(), c)).collect();
            keyed.sort_by(|a, b| a.0.cmp(&b.0));
            keyed.dedup_by(|a, b| a.1 == b.1);
            let mut children: Vec<ClassExpression> = keyed.into_iter().map(|(_, c)| c).collect();
            if children.len() == 1 {
                return children.pop().unwrap();
            }
            if is_and {
                ClassExpression::And(children)
            } else {
                ClassExpression::Or(children)
            }
        }
        ClassExpression::Some { property, filler } => ClassExpression::Some {
            property: property.clone(),
            filler: Box::new(canonicalize(filler)),
        },
        ClassExpression::Only { property, filler } => ClassExpression::Only {
            property: property.clone(),
            filler: Box::new(canonicalize(filler)),
        },
        ClassExpression::Card {
            kind,
            n,
            property,
            filler,
        } => ClassExpression::Card {
            kind: *kind,
            n: *n,
            property: property.clone(),
            filler: filler.as_ref().map(|f| Box::new(canonicalize(f))),
        },
    }
}

/// Lowercased name fragments of every entity, split on `_` and camel-case
/// boundaries. Boolean literal values are included; connectives are not.
pub fn label_tokens(expr: &ClassExpression) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in expr.entities() {
        out.extend(split_identifier(&e.local));
    }
    collect_boolean_literals(expr, &mut out);
    out
}

fn collect_boolean_literals(expr: &ClassExpression, out: &mut BTreeSet<String>) {
    match expr {
        ClassExpression::Value {
            literal: Literal::Boolean(b),
            ..
        } => {
            out.insert(b.to_string());
        }
        ClassExpression::And(cs) | ClassExpression::Or(cs) => {
            cs.iter().for_each(|c| collect_boolean_literals(c, out))
        }
        ClassExpression::Some { filler, .. } | ClassExpression::Only { filler, .. } => {
            collect_boolean_literals(filler, out)
        }
        ClassExpression::Card {
            filler: Some(f), ..
        } => collect_boolean_literals(f, out),
        _ => {}
    }
}

/// `ConferencePaper` -> `conference`, `paper`; `XMLFile` -> `xml`, `file`.
pub fn split_identifier(name: &str) -> Vec<String> {
    let mut words = Vec::new();
    for part in name.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = cur.is_uppercase()
                && (prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower));
            if boundary {
                words.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        words.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(l: &str) -> EntityIri {
        EntityIri::new(Side::Source, l).unwrap()
    }
    fn atom(l: &str) -> ClassExpression {
        ClassExpression::Atom(src(l))
    }

    #[test]
    fn flattening_and_sorting() {
        let e = ClassExpression::And(vec![
            ClassExpression::And(vec![atom("B"), atom("A")]),
            atom("C"),
        ]);
        assert_eq!(
            canonicalize(&e),
            ClassExpression::And(vec![atom("A"), atom("B"), atom("C")])
        );
    }

    #[test]
    fn dedup_and_sort() {
        let e = ClassExpression::Or(vec![atom("B"), atom("A"), atom("A")]);
        assert_eq!(
            canonicalize(&e),
            ClassExpression::Or(vec![atom("A"), atom("B")])
        );
    }

    #[test]
    fn single_child_collapses() {
        let e = ClassExpression::And(vec![atom("A"), atom("A")]);
        assert_eq!(canonicalize(&e), atom("A"));
    }

    #[test]
    fn mixed_sides_rejected() {
        let t = ClassExpression::Atom(EntityIri::new(Side::Target, "X").unwrap());
        assert!(matches!(
            ClassExpression::and(vec![atom("A"), t]),
            Err(ExprError::MixedSides(_))
        ));
    }

    #[test]
    fn identifier_splitting() {
        assert_eq!(split_identifier("Conference_Banquet"), ["conference", "banquet"]);
        assert_eq!(split_identifier("hasDecision"), ["has", "decision"]);
        assert_eq!(split_identifier("XMLFile"), ["xml", "file"]);
        assert_eq!(split_identifier("X"), ["x"]);
    }

    #[test]
    fn tokens_of_complex_expression() {
        let e = ClassExpression::and(vec![
            atom("ConferencePaper"),
            ClassExpression::some(src("hasDecision"), atom("Acceptance")).unwrap(),
        ])
        .unwrap();
        let expected: BTreeSet<String> = ["conference", "paper", "has", "decision", "acceptance"]
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(label_tokens(&e), expected);
        assert_eq!(label_tokens(&atom("X")), BTreeSet::from(["x".to_string()]));
    }

    #[test]
    fn boolean_literal_tokens() {
        let e = ClassExpression::value(src("accepted"), Literal::Boolean(true));
        assert!(label_tokens(&e).contains("true"));
        let e = ClassExpression::value(src("year"), Literal::Integer(2024));
        assert!(!label_tokens(&e).contains("2024"));
    }

    #[test]
    fn string_literal_escaping() {
        assert_eq!(Literal::String("a\"b\\c".into()).to_string(), r#""a\"b\\c""#);
    }
}
