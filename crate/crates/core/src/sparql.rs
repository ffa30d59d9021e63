//! AST, parser and serializer for the `SELECT DISTINCT` subset: triple
//! patterns and `UNION` blocks, nothing else.
//!
//! ```text
//! query  = { prefixdecl } "SELECT" "DISTINCT" var { var } "WHERE" group
//! group  = "{" { triple "." } [ union ] "}"
//! union  = group "UNION" group { "UNION" group }
//! triple = term term term
//! term   = var | pname | literal | "rdf:type" | "a"
//! ```
//! The final `.` before `}` is optional. A nested group that is not part of
//! a `UNION` is merged into its parent.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::error::QueryError;
use crate::model::{Literal, PrefixTable};

pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";

/// A fully expanded IRI, split into namespace and local name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Iri {
    pub ns: String,
    pub local: String,
}

impl Iri {
    pub fn new(ns: impl Into<String>, local: impl Into<String>) -> Self {
        Iri {
            ns: ns.into(),
            local: local.into(),
        }
    }

    pub fn rdf_type() -> Self {
        Iri::new(RDF_NS, "type")
    }

    pub fn is_rdf_type(&self) -> bool {
        self.ns == RDF_NS && self.local == "type"
    }

    fn from_full(full: &str) -> Iri {
        let cut = full.rfind(['#', '/']).map_or(0, |i| i + 1);
        Iri::new(&full[..cut], &full[cut..])
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}{}>", self.ns, self.local)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Variable(String),
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Variable(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Variable(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(i) => Some(i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl TriplePattern {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Self {
        TriplePattern {
            subject,
            predicate,
            object,
        }
    }

    pub fn terms(&self) -> [&Term; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

/// Triples followed by at most one `UNION` block of two or more branches.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupPattern {
    pub triples: Vec<TriplePattern>,
    pub union: Option<Vec<GroupPattern>>,
}

impl GroupPattern {
    pub fn from_triples(triples: Vec<TriplePattern>) -> Self {
        GroupPattern {
            triples,
            union: None,
        }
    }

    /// Every triple at any depth, in document order.
    pub fn all_triples(&self) -> Vec<&TriplePattern> {
        let mut out: Vec<&TriplePattern> = self.triples.iter().collect();
        if let Some(branches) = &self.union {
            for b in branches {
                out.extend(b.all_triples());
            }
        }
        out
    }

    /// Variables in first-occurrence order.
    pub fn variables_in_order(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in self.all_triples() {
            for term in t.terms() {
                if let Term::Variable(v) = term {
                    if seen.insert(v.clone()) {
                        out.push(v.clone());
                    }
                }
            }
        }
        out
    }

    /// Conjoins `alternatives` as a union, distributing over any union
    /// already present so the group keeps a single union block.
    pub fn conjoin_union(&mut self, alternatives: Vec<GroupPattern>) {
        match &mut self.union {
            None => self.union = Some(alternatives),
            Some(branches) => {
                for b in branches.iter_mut() {
                    b.conjoin_union(alternatives.clone());
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectQuery {
    pub prefixes: PrefixTable,
    pub projection: Vec<String>,
    pub distinct: bool,
    pub where_clause: GroupPattern,
}

impl SelectQuery {
    pub fn new(prefixes: PrefixTable, projection: Vec<String>, where_clause: GroupPattern) -> Self {
        SelectQuery {
            prefixes,
            projection,
            distinct: true,
            where_clause,
        }
    }
}

/// All variables occurring anywhere in the WHERE clause.
pub fn query_variables(q: &SelectQuery) -> BTreeSet<String> {
    q.where_clause.variables_in_order().into_iter().collect()
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    LBrace,
    RBrace,
    Dot,
    Var(String),
    /// `prefix:local`; `local` is empty for a namespace declaration.
    PName(String, String),
    IriRef(String),
    Word(String),
    Int(i64),
    Str(String),
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

pub(crate) fn lex(text: &str) -> Result<Vec<Spanned>, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| QueryError::Syntax {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        let start = i;
        macro_rules! push {
            ($t:expr) => {
                out.push(Spanned {
                    tok: $t,
                    line: tline,
                    column: tcol,
                })
            };
        }
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => i += 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '{' => {
                i += 1;
                push!(Tok::LBrace);
            }
            '}' => {
                i += 1;
                push!(Tok::RBrace);
            }
            '.' => {
                i += 1;
                push!(Tok::Dot);
            }
            '?' | '$' => {
                i += 1;
                let s = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let name: String = chars[s..i].iter().collect();
                if !name.starts_with(|c: char| is_name_start(c)) {
                    return Err(err(tline, tcol, format!("invalid variable name '{c}{name}'")));
                }
                push!(Tok::Var(name));
            }
            '<' => {
                i += 1;
                let s = i;
                while i < chars.len() && chars[i] != '>' && !chars[i].is_whitespace() {
                    i += 1;
                }
                if i >= chars.len() || chars[i] != '>' {
                    return Err(err(tline, tcol, "unterminated IRI".into()));
                }
                let iri: String = chars[s..i].iter().collect();
                i += 1;
                push!(Tok::IriRef(iri));
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    if i >= chars.len() || chars[i] == '\n' {
                        return Err(err(tline, tcol, "unterminated string literal".into()));
                    }
                    let ch = chars[i];
                    i += 1;
                    match ch {
                        '"' => break,
                        '\\' => {
                            let Some(&e) = chars.get(i) else {
                                return Err(err(tline, tcol, "dangling escape".into()));
                            };
                            i += 1;
                            s.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                other => other,
                            });
                        }
                        other => s.push(other),
                    }
                }
                push!(Tok::Str(s));
            }
            c if c.is_ascii_digit() || ((c == '-' || c == '+') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let lexeme: String = chars[start..i].iter().collect();
                let v = lexeme
                    .parse::<i64>()
                    .map_err(|_| err(tline, tcol, format!("invalid integer '{lexeme}'")))?;
                push!(Tok::Int(v));
            }
            c if is_name_start(c) || c == ':' => {
                while i < chars.len() && is_name_char(chars[i]) {
                    i += 1;
                }
                let first: String = chars[start..i].iter().collect();
                if i < chars.len() && chars[i] == ':' {
                    i += 1;
                    let s = i;
                    while i < chars.len() && is_name_char(chars[i]) {
                        i += 1;
                    }
                    let local: String = chars[s..i].iter().collect();
                    push!(Tok::PName(first, local));
                } else {
                    push!(Tok::Word(first));
                }
            }
            other => return Err(err(tline, tcol, format!("unexpected character '{other}'"))),
        }
        col += i - start;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

pub(crate) struct TermReader<'a> {
    pub toks: &'a [Spanned],
    pub pos: usize,
    pub prefixes: PrefixTable,
    pub ambient: Option<&'a PrefixTable>,
}

impl TermReader<'_> {
    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    pub fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos).or(self.toks.last()) {
            Some(s) => (s.line, s.column),
            None => (1, 1),
        }
    }

    pub fn err(&self, message: impl Into<String>) -> QueryError {
        let (line, column) = self.here();
        QueryError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x.eq_ignore_ascii_case(w))
    }

    fn expect_word(&mut self, w: &str) -> Result<(), QueryError> {
        if self.is_word(w) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {w}")))
        }
    }

    pub fn resolve(&mut self, prefix: &str, local: &str) -> Result<Iri, QueryError> {
        if let Some(ns) = self.prefixes.get(prefix) {
            return Ok(Iri::new(ns, local));
        }
        if let Some(ns) = self.ambient.and_then(|a| a.get(prefix)) {
            let ns = ns.to_string();
            self.prefixes.insert(prefix, ns.clone());
            return Ok(Iri::new(ns, local));
        }
        if prefix == "rdf" {
            return Ok(Iri::new(RDF_NS, local));
        }
        let (line, column) = self.here();
        Err(QueryError::UnknownPrefix {
            prefix: prefix.to_string(),
            line,
            column,
        })
    }

    pub fn term(&mut self) -> Result<Term, QueryError> {
        let t = match self.peek().cloned() {
            Some(Tok::Var(v)) => Term::Variable(v),
            Some(Tok::PName(p, l)) => {
                if l.is_empty() {
                    return Err(self.err("prefixed name without local part"));
                }
                Term::Iri(self.resolve(&p, &l)?)
            }
            Some(Tok::IriRef(full)) => Term::Iri(Iri::from_full(&full)),
            Some(Tok::Word(w)) if w == "a" => Term::Iri(Iri::rdf_type()),
            Some(Tok::Word(w)) if w == "true" => Term::Literal(Literal::Boolean(true)),
            Some(Tok::Word(w)) if w == "false" => Term::Literal(Literal::Boolean(false)),
            Some(Tok::Int(v)) => Term::Literal(Literal::Integer(v)),
            Some(Tok::Str(s)) => Term::Literal(Literal::String(s)),
            Some(other) => return Err(self.err(format!("expected a term, found {other:?}"))),
            None => return Err(self.err("unexpected end of input")),
        };
        self.pos += 1;
        Ok(t)
    }

    pub fn triple(&mut self) -> Result<TriplePattern, QueryError> {
        let subject = self.term()?;
        if matches!(subject, Term::Literal(_)) {
            return Err(self.err("a literal cannot be a subject"));
        }
        let predicate = self.term()?;
        if matches!(predicate, Term::Literal(_)) {
            return Err(self.err("a literal cannot be a predicate"));
        }
        let object = self.term()?;
        Ok(TriplePattern::new(subject, predicate, object))
    }

    fn group(&mut self) -> Result<GroupPattern, QueryError> {
        if self.peek() != Some(&Tok::LBrace) {
            return Err(self.err("expected '{'"));
        }
        self.pos += 1;
        let mut g = GroupPattern::default();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    return Ok(g);
                }
                Some(Tok::LBrace) => {
                    let first = self.group()?;
                    let mut branches = vec![first];
                    while self.is_word("UNION") {
                        self.pos += 1;
                        branches.push(self.group()?);
                    }
                    if branches.len() == 1 {
                        let inner = branches.pop().unwrap();
                        g.triples.extend(inner.triples);
                        if let Some(u) = inner.union {
                            if g.union.is_some() {
                                return Err(self.err("only one UNION block per group is supported"));
                            }
                            g.union = Some(u);
                        }
                    } else {
                        if g.union.is_some() {
                            return Err(self.err("only one UNION block per group is supported"));
                        }
                        g.union = Some(branches);
                    }
                    if self.peek() == Some(&Tok::Dot) {
                        self.pos += 1;
                    }
                }
                Some(_) => {
                    g.triples.push(self.triple()?);
                    match self.peek() {
                        Some(Tok::Dot) => self.pos += 1,
                        Some(Tok::RBrace) | Some(Tok::LBrace) => {}
                        _ => return Err(self.err("expected '.' or '}'")),
                    }
                }
                None => return Err(self.err("unterminated group")),
            }
        }
    }

    fn query(&mut self) -> Result<SelectQuery, QueryError> {
        while self.is_word("PREFIX") {
            self.pos += 1;
            let label = match self.peek().cloned() {
                Some(Tok::PName(p, l)) if l.is_empty() => p,
                _ => return Err(self.err("expected 'label:' after PREFIX")),
            };
            self.pos += 1;
            let iri = match self.peek().cloned() {
                Some(Tok::IriRef(iri)) => iri,
                _ => return Err(self.err("expected <iri> in PREFIX declaration")),
            };
            self.pos += 1;
            self.prefixes.insert(label, iri);
        }
        self.expect_word("SELECT")?;
        let distinct = if self.is_word("DISTINCT") {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut projection = Vec::new();
        while let Some(Tok::Var(v)) = self.peek().cloned() {
            self.pos += 1;
            if !projection.contains(&v) {
                projection.push(v);
            }
        }
        if projection.is_empty() {
            return Err(self.err("expected at least one projected variable"));
        }
        self.expect_word("WHERE")?;
        let where_clause = self.group()?;
        if self.pos != self.toks.len() {
            return Err(self.err("trailing input after query"));
        }
        let used = where_clause.variables_in_order();
        if let Some(v) = projection.iter().find(|v| !used.contains(v)) {
            return Err(QueryError::UnusedProjection(v.clone()));
        }
        Ok(SelectQuery {
            prefixes: std::mem::take(&mut self.prefixes),
            projection,
            distinct,
            where_clause,
        })
    }
}

/// Parses a query using only its own PREFIX declarations (plus `rdf:`).
pub fn parse_select(text: &str) -> Result<SelectQuery, QueryError> {
    parse_select_with(text, None)
}

/// Like [`parse_select`], but undeclared prefixes found in `ambient` are
/// accepted and added to the query's prefix table.
pub fn parse_select_with(text: &str, ambient: Option<&PrefixTable>) -> Result<SelectQuery, QueryError> {
    if text.trim().is_empty() {
        return Err(QueryError::Syntax {
            line: 1,
            column: 1,
            message: "empty query".into(),
        });
    }
    let toks = lex(text)?;
    let mut r = TermReader {
        toks: &toks,
        pos: 0,
        prefixes: PrefixTable::new(),
        ambient,
    };
    r.query()
}

// ---------------------------------------------------------------------------
// Serializer

pub(crate) fn write_iri(out: &mut String, iri: &Iri, prefixes: &PrefixTable) {
    if let Some(label) = prefixes.label_for(&iri.ns) {
        let _ = write!(out, "{label}:{}", iri.local);
    } else if iri.ns == RDF_NS && !prefixes.contains_label("rdf") {
        let _ = write!(out, "rdf:{}", iri.local);
    } else {
        let _ = write!(out, "{iri}");
    }
}

pub(crate) fn write_term(out: &mut String, t: &Term, prefixes: &PrefixTable) {
    match t {
        Term::Variable(v) => {
            let _ = write!(out, "?{v}");
        }
        Term::Iri(i) => write_iri(out, i, prefixes),
        Term::Literal(l) => {
            let _ = write!(out, "{l}");
        }
    }
}

fn write_group(out: &mut String, g: &GroupPattern, prefixes: &PrefixTable, depth: usize) {
    let pad = "  ".repeat(depth);
    for t in &g.triples {
        out.push_str(&pad);
        for (k, term) in t.terms().into_iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write_term(out, term, prefixes);
        }
        out.push_str(" .\n");
    }
    if let Some(branches) = &g.union {
        for (k, b) in branches.iter().enumerate() {
            if k > 0 {
                let _ = writeln!(out, "{pad}UNION");
            }
            let _ = writeln!(out, "{pad}{{");
            write_group(out, b, prefixes, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

/// Deterministic SPARQL text for `q`.
pub fn serialize_select(q: &SelectQuery) -> String {
    let mut out = String::new();
    for (label, ns) in q.prefixes.iter() {
        let _ = writeln!(out, "PREFIX {label}: <{ns}>");
    }
    out.push_str("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    let vars: Vec<String> = q.projection.iter().map(|v| format!("?{v}")).collect();
    out.push_str(&vars.join(" "));
    out.push_str("\nWHERE {\n");
    write_group(&mut out, &q.where_clause, &q.prefixes, 1);
    out.push_str("}\n");
    out
}

impl fmt::Display for SelectQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_select(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANQUET: &str = "SELECT DISTINCT ?v1 WHERE { ?v1 rdf:type onto_Source:Conference_Banquet }";

    fn ambient() -> PrefixTable {
        [
            ("onto_Source", "http://ekaw#"),
            ("target_onto", "http://edas#"),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn banquet_source_query() {
        let q = parse_select_with(BANQUET, Some(&ambient())).unwrap();
        assert_eq!(q.projection, ["v1"]);
        assert_eq!(q.where_clause.triples.len(), 1);
        assert!(q.where_clause.triples[0].predicate.as_iri().unwrap().is_rdf_type());
        let again = parse_select(&serialize_select(&q)).unwrap();
        assert_eq!(again, q);
    }

    #[test]
    fn undeclared_prefix_is_an_error() {
        assert!(matches!(
            parse_select(BANQUET),
            Err(QueryError::UnknownPrefix { prefix, .. }) if prefix == "onto_Source"
        ));
    }

    #[test]
    fn three_way_union() {
        let text = "PREFIX target_onto: <http://edas#>
            SELECT DISTINCT ?v1
            WHERE {
              { ?v1 rdf:type target_onto:Conference }
              UNION
              { ?v1 rdf:type target_onto:ConferenceEvent }
              UNION
              { ?v1 rdf:type target_onto:ConferenceSession }
            }";
        let q = parse_select(text).unwrap();
        let u = q.where_clause.union.as_ref().unwrap();
        assert_eq!(u.len(), 3);
        assert!(u.iter().all(|b| b.triples.len() == 1));
        assert!(q.where_clause.triples.is_empty());
    }

    #[test]
    fn unused_projection() {
        assert_eq!(
            parse_select("SELECT DISTINCT ?x WHERE { }"),
            Err(QueryError::UnusedProjection("x".into()))
        );
    }

    #[test]
    fn a_expands_to_rdf_type() {
        let q = parse_select("PREFIX e: <http://e#> SELECT DISTINCT ?x WHERE { ?x a e:C . }").unwrap();
        let s = serialize_select(&q);
        assert!(s.contains("?x rdf:type e:C ."), "{s}");
    }

    #[test]
    fn no_prefix_lines_without_prefixes() {
        let q = parse_select("SELECT DISTINCT ?x WHERE { ?x a <http://e#C> }").unwrap();
        let s = serialize_select(&q);
        assert!(!s.contains("PREFIX"));
        assert_eq!(parse_select(&s).unwrap(), q);
    }

    #[test]
    fn error_position() {
        match parse_select("SELECT DISTINCT ?x\nWHERE { ?x ?y }") {
            Err(QueryError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 15)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn literal_subject_rejected() {
        assert!(parse_select("SELECT DISTINCT ?x WHERE { 1 ?x 2 }").is_err());
    }

    #[test]
    fn nested_single_group_is_merged() {
        let q = parse_select_with(
            "SELECT DISTINCT ?v1 WHERE { { ?v1 rdf:type onto_Source:Conference_Banquet } }",
            Some(&ambient()),
        )
        .unwrap();
        assert_eq!(q, parse_select_with(BANQUET, Some(&ambient())).unwrap());
    }

    #[test]
    fn variables_of_union_branches() {
        let q = parse_select(
            "PREFIX e: <http://e#> SELECT DISTINCT ?a WHERE { ?a e:p ?b . { ?a e:q ?c } UNION { ?a e:r ?d } }",
        )
        .unwrap();
        let vars: Vec<String> = query_variables(&q).into_iter().collect();
        assert_eq!(vars, ["a", "b", "c", "d"]);
    }

    #[test]
    fn conjoin_union_distributes() {
        let t = |o: &str| TriplePattern::new(Term::var("x"), Term::Iri(Iri::rdf_type()), Term::Iri(Iri::new("http://e#", o)));
        let mut g = GroupPattern {
            triples: vec![],
            union: Some(vec![GroupPattern::from_triples(vec![t("A")]), GroupPattern::from_triples(vec![t("B")])]),
        };
        g.conjoin_union(vec![GroupPattern::from_triples(vec![t("C")]), GroupPattern::from_triples(vec![t("D")])]);
        let branches = g.union.unwrap();
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].union.as_ref().unwrap().len(), 2);
    }
}
