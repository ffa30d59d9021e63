use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("empty class expression")]
    Empty,
    #[error("syntax error at offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("mixed 'and'/'or' at offset {pos} without parentheses")]
    MixedConnectives { pos: usize },
    #[error("unknown prefix '{0}'")]
    UnknownPrefix(String),
    #[error("expression mixes source and target entities: {0}")]
    MixedSides(String),
    #[error("invalid local name '{0}'")]
    InvalidName(String),
}

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("alignment parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("correspondence #{index} ({field}): {source}")]
    Expression {
        index: usize,
        field: &'static str,
        source: ExprError,
    },
    #[error("correspondence #{index}: confidence out of range: {value}")]
    ConfidenceOutOfRange { index: usize, value: f64 },
    #[error("correspondence #{index}: side violation: {message}")]
    SideViolation { index: usize, message: String },
    #[error("correspondence #{index}: unsupported relation '{relation}'")]
    UnsupportedRelation { index: usize, relation: String },
    #[error("prefix table error: {0}")]
    Prefix(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown prefix '{prefix}' at line {line}, column {column}")]
    UnknownPrefix {
        prefix: String,
        line: usize,
        column: usize,
    },
    #[error("projected variable ?{0} does not occur in the WHERE clause")]
    UnusedProjection(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriteError {
    #[error("unmapped source vocabulary: {}", .0.join(", "))]
    Unmapped(Vec<String>),
    #[error("rewriting removed every projected variable")]
    EmptyProjection,
    #[error("key not found in dictionary: {0}")]
    KeyNotFound(String),
    #[error("rewrite produced {0} alternative queries, above the limit of {1}")]
    TooManyBranches(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("question has no content words")]
    EmptyContent,
    #[error("dictionary has no candidate keys")]
    EmptyDictionary,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("no confident match (threshold {threshold}); best candidates: {}", format_candidates(.candidates))]
    NoConfidentMatch {
        threshold: f64,
        candidates: Vec<(String, f64)>,
    },
}

fn format_candidates(c: &[(String, f64)]) -> String {
    if c.is_empty() {
        return "none".into();
    }
    c.iter()
        .map(|(k, s)| format!("{k} ({s:.3})"))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum FactsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("facts parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: '{iri}' does not belong to the {side} ontology")]
    WrongSide {
        line: usize,
        iri: String,
        side: crate::model::Side,
    },
}
