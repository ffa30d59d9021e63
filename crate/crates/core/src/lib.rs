//! Rewriting of SPARQL `SELECT` queries from a source ontology's vocabulary
//! into a target ontology's vocabulary, driven by simple and complex
//! equivalence correspondences.
//!
//! The pipeline: [`alignment::load_alignment`] reads correspondences,
//! [`closure`] infers new ones through equivalence transitivity,
//! [`alignment::build_dictionary`] indexes them by source member,
//! [`rewrite`] compiles members into graph patterns and rewrites queries,
//! and [`nl`] maps a natural-language question onto a dictionary key.
//! [`eval`] is a small in-memory evaluator used to check that rewrites
//! preserve answers.

pub mod alignment;
pub mod closure;
pub mod error;
pub mod eval;
pub mod expr_parser;
pub mod model;
pub mod nl;
pub mod par;
pub mod rewrite;
pub mod sparql;

pub use alignment::{
    build_dictionary, classify_pattern, load_alignment, Alignment, AlignmentDictionary,
    Correspondence, Origin, PatternKind,
};
pub use closure::{build_equivalence_graph, close, derive_closure, EquivalenceGraph};
pub use eval::{evaluate, generate_aligned_pair, load_facts, FactStore, ResultSet};
pub use expr_parser::parse_class_expression;
pub use model::{
    canonicalize, label_tokens, serialize_class_expression, ClassExpression, EntityIri, Literal,
    PrefixTable, Side, Vocabulary,
};
pub use nl::{match_key, normalize_question, score_candidates, Lexicon, MatchResult, NormalizedQuestion};
pub use par::Execution;
pub use rewrite::{
    compile_pattern, generate_query_pair, match_pattern, rewrite_many, rewrite_query, rewrite_query_with, PatternBgp,
    RewriteOptions, RewriteReport,
};
pub use sparql::{parse_select, parse_select_with, serialize_select, GroupPattern, SelectQuery, Term, TriplePattern};

/// Data shipped with the crate.
pub mod bundled {
    /// A small ekaw/edas conference alignment with simple and complex
    /// correspondences, including the intra-ontology equivalences needed
    /// to infer complex-to-complex ones.
    pub const ALIGNMENT: &str = include_str!("../fixtures/ekaw-edas-mini.align.json");
    /// Default synonym groups for question matching.
    pub const SYNONYMS: &str = include_str!("../fixtures/synonyms.tsv");
}
