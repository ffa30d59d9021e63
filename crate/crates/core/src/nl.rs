//! Resolving a natural-language question to a dictionary key.
//!
//! Questions are lowercased, stripped of punctuation and stopwords, and
//! suffix-stripped; a synonym lexicon then widens the token set. Keys are
//! ranked by Jaccard similarity between that set and their label tokens.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentDictionary;
use crate::error::MatchError;
use crate::model::{label_tokens, ClassExpression};

/// Environment variable naming the external matcher endpoint.
pub const MATCHER_URL_VAR: &str = "ALIGNRW_MATCHER_URL";

pub const DEFAULT_THRESHOLD: f64 = 0.2;

const SUBSET_BONUS: f64 = 0.1;

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
    // Question framing.
    "tell", "list", "give", "show", "provide", "information", "various", "different", "kind",
    "kinds", "type", "types", "exist", "exists", "upon", "please", "many", "much", "find",
    "get", "know", "want", "let",
];

fn is_stopword(w: &str) -> bool {
    STOPWORDS.contains(&w)
}

fn strip_once(w: &str) -> Option<String> {
    let n = w.len();
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.len() >= 2 {
            return Some(format!("{stem}y"));
        }
    }
    if let Some(stem) = w.strip_suffix("ing") {
        if stem.len() >= 3 {
            return Some(stem.to_string());
        }
    }
    if let Some(stem) = w.strip_suffix("ed") {
        if stem.len() >= 3 {
            return Some(stem.to_string());
        }
    }
    if let Some(stem) = w.strip_suffix("es") {
        let sibilant = ["s", "x", "z", "ch", "sh"].iter().any(|s| stem.ends_with(s));
        if stem.len() >= 3 && sibilant {
            return Some(stem.to_string());
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && n > 3 {
        return Some(w[..n - 1].to_string());
    }
    None
}

/// Light suffix stripping, applied until nothing changes.
pub fn stem(word: &str) -> String {
    let mut w = word.to_string();
    while let Some(next) = strip_once(&w) {
        w = next;
    }
    w
}

/// Lowercased content words of `text`, stopwords removed, stemmed.
pub fn content_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !is_stopword(w))
        .map(|w| stem(&w))
        .filter(|w| !is_stopword(w))
        .collect()
}

/// Groups of interchangeable words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    groups: Vec<BTreeSet<String>>,
    index: HashMap<String, Vec<usize>>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon::default()
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Lexicon::parse(crate::bundled::SYNONYMS)
    }

    /// One group per line, tab-separated; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        let mut lex = Lexicon::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let group: BTreeSet<String> = line
                .split('\t')
                .flat_map(content_tokens)
                .collect();
            if group.len() < 2 {
                continue;
            }
            let id = lex.groups.len();
            for w in &group {
                lex.index.entry(w.clone()).or_default().push(id);
            }
            lex.groups.push(group);
        }
        lex
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Lexicon::parse(&std::fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Every word sharing a group with `token`.
    pub fn equivalents(&self, token: &str) -> impl Iterator<Item = &String> {
        self.index
            .get(token)
            .into_iter()
            .flatten()
            .flat_map(|&g| self.groups[g].iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedQuestion {
    pub original: String,
    pub tokens: Vec<String>,
    pub expanded: BTreeSet<String>,
}

pub fn normalize_question(text: &str, lexicon: &Lexicon) -> Result<NormalizedQuestion, MatchError> {
    let tokens = content_tokens(text);
    if tokens.is_empty() {
        return Err(MatchError::EmptyContent);
    }
    let mut expanded: BTreeSet<String> = tokens.iter().cloned().collect();
    for t in &tokens {
        expanded.extend(lexicon.equivalents(t).cloned());
    }
    Ok(NormalizedQuestion {
        original: text.to_string(),
        tokens,
        expanded,
    })
}

/// Label tokens of a key, normalized like question words.
pub fn key_tokens(key: &ClassExpression) -> BTreeSet<String> {
    label_tokens(key)
        .iter()
        .filter(|w| !is_stopword(w))
        .map(|w| stem(w))
        .filter(|w| !is_stopword(w))
        .collect()
}

/// Jaccard similarity plus a bonus when the key is fully covered.
pub fn similarity(expanded: &BTreeSet<String>, key: &BTreeSet<String>) -> f64 {
    if key.is_empty() {
        return 0.0;
    }
    let inter = expanded.intersection(key).count() as f64;
    let union = expanded.union(key).count() as f64;
    let mut s = inter / union;
    if key.is_subset(expanded) {
        s = (s + SUBSET_BONUS).min(1.0);
    }
    s
}

/// Class keys ranked by descending score, ties by canonical key.
pub fn score_candidates(q: &NormalizedQuestion, d: &AlignmentDictionary) -> Vec<(ClassExpression, f64)> {
    let mut out: Vec<(String, ClassExpression, f64)> = d
        .entries()
        .filter(|e| !e.is_property_key())
        .map(|e| (e.key.to_string(), e.key.clone(), similarity(&q.expanded, &key_tokens(&e.key))))
        .collect();
    out.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    out.into_iter().map(|(_, k, s)| (k, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchSource {
    Lexical,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub key: ClassExpression,
    pub score: f64,
    /// Remaining candidates, descending.
    pub ranked_alternatives: Vec<(ClassExpression, f64)>,
    pub source: MatchSource,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct WireCandidate<'a> {
    id: usize,
    expression: String,
    tokens: &'a BTreeSet<String>,
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    question: &'a str,
    candidates: Vec<WireCandidate<'a>>,
}

#[derive(Debug, Deserialize)]
struct WireRanked {
    id: usize,
    score: f64,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    ranked: Vec<WireRanked>,
}

#[cfg(feature = "external-matcher")]
fn call_external(url: &str, req: &WireRequest<'_>) -> Result<WireResponse, String> {
    use std::time::Duration;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(2)))
        .build()
        .into();
    let endpoint = format!("{}/match", url.trim_end_matches('/'));
    agent
        .post(&endpoint)
        .send_json(req)
        .map_err(|e| e.to_string())?
        .body_mut()
        .read_json::<WireResponse>()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "external-matcher"))]
fn call_external(_url: &str, _req: &WireRequest<'_>) -> Result<WireResponse, String> {
    Err("built without the external-matcher feature".into())
}

/// Picks the best key for `q`. With an `external` endpoint its top result is
/// trusted when it clears the threshold; otherwise, and on any failure of
/// the endpoint, the lexical ranking decides.
pub fn match_key(
    q: &NormalizedQuestion,
    d: &AlignmentDictionary,
    threshold: f64,
    external: Option<&str>,
) -> Result<MatchResult, MatchError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MatchError::InvalidThreshold(threshold));
    }
    let lexical = score_candidates(q, d);
    if lexical.is_empty() {
        return Err(MatchError::EmptyDictionary);
    }
    let mut warnings = Vec::new();
    if let Some(url) = external {
        let token_sets: Vec<BTreeSet<String>> = lexical.iter().map(|(k, _)| key_tokens(k)).collect();
        let req = WireRequest {
            question: &q.original,
            candidates: lexical
                .iter()
                .zip(&token_sets)
                .enumerate()
                .map(|(id, ((k, _), tokens))| WireCandidate {
                    id,
                    expression: k.to_string(),
                    tokens,
                })
                .collect(),
        };
        match call_external(url, &req) {
            Ok(resp) => {
                let mut ranked: Vec<(ClassExpression, f64)> = resp
                    .ranked
                    .iter()
                    .filter(|r| r.id < lexical.len() && r.score.is_finite())
                    .map(|r| (lexical[r.id].0.clone(), r.score.clamp(0.0, 1.0)))
                    .collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
                match ranked.first() {
                    Some((key, score)) if *score >= threshold => {
                        return Ok(MatchResult {
                            key: key.clone(),
                            score: *score,
                            ranked_alternatives: ranked[1..].to_vec(),
                            source: MatchSource::External,
                            warnings,
                        });
                    }
                    _ => warnings.push("external matcher gave no confident match; using lexical ranking".into()),
                }
            }
            Err(e) => warnings.push(format!("external matcher unavailable ({e}); using lexical ranking")),
        }
    }
    let (key, score) = lexical[0].clone();
    if score < threshold || score == 0.0 {
        return Err(MatchError::NoConfidentMatch {
            threshold,
            candidates: lexical
                .iter()
                .take(3)
                .map(|(k, s)| (k.to_string(), *s))
                .collect(),
        });
    }
    Ok(MatchResult {
        key,
        score,
        ranked_alternatives: lexical[1..].to_vec(),
        source: MatchSource::Lexical,
        warnings,
    })
}

/// `ALIGNRW_MATCHER_URL`, when set and non-empty.
pub fn external_endpoint_from_env() -> Option<String> {
    std::env::var(MATCHER_URL_VAR).ok().filter(|s| !s.trim().is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{build_dictionary, Alignment};

    #[test]
    fn stemming_rules() {
        assert_eq!(stem("banquets"), "banquet");
        assert_eq!(stem("receptions"), "reception");
        assert_eq!(stem("accepted"), "accept");
        assert_eq!(stem("classes"), "class");
        assert_eq!(stem("studies"), "study");
        assert_eq!(stem("class"), "class");
        assert_eq!(stem("held"), "held");
        assert_eq!(stem("has"), "has");
        assert_eq!(stem("proceedings"), stem(&stem("proceedings")));
    }

    #[test]
    fn formulation_two_tokens() {
        let q = normalize_question(
            "What are the various banquets held during the conference ?",
            &Lexicon::empty(),
        )
        .unwrap();
        for t in ["banquet", "held", "conference"] {
            assert!(q.tokens.contains(&t.to_string()), "{:?}", q.tokens);
        }
    }

    #[test]
    fn lexicon_expands() {
        let lex = Lexicon::parse("banquet\treception\n");
        let q = normalize_question("Can you tell me about the various conference receptions ?", &lex).unwrap();
        assert!(q.expanded.contains("banquet"));
        assert!(!q.tokens.contains(&"banquet".to_string()));
    }

    #[test]
    fn all_stopwords_is_empty_content() {
        assert_eq!(
            normalize_question("the the of", &Lexicon::empty()),
            Err(MatchError::EmptyContent)
        );
    }

    #[test]
    fn bundled_lexicon_loads() {
        let lex = Lexicon::bundled();
        assert!(lex.len() >= 3);
        assert!(lex.equivalents("reception").any(|w| w == "banquet"));
    }

    fn dict() -> AlignmentDictionary {
        let a = Alignment::from_json_str(
            r#"{ "source_prefixes": {"s": "http://s#"}, "target_prefixes": {"t": "http://t#"},
                 "correspondences": [
                   {"source": "Conference_Banquet", "target": "ConferenceDinner"},
                   {"source": "Event", "target": "Conference or ConferenceEvent"},
                   {"source": "writtenBy", "target": "hasAuthor"}
                 ] }"#,
        )
        .unwrap();
        build_dictionary(&a.vocab, &a.correspondences)
    }

    #[test]
    fn exact_label_scores_one() {
        let q = normalize_question("conference banquet", &Lexicon::empty()).unwrap();
        let ranked = score_candidates(&q, &dict());
        assert_eq!(ranked[0].0.to_string(), "Conference_Banquet");
        assert_eq!(ranked[0].1, 1.0);
    }

    #[test]
    fn property_keys_are_not_candidates() {
        let q = normalize_question("written by", &Lexicon::empty()).unwrap();
        assert_eq!(score_candidates(&q, &dict()).len(), 2);
    }

    #[test]
    fn unrelated_question_fails() {
        let q = normalize_question("weather tomorrow", &Lexicon::bundled()).unwrap();
        match match_key(&q, &dict(), 0.2, None) {
            Err(MatchError::NoConfidentMatch { candidates, .. }) => assert_eq!(candidates.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_threshold() {
        let q = normalize_question("event", &Lexicon::empty()).unwrap();
        assert_eq!(
            match_key(&q, &dict(), 1.5, None),
            Err(MatchError::InvalidThreshold(1.5))
        );
    }

    #[test]
    fn unreachable_endpoint_falls_back() {
        let q = normalize_question("What kinds of events are there ?", &Lexicon::bundled()).unwrap();
        let m = match_key(&q, &dict(), 0.2, Some("http://127.0.0.1:9")).unwrap();
        assert_eq!(m.key.to_string(), "Event");
        assert_eq!(m.source, MatchSource::Lexical);
        assert_eq!(m.warnings.len(), 1);
    }
}
