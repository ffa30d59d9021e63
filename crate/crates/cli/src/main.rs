use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use alignrw::alignment::{build_dictionary, load_alignment, Alignment, AlignmentDictionary, Scope};
use alignrw::error::{AlignmentError, MatchError, RewriteError};
use alignrw::eval::run_oracle;
use alignrw::nl::{external_endpoint_from_env, match_key, normalize_question, Lexicon};
use alignrw::rewrite::{generate_query_pair, rewrite_query_with, RewriteOptions};
use alignrw::sparql::{parse_select_with, serialize_select};
use alignrw::{bundled, Execution};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

const EXIT_USAGE: u8 = 1;
const EXIT_LOAD: u8 = 2;
const EXIT_UNMAPPED: u8 = 3;
const EXIT_NO_MATCH: u8 = 4;
const EXIT_ORACLE: u8 = 5;

/// Rewrite SPARQL SELECT queries between two aligned ontologies.
#[derive(Debug, Parser)]
#[command(name = "alignrw", version)]
struct Cli {
    #[command(flatten)]
    cfg: Config,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Config {
    /// Alignment JSON file (defaults to the bundled ekaw-edas-mini alignment).
    #[arg(long, global = true, value_name = "PATH")]
    alignment: Option<PathBuf>,
    /// Fail when source vocabulary would survive rewriting (default).
    #[arg(long, global = true, overrides_with = "lenient")]
    strict: bool,
    /// Keep unmapped source vocabulary and report it instead of failing.
    #[arg(long, global = true, overrides_with = "strict")]
    lenient: bool,
    /// Discard derived correspondences below this confidence.
    #[arg(long, global = true, value_name = "F", default_value_t = 0.0)]
    min_confidence: f64,
    /// Minimum score for a question to match a key.
    #[arg(long, global = true, value_name = "F", default_value_t = alignrw::nl::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Swap the source and target ontologies.
    #[arg(long, global = true)]
    invert: bool,
    /// Emit JSON including the rewrite report.
    #[arg(long, global = true)]
    report: bool,
    /// Seed for synthetic data.
    #[arg(long, global = true, value_name = "N", default_value_t = 42)]
    seed: u64,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Synonym lexicon (tab-separated groups); defaults to the bundled one.
    #[arg(long, global = true, value_name = "PATH")]
    lexicon: Option<PathBuf>,
    /// Upper bound on alternative rewrites of one query.
    #[arg(long, global = true, value_name = "N", default_value_t = 4096)]
    max_branches: usize,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print asserted and derived correspondences as alignment JSON.
    Closure,
    /// Rewrite a query file ("-" reads stdin) into the target vocabulary.
    Rewrite { query: PathBuf },
    /// Match a question to a dictionary key and print its query pair.
    Ask {
        #[arg(required = true, num_args = 1..)]
        question: Vec<String>,
    },
    /// Check an alignment file and summarize its correspondences.
    Validate,
    /// Check rewrites against synthetic aligned data.
    Eval {
        /// Individuals per equivalence class.
        #[arg(long, default_value_t = 25)]
        n: usize,
        /// Alignment the synthetic data is generated from (defaults to --alignment).
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
    /// Output produced before the failure (printed to stdout).
    output: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            output: String::new(),
        }
    }
}

type Outcome = Result<String, Failure>;

impl Config {
    fn strict(&self) -> bool {
        !self.lenient
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn check(&self) -> Result<(), Failure> {
        for (name, v) in [("--min-confidence", self.min_confidence), ("--threshold", self.threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Failure::new(EXIT_USAGE, format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

fn load(path: Option<&Path>) -> Result<Alignment, Failure> {
    let loaded = match path {
        Some(p) => load_alignment(p),
        None => Alignment::from_json_str(bundled::ALIGNMENT),
    };
    loaded.map_err(|e: AlignmentError| Failure::new(EXIT_LOAD, e.to_string()))
}

/// The alignment as configured: possibly inverted, closed under transitivity.
fn closed(cfg: &Config, path: Option<&Path>) -> Result<Alignment, Failure> {
    let mut a = load(path)?;
    if cfg.invert {
        a = a.inverted();
    }
    let cs = alignrw::closure::close_with(&a.correspondences, cfg.min_confidence, cfg.exec());
    Ok(Alignment::new(a.vocab, cs))
}

fn dictionary(a: &Alignment) -> AlignmentDictionary {
    build_dictionary(&a.vocab, &a.correspondences)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn run_closure(cfg: &Config) -> Outcome {
    let a = closed(cfg, cfg.alignment.as_deref())?;
    Ok(pretty(&a.to_json_value()))
}

fn read_query(path: &Path) -> Result<String, Failure> {
    let text = if path == Path::new("-") {
        std::io::read_to_string(std::io::stdin())
    } else {
        std::fs::read_to_string(path)
    };
    text.map_err(|e| Failure::new(EXIT_LOAD, format!("cannot read {}: {e}", path.display())))
}

fn run_rewrite(cfg: &Config, path: &Path) -> Outcome {
    let a = closed(cfg, cfg.alignment.as_deref())?;
    let text = read_query(path)?;
    let q = parse_select_with(&text, Some(&a.vocab.source))
        .map_err(|e| Failure::new(EXIT_LOAD, format!("{}: {e}", path.display())))?;
    let d = dictionary(&a);
    let opts = RewriteOptions {
        strict: cfg.strict(),
        max_branches: cfg.max_branches,
    };
    let outputs = rewrite_query_with(&q, &d, &opts).map_err(|e| {
        let code = match e {
            RewriteError::Unmapped(_) => EXIT_UNMAPPED,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    })?;
    if cfg.report {
        let arr: Vec<Value> = outputs
            .iter()
            .map(|o| json!({ "query": serialize_select(&o.query), "report": o.report }))
            .collect();
        return Ok(pretty(&Value::Array(arr)));
    }
    let mut out = String::new();
    let many = outputs.len() > 1;
    for (i, o) in outputs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if many {
            let _ = writeln!(
                out,
                "# rewrite {} of {} (confidence {:.3})",
                i + 1,
                outputs.len(),
                o.report.confidence
            );
        }
        for w in &o.report.warnings {
            let _ = writeln!(out, "# warning: {w}");
        }
        if !o.report.dropped_variables.is_empty() {
            let dropped: Vec<String> = o.report.dropped_variables.iter().map(|v| format!("?{v}")).collect();
            let _ = writeln!(out, "# dropped: {}", dropped.join(" "));
        }
        if !o.report.unmapped_iris.is_empty() {
            let unmapped: Vec<&str> = o.report.unmapped_iris.iter().map(String::as_str).collect();
            let _ = writeln!(out, "# unmapped: {}", unmapped.join(" "));
        }
        out.push_str(&serialize_select(&o.query));
    }
    Ok(out)
}

fn run_ask(cfg: &Config, words: &[String]) -> Outcome {
    let a = closed(cfg, cfg.alignment.as_deref())?;
    let d = dictionary(&a);
    let lexicon = match &cfg.lexicon {
        Some(p) => Lexicon::load(p).map_err(|e| Failure::new(EXIT_LOAD, format!("cannot read {}: {e}", p.display())))?,
        None => Lexicon::bundled(),
    };
    let question = words.join(" ");
    let no_match = |e: MatchError| {
        let code = match e {
            MatchError::InvalidThreshold(_) => EXIT_USAGE,
            _ => EXIT_NO_MATCH,
        };
        Failure::new(code, e.to_string())
    };
    let q = normalize_question(&question, &lexicon).map_err(no_match)?;
    let endpoint = external_endpoint_from_env();
    let m = match_key(&q, &d, cfg.threshold, endpoint.as_deref()).map_err(no_match)?;
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    let (source, targets) = generate_query_pair(&m.key, &d).map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let entry = d.get(&m.key).expect("matched key is in the dictionary");
    if cfg.report {
        let alternatives: Vec<Value> = m
            .ranked_alternatives
            .iter()
            .take(3)
            .map(|(k, s)| json!({ "key": k.to_string(), "score": s }))
            .collect();
        let target_queries: Vec<Value> = targets
            .iter()
            .zip(&entry.values)
            .map(|(t, v)| {
                json!({
                    "target": v.target.to_string(),
                    "confidence": v.confidence,
                    "origin": v.origin,
                    "kind": entry.kind_of(v),
                    "query": serialize_select(t),
                })
            })
            .collect();
        return Ok(pretty(&json!({
            "question": question,
            "tokens": q.tokens,
            "key": m.key.to_string(),
            "score": m.score,
            "matcher": m.source,
            "alternatives": alternatives,
            "source_query": serialize_select(&source),
            "target_queries": target_queries,
        })));
    }
    let mut out = String::new();
    let _ = writeln!(out, "Question: {question}");
    let _ = writeln!(out, "Matched key: {} (score {:.3})\n", m.key, m.score);
    let _ = writeln!(out, "Source query:");
    out.push_str(&serialize_select(&source));
    for (t, v) in targets.iter().zip(&entry.values) {
        let _ = writeln!(
            out,
            "\nTarget query for {} (confidence {:.3}, {}, {}):",
            v.target,
            v.confidence,
            v.origin,
            entry.kind_of(v)
        );
        out.push_str(&serialize_select(t));
    }
    Ok(out)
}

fn run_validate(cfg: &Config) -> Outcome {
    let mut a = load(cfg.alignment.as_deref())?;
    if cfg.invert {
        a = a.inverted();
    }
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    let mut scopes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (i, c) in a.correspondences.iter().enumerate() {
        let scope = match c.scope() {
            Scope::Cross => "cross",
            Scope::IntraSource => "intra-source",
            Scope::IntraTarget => "intra-target",
        };
        *scopes.entry(scope).or_default() += 1;
        if c.is_cross() {
            *kinds.entry(c.kind().to_string()).or_default() += 1;
        }
        if let Some(prev) = seen.insert((c.source.to_string(), c.target.to_string()), i) {
            warnings.push(format!("entry {i} repeats entry {prev}: {} = {}", c.source, c.target));
        }
        for (field, m) in [("source", &c.source), ("target", &c.target)] {
            if m.has_non_existential_restriction() {
                warnings.push(format!(
                    "entry {i} {field} '{m}' uses only/cardinality restrictions; queries approximate them existentially"
                ));
            }
        }
    }
    let d = dictionary(&a);
    for e in d.entries().filter(|e| e.values.len() > 1) {
        warnings.push(format!(
            "key '{}' has {} targets; rewrites using it branch",
            e.key,
            e.values.len()
        ));
    }
    if cfg.report {
        return Ok(pretty(&json!({
            "correspondences": a.correspondences.len(),
            "scopes": scopes,
            "kinds": kinds,
            "dictionary_keys": d.len(),
            "warnings": warnings,
        })));
    }
    let mut out = String::new();
    let _ = writeln!(out, "correspondences: {}", a.correspondences.len());
    for (s, n) in &scopes {
        let _ = writeln!(out, "  {s}: {n}");
    }
    let _ = writeln!(out, "cross-ontology patterns:");
    for (k, n) in &kinds {
        let _ = writeln!(out, "  {k}: {n}");
    }
    let _ = writeln!(out, "dictionary keys: {}", d.len());
    for w in &warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(out, "ok");
    Ok(out)
}

fn run_eval(cfg: &Config, n: usize, reference: Option<&Path>) -> Outcome {
    if n == 0 {
        return Err(Failure::new(EXIT_USAGE, "--n must be at least 1"));
    }
    let started = Instant::now();
    let a = closed(cfg, cfg.alignment.as_deref())?;
    let reference = match reference {
        Some(p) => closed(cfg, Some(p))?,
        None => a.clone(),
    };
    let (pair, cases) = run_oracle(
        &a.correspondences,
        &reference.correspondences,
        &a.vocab,
        n,
        cfg.seed,
        cfg.exec(),
    );
    let failed = cases.iter().filter(|c| !c.passed).count();
    let mut out = String::new();
    if cfg.report {
        out = pretty(&json!({
            "seed": cfg.seed,
            "n": n,
            "source_facts": pair.source.len(),
            "target_facts": pair.target.len(),
            "warnings": pair.warnings,
            "cases": cases,
            "passed": cases.len() - failed,
            "failed": failed,
        }));
    } else {
        let _ = writeln!(
            out,
            "seed {} n {}: {} source facts, {} target facts",
            cfg.seed,
            n,
            pair.source.len(),
            pair.target.len()
        );
        for w in &pair.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        for c in &cases {
            let status = match (c.passed, c.skipped) {
                (_, true) => "SKIP",
                (true, _) => "PASS",
                (false, _) => "FAIL",
            };
            let _ = writeln!(
                out,
                "{status} {} = {} ({} rewrites, {} rows)",
                c.source, c.target, c.rewrites, c.source_rows
            );
            if let (false, Some(d)) = (c.passed, &c.detail) {
                for line in d.lines() {
                    let _ = writeln!(out, "    {line}");
                }
            }
        }
        let _ = writeln!(
            out,
            "{} passed, {} failed in {:.2?}",
            cases.len() - failed,
            failed,
            started.elapsed()
        );
    }
    if failed > 0 {
        return Err(Failure {
            code: EXIT_ORACLE,
            message: format!("{failed} correspondence(s) failed the oracle"),
            output: out,
        });
    }
    Ok(out)
}

fn emit(cfg: &Config, text: &str) -> Result<(), Failure> {
    match &cfg.out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::new(EXIT_USAGE, format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = &cli.cfg;
    let outcome = cfg.check().and_then(|()| match &cli.command {
        Command::Closure => run_closure(cfg),
        Command::Rewrite { query } => run_rewrite(cfg, query),
        Command::Ask { question } => run_ask(cfg, question),
        Command::Validate => run_validate(cfg),
        Command::Eval { n, reference } => run_eval(cfg, *n, reference.as_deref()),
    });
    let result = match outcome {
        Ok(text) => emit(cfg, &text),
        Err(f) => {
            if !f.output.is_empty() {
                let _ = emit(cfg, &f.output);
            }
            Err(f)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
