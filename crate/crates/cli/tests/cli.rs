use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn alignrw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alignrw"))
        .args(args)
        .env_remove("ALIGNRW_MATCHER_URL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

#[test]
fn closure_of_empty_alignment_is_empty() {
    let p = scratch(
        "empty.align.json",
        r#"{"source_prefixes": {"s": "http://s#"}, "target_prefixes": {"t": "http://t#"}, "correspondences": []}"#,
    );
    let o = alignrw(&["--alignment", p.to_str().unwrap(), "closure"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["correspondences"], serde_json::json!([]));
}

#[test]
fn malformed_alignment_exits_2() {
    let p = scratch("broken.align.json", "{ not json");
    for cmd in ["closure", "validate"] {
        let o = alignrw(&["--alignment", p.to_str().unwrap(), cmd]);
        assert_eq!(o.status.code(), Some(2), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn missing_query_file_exits_2() {
    let o = alignrw(&["rewrite", "/nonexistent/q.rq"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_query_exits_2() {
    let p = scratch("bad.rq", "SELECT ?x WHERE { ?x ");
    let o = alignrw(&["rewrite", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unaligned_vocabulary_exits_3_unless_lenient() {
    let q = fixture("queries/unaligned.rq");
    let strict = alignrw(&["rewrite", q.to_str().unwrap()]);
    assert_eq!(strict.status.code(), Some(3));
    assert!(stderr(&strict).contains("Proceedings"));

    let lenient = alignrw(&["--lenient", "--report", "rewrite", q.to_str().unwrap()]);
    assert!(lenient.status.success(), "{}", stderr(&lenient));
    let v: serde_json::Value = serde_json::from_str(&stdout(&lenient)).unwrap();
    let unmapped = v[0]["report"]["unmapped_iris"].as_array().unwrap();
    assert!(unmapped.iter().any(|i| i.as_str().unwrap().contains("Proceedings")));
}

#[test]
fn invert_rewrites_target_queries_to_source() {
    let q = fixture("queries/dinner.rq");
    let o = alignrw(&["--invert", "rewrite", q.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("onto_Source:Conference_Banquet"), "{out}");
    assert!(!out.contains("ConferenceDinner"));
}

#[test]
fn rewrite_reads_stdin() {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_alignrw"))
        .args(["rewrite", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"SELECT ?x WHERE { ?x rdf:type onto_Source:Workshop }")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("target_onto:Workshop"));
}

#[test]
fn out_flag_writes_file() {
    let dest = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("closure-out.json");
    let _ = std::fs::remove_file(&dest);
    let o = alignrw(&["--out", dest.to_str().unwrap(), "closure"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let written = std::fs::read_to_string(&dest).unwrap();
    assert!(written.contains("\"derived\""));
}

#[test]
fn min_confidence_filters_derived_pairs() {
    let p = scratch(
        "weak.align.json",
        r#"{"source_prefixes": {"s": "http://s#"}, "target_prefixes": {"t": "http://t#"},
            "correspondences": [
              {"source": "A", "target": "B", "confidence": 0.6},
              {"source": "t:B", "target": "t:C", "confidence": 0.9}
            ]}"#,
    );
    let derived = |min: &str| -> Vec<serde_json::Value> {
        let o = alignrw(&["--alignment", p.to_str().unwrap(), "--min-confidence", min, "closure"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["correspondences"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|c| c["origin"] == "derived")
            .cloned()
            .collect()
    };
    let kept = derived("0.5");
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0]["target"], "C");
    assert_eq!(kept[0]["confidence"], 0.6);
    assert!(derived("0.7").is_empty());
    let out_of_range = alignrw(&["--min-confidence", "1.5", "closure"]);
    assert_eq!(out_of_range.status.code(), Some(1));
}

#[test]
fn ask_without_match_exits_4() {
    let o = alignrw(&["ask", "weather", "tomorrow"]);
    assert_eq!(o.status.code(), Some(4));
    let only_stopwords = alignrw(&["ask", "what", "are", "the"]);
    assert_eq!(only_stopwords.status.code(), Some(4));
}

#[test]
fn ask_report_is_json() {
    let o = alignrw(&["--report", "ask", "What kinds of events are there ?"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["key"], "Event");
    assert_eq!(v["target_queries"].as_array().unwrap().len(), 1);
}

#[test]
fn unreachable_matcher_falls_back() {
    let o = Command::new(env!("CARGO_BIN_EXE_alignrw"))
        .args(["ask", "Could you list the different conference banquets ?"])
        .env("ALIGNRW_MATCHER_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("Conference_Banquet"));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn validate_summarizes_bundled_alignment() {
    let o = alignrw(&["validate"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("correspondences: 12"), "{out}");
    assert!(out.contains("CU: 1"));
}

#[test]
fn eval_with_one_individual_passes() {
    let o = alignrw(&["eval", "--n", "1"]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn eval_is_reproducible_and_sequential_agrees() {
    let a = alignrw(&["--report", "--seed", "7", "eval", "--n", "5"]);
    let b = alignrw(&["--report", "--seed", "7", "--sequential", "eval", "--n", "5"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn corrupted_alignment_fails_oracle() {
    let corrupted = fixture("ekaw-edas-mini.corrupted.align.json");
    let o = alignrw(&["eval", "--reference", corrupted.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    let failing: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("FAIL")).map(String::from).collect();
    assert_eq!(failing.len(), 1, "{failing:?}");
    assert!(failing[0].contains("Conference_Banquet"));
}
