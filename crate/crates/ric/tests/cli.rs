use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/chunks.json")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("ric").chain(args.iter().copied());
    let code = ric::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn motivating_source_reports_two_serious_issues() {
    let f = fixture("atomic_ops.c");
    let (code, out, _) = run(&["check", "--format", "json", path(&f)]);
    assert_eq!(code, 1);
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    let issues = v["chunks"][0]["issues"].as_array().unwrap();
    let serious = issues.iter().filter(|i| i["severity"] == "serious").count();
    assert_eq!(serious, 2);
    assert_eq!(v["summary"]["totals"]["serious"], 1);
}

#[test]
fn exit_codes() {
    let cases = [
        ("empty.c", 0),
        ("compliant.c", 0),
        ("load32.c", 0),
        ("ccmissing.c", 1),
        ("atomic_ops.c", 1),
        ("fpu.c", 3),
        ("badconstraint.c", 3),
    ];
    for (name, want) in cases {
        let (code, _, _) = run(&["check", path(&fixture(name))]);
        assert_eq!(code, want, "{name}");
    }
    let (code, _, _) = run(&["check", path(&fixture("compliant.c")), path(&fixture("fpu.c"))]);
    assert_eq!(code, 3);
    let (code, _, _) = run(&["check", path(&fixture("fpu.c")), path(&fixture("ccmissing.c"))]);
    assert_eq!(code, 1);
}

#[test]
fn empty_source_has_no_chunks() {
    let (code, out, _) = run(&["check", path(&fixture("empty.c"))]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["chunks"].as_array().unwrap().len(), 0);
    assert_eq!(v["summary"]["chunks"], 0);
}

#[test]
fn usage_and_io_errors_exit_2() {
    assert_eq!(run(&["check"]).0, 2);
    assert_eq!(run(&["frobnicate", "x.c"]).0, 2);
    assert_eq!(run(&["check", "--format", "yaml", "x.c"]).0, 2);
    let (code, _, err) = run(&["check", "/nonexistent/ric/x.c"]);
    assert_eq!(code, 2);
    assert!(err.contains("/nonexistent/ric/x.c"));
}

#[test]
fn schema_errors_exit_2_with_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(
        &p,
        r#"[{"template": "", "outputs": [{"constraint": "=r", "size_bytes": 3}],
            "inputs": [], "clobbers": [], "qualifiers": [], "context": {}}]"#,
    )
    .unwrap();
    let (code, _, err) = run(&["check", "--chunks", path(&p)]);
    assert_eq!(code, 2);
    assert!(err.contains("[0].outputs[0].size_bytes"), "{err}");
}

#[test]
fn patch_in_place_leaves_compliant_files_alone() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ok.c");
    let original = std::fs::read_to_string(fixture("compliant.c")).unwrap();
    std::fs::write(&p, &original).unwrap();
    let (code, _, _) = run(&["patch", "--in-place", path(&p)]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&p).unwrap(), original);
}

#[test]
fn patch_in_place_fixes_the_motivating_source() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("atomic_ops.c");
    std::fs::copy(fixture("atomic_ops.c"), &p).unwrap();
    let (code, out, _) = run(&["patch", "--in-place", "--format", "json", path(&p)]);
    assert_eq!(code, 1);
    let v = json(&out);
    let patch = &v["chunks"][0]["patch"];
    assert_eq!(patch["verification"]["fully_compliant"], true);
    assert!(patch["diff"].as_str().unwrap().contains("+"));
    let patched = std::fs::read_to_string(&p).unwrap();
    assert!(patched.contains("\"ebx\""), "{patched}");
    assert!(patched.contains("\"=d\""), "{patched}");
    let (code, _, _) = run(&["check", path(&p)]);
    assert_eq!(code, 0);
    let (code, _, _) = run(&["patch", "--in-place", path(&p)]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&p).unwrap(), patched);
}

#[test]
fn refine_replaces_memory_with_an_entry() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("load32.c");
    std::fs::copy(fixture("load32.c"), &p).unwrap();
    let (code, out, _) = run(&["refine", "--in-place", "--format", "json", path(&p)]);
    assert_eq!(code, 0);
    let edits = &json(&out)["chunks"][0]["refinements"]["edits"];
    assert_eq!(edits[0]["kind"], "memory_to_entries");
    let refined = std::fs::read_to_string(&p).unwrap();
    assert!(refined.contains("\"m\" (*(const char (*)[4]) (key))"), "{refined}");
    assert!(!refined.contains("\"memory\""));

    std::fs::copy(fixture("load32.c"), &p).unwrap();
    let (_, out, _) = run(&["refine", "--no-refine-memory", "--format", "json", path(&p)]);
    let r = &json(&out)["chunks"][0]["refinements"];
    assert!(r["edits"].as_array().unwrap().iter().all(|e| e["kind"] != "memory_to_entries"));
}

#[test]
fn oracle_reports_a_witness() {
    let f = fixture("atomic_ops.c");
    let (code, out, _) = run(&["oracle", "--format", "json", "--trials", "40", path(&f)]);
    assert_eq!(code, 1);
    let w = &json(&out)["chunks"][0]["oracle_witness"];
    assert_eq!(w["frame_write"]["verdict"], "violation");
    assert_eq!(w["frame_write"]["location"], "edx");
}

#[test]
fn json_is_byte_identical_across_runs() {
    let corpus = corpus();
    let args = ["oracle", "--format", "json", "--seed", "99", "--chunks", path(&corpus)];
    let (_, a, _) = run(&args);
    let (_, b, _) = run(&args);
    assert_eq!(a, b);
    let (_, c, _) = run(&["oracle", "--format", "json", "--seed", "100", "--chunks", path(&corpus)]);
    assert_eq!(json(&a)["summary"], json(&c)["summary"]);
}

#[test]
fn timings_are_opt_in() {
    let f = fixture("compliant.c");
    let (_, out, _) = run(&["check", path(&f)]);
    assert!(json(&out)["chunks"][0]["timings"].is_null());
    let (_, out, _) = run(&["check", "--timings", path(&f)]);
    let v = json(&out);
    assert!(v["chunks"][0]["timings"]["check_ms"].is_number());
    assert!(v["summary"]["timing"]["mean_ms"].is_number());
}

#[test]
fn out_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let (code, out, _) = run(&["check", "--out", path(&report), path(&fixture("ccmissing.c"))]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    let v = json(&std::fs::read_to_string(&report).unwrap());
    assert_eq!(v["summary"]["totals"]["benign_only"], 1);
}

#[test]
fn text_format() {
    let (_, out, _) = run(&["check", "--format", "text", path(&fixture("atomic_ops.c"))]);
    assert!(out.contains("read_only_input_clobbered"));
    assert!(out.contains("[P2]"));
    assert!(!out.contains('\u{1b}'));
}

#[test]
fn binary_exit_status() {
    let status = Command::new(env!("CARGO_BIN_EXE_ric"))
        .args(["check", path(&fixture("atomic_ops.c"))])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    let status = Command::new(env!("CARGO_BIN_EXE_ric"))
        .args(["check", path(&fixture("empty.c"))])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
}
