//! End-to-end checks of the binary's user-facing surface: output shapes,
//! format selection, file output, group loading, and error paths.

use std::process::Command;

fn wicks() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wicks"))
}

fn stdout_json(args: &[&str]) -> serde_json::Value {
    let output = wicks().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "exit {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

#[test]
fn fg_classify_reports_witness_and_abelianization() {
    let v = stdout_json(&["fg", "classify", "--rank", "2", "abAB"]);
    assert_eq!(v["is_commutator"], true);
    assert_eq!(v["witness"]["u"], "a");
    assert_eq!(v["witness"]["v"], "b");
    assert_eq!(v["abelianization"], serde_json::json!([0, 0]));
}

#[test]
fn fg_classify_rejects_unreduced_input() {
    let output = wicks().args(["fg", "classify", "aAb"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}

#[test]
fn fg_count_classes_includes_main_term() {
    let v = stdout_json(&["fg", "count", "--length", "8", "--what", "classes"]);
    assert_eq!(v["classes"], "26");
    assert_eq!(v["wicks_words"], "168");
    assert_eq!(v["main_term"], "36");
}

#[test]
fn fp_classify_accepts_hecke_shorthand_and_indices() {
    let by_name = stdout_json(&["fp", "classify", "--hecke", "3", "s.r.s.r2"]);
    let by_index = stdout_json(&["fp", "classify", "--hecke", "3", "1:1.2:1.1:1.2:2"]);
    assert_eq!(by_name, by_index);
    assert_eq!(by_name["acceptance"]["form_id"], 3);
}

#[test]
fn fp_classify_loads_group_table_from_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z3.json");
    std::fs::write(
        &path,
        r#"{ "order": 3, "table": [[0,1,2],[1,2,0],[2,0,1]], "names": ["1","r","r2"] }"#,
    )
    .unwrap();
    let v = stdout_json(&[
        "fp",
        "classify",
        "--group1",
        "z2",
        "--group2",
        path.to_str().unwrap(),
        "g1.r.g1.r2",
    ]);
    assert_eq!(v["is_commutator"], true);
}

#[test]
fn fp_group_flags_conflict_with_hecke() {
    let output = wicks()
        .args(["fp", "classify", "--hecke", "3", "--group1", "z2", "s.r"])
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn series_csv_goes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let status = wicks()
        .args(["--format", "csv", "--out"])
        .arg(&path)
        .args(["series", "--max-k", "4"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,c_k,p_k,classes,rivin_ct,sharp_ratio"));
    assert_eq!(text.lines().last(), Some("4,8,8,2,48,1.271554"));
}

#[test]
fn verify_rejects_unknown_theorem_name() {
    let output = wicks().args(["verify", "--theorem", "nope"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("nope"));
}

#[test]
fn verify_log_appends_wall_times_but_report_has_none() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let run = || {
        wicks()
            .args(["verify", "--theorem", "Eq1", "--ks", "4", "--log"])
            .arg(&log)
            .output()
            .unwrap()
    };
    let first = run();
    assert!(first.status.success());
    let report: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert!(report["records"][0].get("wall_ms").is_none());
    let _ = run();
    let text = std::fs::read_to_string(&log).unwrap();
    let rows: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.get("wall_ms").is_some()));
}

#[test]
fn psl2_decompose_roundtrips_through_classify() {
    let d = stdout_json(&["psl2", "decompose", "19 8 7 3"]);
    assert_eq!(d["exact"], true);
    let c = stdout_json(&["psl2", "classify", "19 8 7 3"]);
    assert_eq!(c["chi"], 1);
    assert_eq!(c["in_commutator_subgroup"]["sl2"], false);
}
