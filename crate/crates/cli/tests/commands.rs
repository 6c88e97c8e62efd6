use std::path::Path;
use std::process::{Command, Output};

fn dosestrat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosestrat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    p(dir, name)
}

fn synth(dir: &Path, n: usize) -> String {
    let config = write(dir, "synth.json", &format!(r#"{{"n_patients": {n}}}"#));
    let out = p(dir, "cohort.csv");
    let r = dosestrat(&["synth", "--config", &config, "--seed", "3", "--out", &out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

#[test]
fn synth_is_deterministic_and_formats_follow_extension() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 40);
    let b = p(dir.path(), "again.csv");
    let json = p(dir.path(), "cohort.json");
    let config = p(dir.path(), "synth.json");
    for out in [&b, &json] {
        assert!(dosestrat(&["synth", "--config", &config, "--seed", "3", "--out", out]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["patients"].as_array().unwrap().len(), 40);
}

#[test]
fn search_on_the_49_candidate_fixture_writes_49_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), 120);
    let spec = write(dir.path(), "spec.json", r#"{"organs": ["Parotid_Ipsi", "Parotid_Contra"]}"#);
    let out = p(dir.path(), "effects.csv");
    let r = dosestrat(&["search", "--cohort", &cohort, "--spec", &spec, "--confounders", "smoker", "--out", &out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 50);
    assert!(text.lines().next().unwrap().starts_with("kind,organ,"));
}

#[test]
fn cluster_lrt_and_rules_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), 90);
    let spec = write(dir.path(), "spec.json", r#"{"organs": ["Parotid_Ipsi", "Tongue"], "window": {"lo": 30, "hi": 55}}"#);
    let params = write(dir.path(), "params.json", r#"{"k": 3, "method": "kmeans", "seed": 2}"#);
    let common = ["--cohort", cohort.as_str(), "--spec", spec.as_str(), "--params", params.as_str()];
    let model = p(dir.path(), "model.json");
    let r = dosestrat(&[&["cluster"][..], &common, &["--out", &model]].concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(doc["assignments"].as_array().unwrap().len(), 90);

    let lrt = p(dir.path(), "lrt.csv");
    let r = dosestrat(&[&["lrt"][..], &common, &["--thresholds", "3,4", "--out", &lrt]].concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(std::fs::read_to_string(&lrt).unwrap().lines().count(), 1 + 2 * 3);

    let r = dosestrat(&[&["rules"][..], &common, &["--target", "cluster:2"]].concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(doc["target"], "cluster:2");
}

#[test]
fn exit_codes_and_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), 30);
    let out = p(dir.path(), "model.json");

    let bad = write(dir.path(), "bad.json", r#"{"organs": ["Spleen"]}"#);
    let r = dosestrat(&["cluster", "--cohort", &cohort, "--spec", &bad, "--out", &out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("Spleen"));

    let typo = write(dir.path(), "typo.json", r#"{"kay": 3}"#);
    let r = dosestrat(&["cluster", "--cohort", &cohort, "--params", &typo, "--out", &out]);
    assert_eq!(r.status.code(), Some(2));

    let huge = write(dir.path(), "huge.json", r#"{"k": 40, "method": "kmeans"}"#);
    let r = dosestrat(&["cluster", "--cohort", &cohort, "--params", &huge, "--out", &out]);
    assert_eq!(r.status.code(), Some(3));

    let r = dosestrat(&["cluster", "--cohort", &p(dir.path(), "missing.csv"), "--out", &out]);
    assert_eq!(r.status.code(), Some(4));
    let r = dosestrat(&["cluster", "--cohort", &cohort, "--out", &p(dir.path(), "no/such/dir/model.json")]);
    assert_eq!(r.status.code(), Some(4));

    assert!(!Path::new(&out).exists());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");

    let r = dosestrat(&["search", "--cohort", &cohort, "--metric", "t"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn repro_acceptance_runs_selected_criteria() {
    let r = dosestrat(&["repro-acceptance", "--only", "3,5,8"]);
    assert!(r.status.success());
    let text = String::from_utf8_lossy(&r.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("criterion")).count(), 3);
    assert!(text.contains("3 passed, 0 failed"));
}
