mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::data_path;

fn fairdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairdiff")).args(args).output().expect("binary runs")
}

fn compas(extra: &[&str]) -> Output {
    let data = data_path("compas-scores-two-years.csv");
    let cfg = data_path("compas_fpr.toml");
    let mut args = vec!["audit", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    fairdiff(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn audit_writes_report_and_exits_zero() {
    let o = compas(&[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("# metric = fpr\n"));
    assert!(out.contains("\nnode_id\tpredicate\t"));
    assert!(out.contains("\tOverall\t"));
}

#[test]
fn formats_are_selectable() {
    let json = stdout(&compas(&["--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["metric"], "fpr");
    let dot = stdout(&compas(&["--format", "dot"]));
    assert!(dot.starts_with("digraph"));
    let text = stdout(&compas(&["--format", "text"]));
    assert!(text.contains("Overall"));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tree.json");
    let o = compas(&["--alpha", "0.05", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["params"]["alpha"], 0.05);
}

#[test]
fn metrics_subcommand_prints_both_models() {
    let data = data_path("compas-scores-two-years.csv");
    let o = fairdiff(&[
        "metrics",
        "--data",
        data.to_str().unwrap(),
        "--model-a",
        "decile_score>5",
        "--model-b",
        "priors_count>2",
        "--outcome",
        "two_year_recid=1",
        "--sensitive",
        "race:Caucasian,African-American",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("decile_score") && out.contains("priors_count"), "{out}");
    assert!(out.contains("disagreement"));
}

#[test]
fn validation_errors_exit_two() {
    let data = data_path("compas-scores-two-years.csv");
    let d = data.to_str().unwrap();
    // missing --metric without a config
    let o = fairdiff(&["audit", "--data", d, "--model-a", "decile_score:5", "--model-b", "priors_count:2", "--sensitive", "race:Caucasian,African-American"]);
    assert_eq!(o.status.code(), Some(2));
    // FPR without an outcome
    let o = fairdiff(&[
        "audit", "--data", d, "--metric", "fpr", "--model-a", "decile_score:5", "--model-b", "priors_count:2",
        "--sensitive", "race:Caucasian,African-American",
    ]);
    assert_eq!(o.status.code(), Some(2));
    // unknown column
    let o = compas(&["--split-vars", "shoe_size"]);
    assert_eq!(o.status.code(), Some(2));
    // unknown sensitive level
    let o = compas(&["--sensitive", "race:Caucasian,Martian"]);
    assert_eq!(o.status.code(), Some(2));
    // out-of-range alpha
    let o = compas(&["--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    // missing file
    let o = fairdiff(&["audit", "--data", "/nonexistent.csv", "--config", data_path("compas_fpr.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn degenerate_root_exits_three_after_writing_output() {
    let dir = tempfile::tempdir().unwrap();
    // the models never disagree among true negatives
    let mut csv = String::from("y,m1,m2,g,x\n");
    for i in 0..40 {
        csv.push_str(&format!("0,{b},{b},{g},{x}\n", b = i % 3 == 0, g = ["w", "b"][i % 2], x = ["p", "q"][i % 4 / 2]));
    }
    let csv = csv.replace("true", "1").replace("false", "0");
    let data = write(dir.path(), "d.csv", &csv);
    let o = fairdiff(&[
        "audit", "--data", &data, "--metric", "fpr", "--outcome", "y=1", "--model-a", "m1", "--model-b", "m2",
        "--sensitive", "g:w,b", "--split-vars", "x",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("Overall"));
}

#[test]
fn bare_sensitive_column_audits_every_pair() {
    let data = data_path("compas-scores-two-years.csv");
    let o = fairdiff(&[
        "audit", "--data", data.to_str().unwrap(), "--metric", "accept", "--model-a", "decile_score>5",
        "--model-b", "priors_count>2", "--sensitive", "sex", "--split-vars", "age_cat", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // two sexes: a single pair, written as a one-element array
    assert_eq!(v.as_array().map(Vec::len), Some(1));
}

#[test]
fn simulated_tables_feed_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("sim.tsv");
    let scenario = data_path("planted_two_cell.toml");
    let o = fairdiff(&["simulate", "--config", scenario.to_str().unwrap(), "--seed", "11", "--out", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let body = std::fs::read_to_string(&table).unwrap();
    assert!(body.starts_with("# rng = ChaCha8"));
    assert!(body.contains("# seed = 11\n"));

    let cfg = write(
        dir.path(),
        "audit.toml",
        r#"
metric = "fpr"
outcome = { column = "y", positive = "1" }
model_a = { column = "m1" }
model_b = { column = "m2" }
sensitive = { column = "group", levels = ["a1", "a2"] }
split = [{ name = "x" }, { name = "z" }, { name = "age", kind = "numeric" }]
input = { delimiter = "\t" }
[tree]
alpha = 0.01
"#,
    );
    let o = fairdiff(&["audit", "--data", table.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("x in {u}"), "{out}");

    // same seed, same bytes
    let again = fairdiff(&["simulate", "--config", scenario.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(stdout(&again), body);
}

#[test]
fn calibration_mode_prints_rates() {
    let o = fairdiff(&["simulate", "--config", data_path("null_k3.toml").to_str().unwrap(), "--replications", "20", "--n", "300"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let row = out.lines().find(|l| l.starts_with("x\t")).expect("calibration row");
    let fields: Vec<&str> = row.split('\t').collect();
    assert_eq!(fields[1], "20");
    let rate: f64 = fields[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&rate));
}
