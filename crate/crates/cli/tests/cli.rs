use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn vlcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlcp")).args(args).output().unwrap()
}

fn run_in(dir: &Path, sub: &str, cfg: &str, extra: &[&str]) -> Output {
    let cfg = config(cfg);
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    vlcp(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn misspelled_key_is_a_validation_error_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "simulate", "cycle_power_law.toml", &["--set", "run.hoizon=3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("run.horizon"), "{}", stderr(&out));
}

#[test]
fn invalid_values_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "[graph]\nkind = \"cycle\"\nn = 5\n[rates]\nfamily = \"power_law\"\na = 2\n[infection]\nlambda = -1\n[run]\nhorizon = 1\n",
        "[graph]\nkind = \"cycle\"\nn = 5\n[rates]\nfamily = \"power_law\"\na = 2\n[infection]\nlambda = 1\n",
        "[graph]\nkind = \"cycle\"\nn = 5\n[rates]\nfamily = \"linear\"\nalpha = 2\nbeta = 1\n[infection]\nlambda = 1\n[run]\nhorizon = 1\n",
        "[graph]\nkind = \"hypercube\"\n[rates]\nfamily = \"power_law\"\na = 2\n[infection]\nlambda = 1\n[run]\nhorizon = 1\n",
        "not toml at all [",
    ];
    for text in cases {
        let cfg = write_config(dir.path(), text);
        let out = vlcp(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "config {text:?}: {}", stderr(&out));
    }
}

#[test]
fn oracle_state_space_limit_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "oracle", "cycle_power_law.toml", &["--set", "graph.n=40", "--set", "rates.cap=2"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(vlcp(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(vlcp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vlcp(&["--help"]).status.code(), Some(0));
    assert_eq!(vlcp(&["--version"]).status.code(), Some(0));
}

#[test]
fn unresolved_sweep_exits_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "sweep",
        "sweep_torus.toml",
        &["--replicas", "20", "--set", "sweep.max_replicas=20", "--set", "sweep.bracket=[2.3,2.6]", "--set", "sweep.cp_reference=false"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(dir.path().join("sweep.json").exists());
}

#[test]
fn criteria_report_guaranteed_extinction() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "criteria", "extinction.toml", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("criteria.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["subcommand"], "criteria");
    let crit = &json["result"]["extinction_criterion"];
    assert_eq!(crit["verdict"], "guaranteed-extinction");
    assert!((crit["value"].as_f64().unwrap() - 0.8).abs() < 1e-8);
}

#[test]
fn pathwise_duality_rows_are_constant_and_headed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "duality", "duality_small.toml", &["--set", "duality.cases=40", "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("duality.csv")).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# config_hash=") && meta.ends_with(",seed=11"), "{meta}");
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "constant_flag").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.split(',').nth(col) == Some("true")));
}

#[test]
fn seed_changes_output_and_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_in(a.path(), "simulate", "cycle_power_law.toml", &["--seed", "1"]).status.success());
    assert!(run_in(b.path(), "simulate", "cycle_power_law.toml", &["--seed", "2"]).status.success());
    let ra = std::fs::read_to_string(a.path().join("simulate.csv")).unwrap();
    let rb = std::fs::read_to_string(b.path().join("simulate.csv")).unwrap();
    assert_ne!(ra.lines().next(), rb.lines().next());
    assert_ne!(ra, rb);
}
