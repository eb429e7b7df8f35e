//! End-to-end runs of the binary: exit codes, outputs and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-chain"))
        .args(args)
        .env_remove("LATENT_CHAIN_SEED")
        .env_remove("LATENT_CHAIN_GENDER_DATA")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["fit"])), 1);
    assert_eq!(code(&run(&["fit", "--config", "/nonexistent/config.json"])), 1);
    assert_eq!(code(&run(&["frobnicate", "--config", "x"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"data": "x.csv", "schema": "x.json", "mdoel": {}}"#).unwrap();
    let o = run(&["fit", "--config", p(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mdoel"), "{}", stderr(&o));
}

#[test]
fn fit_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let o = run(&["fit", "--config", p(&config("bif_main.json")), "--seed", "7", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["degrees_of_freedom"], 30);
    assert_eq!(v["free_parameters"], 22);
    assert_eq!(v["provenance"]["seed"], 7);
    assert!(v["provenance"]["config_hash"].as_str().unwrap().len() == 64);
    assert!((v["log_likelihood"].as_f64().unwrap() + 4967.2764).abs() < 1e-3);
    assert_eq!(v["reliability"][0]["decomposition"]["rule"], "exact-path");
    assert_eq!(v["reliability"][0]["alternative"]["rule"], "constancy-cross-tab");
}

#[test]
fn seed_falls_back_to_the_environment() {
    let run_with = |seed: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_latent-chain"))
            .args(["simulate", "--config", p(&config("simulate_table3.json"))])
            .env("LATENT_CHAIN_SEED", seed)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        o.stdout
    };
    assert_eq!(run_with("5"), run_with("5"));
    assert_ne!(run_with("5"), run_with("6"));
    let explicit = run(&["simulate", "--config", p(&config("simulate_table3.json")), "--seed", "5"]);
    assert_eq!(explicit.stdout, run_with("5"));
    let bad = Command::new(env!("CARGO_BIN_EXE_latent-chain"))
        .args(["simulate", "--config", p(&config("simulate_table3.json"))])
        .env("LATENT_CHAIN_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 1);
}

#[test]
fn non_convergence_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.json");
    let data = root().join("data");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"data": "{}", "schema": "{}",
                "model": {{"classes": 3, "constraints": ["tie-rho-over-time", "tie-delta-rho-over-groups"]}},
                "fit": {{"starts": 2, "max_iterations": 3}}}}"#,
            p(&data.join("bif.csv")),
            p(&data.join("bif.schema.json"))
        ),
    )
    .unwrap();
    let o = run(&["fit", "--config", p(&cfg), "--out", p(&dir.path().join("o.json"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn simulate_emits_a_table_with_the_requested_sizes() {
    let o = run(&["simulate", "--config", p(&config("simulate_table3.json")), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let mut totals = std::collections::BTreeMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *totals.entry(f[0].to_string()).or_insert(0u64) += f[4].parse::<u64>().unwrap();
    }
    assert_eq!(totals["doctoral"], 1474);
    assert_eq!(totals["post-doctoral"], 480);
}

#[test]
fn single_replicate_bootstrap_has_a_coarse_p_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b1.json");
    let data = root().join("data");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"data": "{}", "schema": "{}",
                "model": {{"classes": 3, "constraints": ["tie-rho-over-time", "tie-delta-rho-over-groups"]}},
                "fit": {{"starts": 4}},
                "bootstrap": {{"replicates": 1}}}}"#,
            p(&data.join("bif.csv")),
            p(&data.join("bif.schema.json"))
        ),
    )
    .unwrap();
    let out = dir.path().join("b.json");
    let o = run(&["bootstrap", "--config", p(&cfg), "--seed", "11", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let pv = v["bootstrap"]["p_value"].as_f64().unwrap();
    assert!(pv == 0.5 || pv == 1.0, "{pv}");
    assert_eq!(v["bootstrap"]["B"], 1);
}

#[test]
fn compare_detects_nesting_and_rejects_unrelated_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.json");
    // General model first; the order is detected.
    let o = run(&[
        "compare",
        "--config",
        p(&config("bif_gender_doctoral_m2.json")),
        "--config",
        p(&config("bif_gender_doctoral_m1.json")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["comparison"]["delta_df"], 8);
    assert_eq!(v["restricted"]["degrees_of_freedom"], 39);
    assert_eq!(v["general"]["degrees_of_freedom"], 31);

    let same = run(&["compare", "--config", p(&config("bif_main.json")), "--config", p(&config("bif_main.json"))]);
    assert_eq!(code(&same), 0);
    let v: Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(v["comparison"]["delta_lr"], 0.0);
    assert!(v["comparison"]["warning"].is_string());

    // Stationary τ and manifest ρ restrict different blocks.
    let o = run(&["compare", "--config", p(&config("bif_stationary.json")), "--config", p(&config("bif_manifest.json"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("not nested"));
}

#[test]
fn replicate_reports_the_known_boundary_cell_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let o = run(&["replicate", "--out", p(&a)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("table3b.doctoral.tau12.3.1.boundary"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let failed: Vec<&str> = v["failed"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert_eq!(failed, ["table3b.doctoral.tau12.3.1.boundary"]);
    let skipped = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "skipped")
        .count();
    assert!(skipped > 0);

    let o = run(&["replicate", "--out", p(&b)]);
    assert_eq!(code(&o), 3);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn replicate_names_tampered_cells() {
    let dir = tempfile::tempdir().unwrap();
    let data = root().join("data");
    let original = std::fs::read_to_string(data.join("bif.csv")).unwrap();
    let tampered = original.replacen("doctoral,1,1,1,143", "doctoral,1,1,1,150", 1);
    assert_ne!(original, tampered);
    let csv = dir.path().join("bif.csv");
    std::fs::write(&csv, tampered).unwrap();
    let cfg = dir.path().join("replicate.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"data": "{}", "schema": "{}", "fit": {{"starts": 8}}}}"#,
            p(&csv),
            p(&data.join("bif.schema.json"))
        ),
    )
    .unwrap();
    let o = run(&["replicate", "--config", p(&cfg), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("table1.doctoral.1,1,1"), "{err}");
    assert!(err.contains("table1.doctoral.total"), "{err}");
}
