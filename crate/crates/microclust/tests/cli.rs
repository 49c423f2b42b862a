use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microclust"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn names_fixture_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["names", "--fixture", "--t-grid", "0.005,0.01"]);
    let report = json(&dir.path().join("names_report.json"));
    assert!(report["expected_proportion_correct"].is_f64());
    assert_eq!(report["hoeffding_bounds"].as_array().unwrap().len(), 2);
    assert_eq!(report["total_records"], 100_000);
    let groups = csv_rows(&dir.path().join("names_groups.csv"));
    let total: u64 = groups
        .iter()
        .map(|r| r[0].parse::<u64>().unwrap() * r[1].parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 100_000);
    assert!(dir.path().join("names_manifest.json").exists());
}

#[test]
fn names_reads_user_tables() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.tsv");
    let last = dir.path().join("last.tsv");
    std::fs::write(&first, "A\t0.5\nB\t0.3\n").unwrap();
    std::fs::write(&last, "X\t0.6\nY\t0.4\n").unwrap();
    ok(
        dir.path(),
        &[
            "names",
            "--first",
            first.to_str().unwrap(),
            "--last",
            last.to_str().unwrap(),
            "--delimiter",
            "\t",
            "--no-header",
            "--name-column",
            "0",
            "--value-column",
            "1",
            "--first-kind",
            "proportions",
            "--last-kind",
            "proportions",
            "--population",
            "1000",
        ],
    );
    let report = json(&dir.path().join("names_report.json"));
    assert_eq!(report["total_records"], 1000);
}

#[test]
fn names_missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["names", "--first", "/missing/first.csv", "--last", "/missing/last.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/missing/first.csv"));
}

#[test]
fn names_bad_row_is_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    std::fs::write(&first, "name,count\nA,3\nB,three\n").unwrap();
    let out = run(
        dir.path(),
        &[
            "names",
            "--first",
            first.to_str().unwrap(),
            "--last",
            first.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("first.csv"), "{err}");
}

#[test]
fn assign_sim_rows_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--seed", "7", "assign-sim", "--n", "5000", "--c-grid", "0.1:2:0.1", "--replicates", "50",
    ];
    let mut one = vec!["--jobs", "1"];
    one.extend(args);
    let mut three = vec!["--jobs", "3"];
    three.extend(args);
    ok(a.path(), &one);
    ok(b.path(), &three);
    let x = std::fs::read(a.path().join("assign_sim.csv")).unwrap();
    let y = std::fs::read(b.path().join("assign_sim.csv")).unwrap();
    assert_eq!(x, y);
    let rows = csv_rows(&a.path().join("assign_sim.csv"));
    assert_eq!(rows.len(), 20);
    let header = csv::Reader::from_path(a.path().join("assign_sim.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["c", "N", "replicates", "prop_correct", "prop_se", "zero_correct_freq", "theory"]
    );
}

#[test]
fn scale_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["assign-sim", "--n", "100", "--c-grid", "1", "--replicates", "2", "--scale", "sigma-squared"],
    );
    let m = json(&dir.path().join("assign_sim_manifest.json"));
    assert_eq!(m["config"]["scale"], "sigma-squared");
    assert_eq!(m["subcommand"], "assign-sim");
    assert!(m["started_at"].is_string() && m["finished_at"].is_string());
}

#[test]
fn invalid_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["assign-sim", "--c-grid", "2:1:0.1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn manifest_config_replays_bit_exactly() {
    let first = tempfile::tempdir().unwrap();
    ok(
        first.path(),
        &["--seed", "3", "assign-sim", "--n", "300", "--c-grid", "0.2,0.7", "--replicates", "4"],
    );
    let m = json(&first.path().join("assign_sim_manifest.json"));
    let mut doc = toml::Table::new();
    doc.insert("seed".into(), toml::Value::Integer(m["seed"].as_i64().unwrap()));
    let section: toml::Value = serde_json::from_value(m["config"].clone()).unwrap();
    doc.insert("assign_sim".into(), section);
    let second = tempfile::tempdir().unwrap();
    let config = second.path().join("replay.toml");
    std::fs::write(&config, toml::to_string(&doc).unwrap()).unwrap();
    ok(second.path(), &["--config", config.to_str().unwrap(), "assign-sim"]);
    assert_eq!(
        std::fs::read(first.path().join("assign_sim.csv")).unwrap(),
        std::fs::read(second.path().join("assign_sim.csv")).unwrap()
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(
        &config,
        "seed = 5\n[assign_sim]\nn = 200\nc_grid = [0.5, 1.0, 1.5]\nreplicates = 3\n",
    )
    .unwrap();
    ok(dir.path(), &["--config", config.to_str().unwrap(), "assign-sim", "--n", "150"]);
    let rows = csv_rows(&dir.path().join("assign_sim.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == "150" && r[2] == "3"));
    assert_eq!(json(&dir.path().join("assign_sim_manifest.json"))["seed"], 5);

    std::fs::write(&config, "[assign_sim]\nbogus = 1\n").unwrap();
    let out = run(dir.path(), &["--config", config.to_str().unwrap(), "assign-sim"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bayes_sim_groups_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["bayes-sim", "--n", "100", "--c-grid", "0.1,0.25,0.5,1,2", "--sweeps", "20", "--burn-in", "5"],
    );
    let rows = csv_rows(&dir.path().join("bayes_sim.csv"));
    assert_eq!(rows.len(), 5 * 20);
    let mut cs: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    cs.dedup();
    assert_eq!(cs, ["0.1", "0.25", "0.5", "1", "2"]);
    for r in &rows {
        let l0: u64 = r[2].parse().unwrap();
        assert!(l0 % 2 == 0 && l0 <= 9900);
    }
    let out = run(dir.path(), &["bayes-sim", "--sweeps", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dim_sim_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["dim-sim", "--n", "64", "--p-grid", "1,3", "--sigma-grid", "0.01,10", "--replicates", "5"],
    );
    let rows = csv_rows(&dir.path().join("dim_sim.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[2][3], (1.0f64 / 3.0).to_string());
}

#[test]
fn popest_target_failures_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "popest-sim", "--k", "400", "--t", "3", "--target-n0-frac", "0.25", "--c-grid", "0.1,2",
            "--replicates", "6",
        ],
    );
    let m = json(&dir.path().join("popest_sim_manifest.json"));
    let b = m["config"]["b"].as_f64().unwrap();
    assert!((b - 1.702_414_383_919_315).abs() < 1e-9);
    assert_eq!(m["config"]["target_n0_frac"], 0.25);
    let summary = json(&dir.path().join("popest_summary.json"));
    let summary = summary.as_array().unwrap();
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|s| s["coverage"].is_f64()));
    assert_eq!(csv_rows(&dir.path().join("popest_sim.csv")).len(), 12);

    ok(
        dir.path(),
        &["popest-sim", "--k", "400", "--c-grid", "0.5", "--replicates", "4", "--max-iter", "1"],
    );
    let rows = csv_rows(&dir.path().join("popest_sim.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[3] == "NA" && r[5] == "NaN"));
    let summary = json(&dir.path().join("popest_summary.json"));
    assert_eq!(summary[0]["failed"], 4);
}

#[test]
fn theory_queries() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["theory", "--derange", "--nm", "11"]);
    let t = json(&dir.path().join("theory.json"));
    assert!(t["derangements"][0]["gap"].as_f64().unwrap() < 0.001);
    assert_eq!(t["derangements"][0]["exact"], "1");

    ok(
        dir.path(),
        &["theory", "--infeasibility", "--ell", "1", "--sigma", "0.4", "--n", "1000", "--t", "0.05"],
    );
    let t = json(&dir.path().join("theory.json"));
    assert!(t["infeasibility"]["concentration_bound"].is_f64());
    assert!(t["infeasibility"]["zero_correct_limit"].is_f64());

    ok(dir.path(), &["theory", "--chisq", "--p", "10", "--delta", "1", "--sigma", "0.1"]);
    let t = json(&dir.path().join("theory.json"));
    for key in ["lower", "upper"] {
        let v = t["chi_square"][key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    let out = run(dir.path(), &["theory"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["theory", "--chisq", "--p", "0", "--delta", "1", "--sigma", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
}
