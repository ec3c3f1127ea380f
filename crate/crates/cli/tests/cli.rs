//! End-to-end checks of the command-line surface: exit codes, file outputs,
//! and equivalence with direct library calls.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clickrec_core::clustering::{cbc_assign, form_clusters};
use clickrec_core::correlation::correlation_matrix;
use clickrec_core::data_model::{load_dataset, LoadOptions};
use clickrec_core::recommender::{profiles_from_dataset, RecommendOptions, Recommender};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_clickrec")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

/// Two clean category groups plus enough activity for every stage.
fn fixture_csv() -> String {
    let mut lines = String::new();
    let mut timestamp = 0;
    // group A: customers 1-4 on category 100, products 11-13
    for customer in 1..=4 {
        for product in 11..=13 {
            for behavior in ["pv", "pv", "buy"] {
                lines.push_str(&format!("{customer},{product},100,{behavior},{timestamp}\n"));
                timestamp += 1;
            }
        }
    }
    // group B: customers 5-8 on category 200, products 21-23
    for customer in 5..=8 {
        for product in 21..=23 {
            for behavior in ["pv", "cart", "pv"] {
                lines.push_str(&format!("{customer},{product},200,{behavior},{timestamp}\n"));
                timestamp += 1;
            }
        }
    }
    lines
}

fn write_fixture(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    fs::write(&path, fixture_csv()).unwrap();
    path
}

#[test]
fn stats_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let output = run(dir.path(), &["stats", input.to_str().unwrap()]);
    let json = stdout_json(&output);
    assert_eq!(json["stats"]["record_count"], 72);
    assert_eq!(json["stats"]["customer_count"], 8);
    assert_eq!(json["stats"]["category_count"], 2);
    assert_eq!(json["skipped_lines"], 0);
    // resolved config is echoed
    assert_eq!(json["config"]["on_error"], "fail");
}

#[test]
fn stats_missing_file_exits_nonzero_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(dir.path(), &["stats", "no-such-file.csv"]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no-such-file.csv"), "stderr: {stderr}");
}

#[test]
fn bad_rows_give_line_numbered_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "1,2,3,pv,0\n1,2,3,click,1\n").unwrap();
    let output = run(dir.path(), &["stats", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(dir.path(), &["stats", "--no-such-flag", "x.csv"]);
    assert_eq!(output.status.code(), Some(1));
    // kmeans without --k is a configuration error
    let input = write_fixture(dir.path());
    let output = run(
        dir.path(),
        &["cluster", input.to_str().unwrap(), "-o", "c.csv", "--method", "kmeans"],
    );
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn conflicting_category_rows_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conflict.csv");
    fs::write(&path, "1,10,100,pv,0\n2,10,200,pv,1\n").unwrap();
    let output = run(dir.path(), &["stats", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn preprocess_with_vacuous_thresholds_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let output = run(
        dir.path(),
        &[
            "preprocess",
            input.to_str().unwrap(),
            "-o",
            "out.csv",
            "--phi",
            "1",
            "--tau",
            "1",
        ],
    );
    let json = stdout_json(&output);
    assert_eq!(json["before"], json["after_phase2"]);
    assert_eq!(
        fs::read_to_string(dir.path().join("out.csv")).unwrap(),
        fixture_csv()
    );
}

#[test]
fn preprocess_sidecar_agrees_with_stats_on_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let output = run(
        dir.path(),
        &[
            "preprocess",
            input.to_str().unwrap(),
            "-o",
            "filtered.csv",
            "--phi",
            "2",
            "--tau",
            "10",
        ],
    );
    let sidecar = stdout_json(&output);
    let from_file: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("filtered.csv.stats.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar, from_file);

    let before = stdout_json(&run(dir.path(), &["stats", input.to_str().unwrap()]));
    assert_eq!(sidecar["before"], before["stats"]);
    let after = stdout_json(&run(dir.path(), &["stats", "filtered.csv"]));
    assert_eq!(sidecar["after_phase2"], after["stats"]);
}

#[test]
fn cluster_cbc_respects_category_bound_and_is_seed_stable() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let output = run(
        dir.path(),
        &["cluster", input.to_str().unwrap(), "-o", "cbc.csv", "--method", "cbc"],
    );
    let summary = stdout_json(&output);
    assert!(summary["cluster_count"].as_u64().unwrap() <= 2);

    let first = fs::read_to_string(dir.path().join("cbc.csv")).unwrap();
    run(
        dir.path(),
        &["cluster", input.to_str().unwrap(), "-o", "cbc2.csv", "--method", "cbc"],
    );
    assert_eq!(first, fs::read_to_string(dir.path().join("cbc2.csv")).unwrap());
}

#[test]
fn cluster_kmeans_recovers_two_groups_and_reports_validity() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    let output = run(
        dir.path(),
        &[
            "cluster",
            input.to_str().unwrap(),
            "-o",
            "km.csv",
            "--method",
            "kmeans",
            "--k",
            "2",
            "--seed",
            "3",
        ],
    );
    let summary = stdout_json(&output);
    assert_eq!(summary["cluster_count"], 2);

    let dump = fs::read_to_string(dir.path().join("km.csv")).unwrap();
    let mut labels = std::collections::BTreeMap::new();
    for line in dump.lines() {
        let mut fields = line.split(',');
        let customer: u64 = fields.next().unwrap().parse().unwrap();
        let label: u64 = fields.next().unwrap().parse().unwrap();
        assert_eq!(fields.next(), Some("KMEANS"));
        labels.insert(customer, label);
    }
    for customer in 1..=4u64 {
        assert_eq!(labels[&customer], labels[&1]);
    }
    for customer in 5..=8u64 {
        assert_eq!(labels[&customer], labels[&5]);
    }
    assert_ne!(labels[&1], labels[&5]);
}

#[test]
fn cluster_can_dump_the_correlation_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    run(
        dir.path(),
        &[
            "cluster",
            input.to_str().unwrap(),
            "-o",
            "cbc.csv",
            "--method",
            "cbc",
            "--matrix-out",
            "matrix.csv",
        ],
    );
    let dump = fs::read_to_string(dir.path().join("matrix.csv")).unwrap();
    let train = load_dataset(std::io::Cursor::new(fixture_csv()), &LoadOptions::default())
        .unwrap()
        .dataset;
    let mut expected = Vec::new();
    correlation_matrix(&train).write_triplets(&mut expected).unwrap();
    assert_eq!(dump.as_bytes(), expected.as_slice());
    // single-category customers correlate 1.0 with their category
    assert!(dump.lines().next().unwrap().ends_with(",100,1"));
}

#[test]
fn degenerate_validity_is_a_notice_not_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    // identical profiles in each cluster: zero dispersion everywhere
    let path = dir.path().join("tight.csv");
    fs::write(
        &path,
        "1,10,100,pv,0\n2,10,100,pv,1\n3,20,200,pv,2\n4,20,200,pv,3\n",
    )
    .unwrap();
    let output = run(
        dir.path(),
        &["cluster", path.to_str().unwrap(), "-o", "t.csv", "--method", "cbc"],
    );
    let summary = stdout_json(&output);
    // zero dispersion: db is a clean 0, both dunn variants degenerate
    assert_eq!(summary["db"], 0.0);
    assert_eq!(summary["dunn"], serde_json::Value::Null);
    assert!(summary["degeneracy"].as_str().is_some());
}

#[test]
fn recommend_lines_match_library_results() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    run(
        dir.path(),
        &["cluster", input.to_str().unwrap(), "-o", "cbc.csv", "--method", "cbc"],
    );

    let active_path = dir.path().join("active.csv");
    let active_csv = "900,11,100,pv,0\n900,14,100,pv,1\n901,21,200,buy,2\n";
    fs::write(&active_path, active_csv).unwrap();

    let output = run(
        dir.path(),
        &[
            "recommend",
            "--train",
            input.to_str().unwrap(),
            "--clustering",
            "cbc.csv",
            "--active",
            active_path.to_str().unwrap(),
            "--top-k",
            "3",
            "-o",
            "rec.jsonl",
        ],
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    // library-side reference
    let train = load_dataset(
        std::io::Cursor::new(fixture_csv()),
        &LoadOptions::default(),
    )
    .unwrap()
    .dataset;
    let clustering =
        form_clusters(&cbc_assign(&correlation_matrix(&train)).unwrap(), &train).unwrap();
    let recommender = Recommender::new(&train, &clustering, RecommendOptions::default()).unwrap();
    let active = load_dataset(std::io::Cursor::new(active_csv), &LoadOptions::default())
        .unwrap()
        .dataset;
    let profiles = profiles_from_dataset(&active);
    let expected: String = recommender
        .recommend_batch(&profiles, 3)
        .unwrap()
        .iter()
        .map(|list| list.to_json_line() + "\n")
        .collect();

    let written = fs::read_to_string(dir.path().join("rec.jsonl")).unwrap();
    assert_eq!(written, expected);

    // per-line contracts
    for line in written.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value["items"].as_array().unwrap().len() <= 3);
    }
    let first: serde_json::Value = serde_json::from_str(written.lines().next().unwrap()).unwrap();
    assert_eq!(first["customer_id"], 900);
    assert_eq!(first["cluster_label"], 100);
    // product 14 is unknown to training, so only unseen trained products return
    assert!(fs::metadata(dir.path().join("rec.jsonl.meta.json")).is_ok());
}

#[test]
fn recommend_rejects_mismatched_clustering_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    fs::write(dir.path().join("alien.csv"), "999,100,CBC\n").unwrap();
    let active_path = dir.path().join("active.csv");
    fs::write(&active_path, "900,11,100,pv,0\n").unwrap();
    let output = run(
        dir.path(),
        &[
            "recommend",
            "--train",
            input.to_str().unwrap(),
            "--clustering",
            "alien.csv",
            "--active",
            active_path.to_str().unwrap(),
        ],
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn recommend_rejects_category_disagreement_between_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    run(
        dir.path(),
        &["cluster", input.to_str().unwrap(), "-o", "cbc.csv", "--method", "cbc"],
    );
    let active_path = dir.path().join("active.csv");
    // product 11 belongs to category 100 in training, not 200
    fs::write(&active_path, "900,11,200,pv,0\n").unwrap();
    let output = run(
        dir.path(),
        &[
            "recommend",
            "--train",
            input.to_str().unwrap(),
            "--clustering",
            "cbc.csv",
            "--active",
            active_path.to_str().unwrap(),
        ],
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn single_category_active_lands_in_that_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path());
    run(
        dir.path(),
        &["cluster", input.to_str().unwrap(), "-o", "cbc.csv", "--method", "cbc"],
    );
    let active_path = dir.path().join("active.csv");
    fs::write(&active_path, "77,22,200,pv,0\n77,23,200,pv,1\n").unwrap();
    let output = run(
        dir.path(),
        &[
            "recommend",
            "--train",
            input.to_str().unwrap(),
            "--clustering",
            "cbc.csv",
            "--active",
            active_path.to_str().unwrap(),
        ],
    );
    assert!(output.status.success());
    let line: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&output.stdout).lines().next().unwrap())
            .unwrap();
    assert_eq!(line["cluster_label"], 200);
}

#[test]
fn evaluate_writes_report_files_with_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let config_path = dir.path().join("exp.toml");
    fs::write(
        &config_path,
        "dataset = \"data.csv\"\nfolds = 4\nseed = 5\ntop_k = [1, 3]\n",
    )
    .unwrap();
    let output = run(
        dir.path(),
        &["evaluate", "--config", config_path.to_str().unwrap(), "-o", "out"],
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["config"]["folds"], 4);
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["recommendation"][0]["method"], "cbc");
    assert_eq!(report["recommendation"][1]["method"], "random");
    let text = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(text.contains("recommendation metrics"));

    // inline override beats the config file
    let output = run(
        dir.path(),
        &[
            "evaluate",
            "--config",
            config_path.to_str().unwrap(),
            "-o",
            "out2",
            "--seed",
            "9",
        ],
    );
    assert!(output.status.success());
    let report2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out2/report.json")).unwrap())
            .unwrap();
    assert_eq!(report2["config"]["seed"], 9);
}
