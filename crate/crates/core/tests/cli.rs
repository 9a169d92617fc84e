//! End-to-end tests of the `gfee` binary; text formats are pinned by golden
//! files under tests/golden (regenerate with GFEE_BLESS=1).

use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn data(name: &str) -> String {
    root().join("tests/data").join(name).to_string_lossy().into_owned()
}

fn gfee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfee")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden(name: &str, actual: &str) {
    let actual = actual.replace(gfee::experiments::CODE_VERSION, "<code-version>");
    let path = root().join("tests/golden").join(name);
    if std::env::var_os("GFEE_BLESS").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

fn tiny_inputs() -> Vec<String> {
    vec![
        "--graphs".into(),
        data("tiny_g1.txt"),
        data("tiny_g2.txt"),
        "--labels".into(),
        data("tiny_labels.txt"),
    ]
}

#[test]
fn embed_csv_golden() {
    let inputs = tiny_inputs();
    let o = gfee(&cmd("embed", &inputs, &[]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stderr(&o).trim(), "n=5 M=2 K=2 dims=4");
    golden("embed_tiny.csv", &stdout(&o));
}

fn cmd<'a>(sub: &'a str, inputs: &'a [String], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![sub];
    v.extend(inputs.iter().map(String::as_str));
    v.extend_from_slice(extra);
    v
}

#[test]
fn embed_bin_has_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z.bin");
    let inputs = tiny_inputs();
    let o = gfee(&cmd("embed", &inputs, &["--format", "bin", "--out", out.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "n=5 M=2 K=2 dims=4");
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(&bytes[..8], &[5, 0, 0, 0, 4, 0, 0, 0]);
    assert_eq!(bytes.len(), 8 + 5 * 4 * 8);
    let z = gfee::encoder::read_matrix_bin(&bytes[..]).unwrap();
    assert_eq!(z.dim(), (5, 4));
}

#[test]
fn missing_label_file_exits_2() {
    let o = gfee(&["embed", "--graphs", &data("tiny_g1.txt"), "--labels", "/nonexistent/labels.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("labels"));
}

#[test]
fn validation_failure_exits_2_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("y.txt");
    std::fs::write(&labels, "1\n1\n2\n").unwrap();
    // tiny graphs reference vertex 5 but only 3 labels exist
    let o = gfee(&["embed", "--graphs", &data("tiny_g1.txt"), "--labels", labels.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("out of range") || stderr(&o).contains("outside"), "{}", stderr(&o));
}

#[test]
fn evaluate_is_deterministic_with_seed() {
    let args = ["evaluate", "--manifest", &data("phone.json"), "--folds", "5", "--replicates", "2", "--seed", "7"];
    let a = gfee(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = gfee(&args);
    assert_eq!(stdout(&a), stdout(&b));
    golden("evaluate_phone.json", &stdout(&a));
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["method"], "gfee");
    assert_eq!(v["graphs"], serde_json::json!([1, 2]));
    assert_eq!(v["per_fold"].as_array().unwrap().len(), 2);
}

#[test]
fn evaluate_without_seed_prints_one() {
    let o = gfee(&["evaluate", "--manifest", &data("phone.json"), "--replicates", "1", "--folds", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stderr(&o).lines().find(|l| l.starts_with("seed: ")).map(str::to_string).expect("seed printed");
    let seed: u64 = line["seed: ".len()..].parse().unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["seed"], seed);
}

#[test]
fn folds_below_two_is_a_usage_error() {
    let o = gfee(&["evaluate", "--manifest", &data("phone.json"), "--folds", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fused_subset_not_worse_than_single() {
    let run = |subset: &str| {
        let o = gfee(&["evaluate", "--manifest", &data("wiki.json"), "--folds", "5", "--replicates", "5", "--seed", "3", "--subset", subset, "--format", "csv"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        let row = text.lines().nth(1).unwrap().to_string();
        row.split(',').nth(3).unwrap().parse::<f64>().unwrap()
    };
    let single = run("3");
    let fused = run("1,2,3");
    assert!(fused <= single, "fused {fused} single {single}");
}

#[test]
fn evaluate_spectral_reports_best_d() {
    let o = gfee(&["evaluate", "--manifest", &data("imdb.json"), "--method", "use", "--dmax", "4", "--replicates", "1", "--folds", "3", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let d = v["best_d"].as_u64().unwrap();
    assert!((1..=4).contains(&d));
}

#[test]
fn simulate_golden_and_reproducible() {
    let args = ["simulate", "--sim", "sim1", "--n-grid", "150,300", "--replicates", "2", "--folds", "5", "--seed", "3", "--no-timing"];
    let a = gfee(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&gfee(&args)));
    golden("simulate_sim1.csv", &stdout(&a));
}

#[test]
fn simulate_with_timing_and_gnuplot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let plot = dir.path().join("t.dat");
    let o = gfee(&[
        "simulate", "--sim", "sim2", "--n-grid", "120", "--replicates", "1", "--folds", "3", "--seed", "1",
        "--out", out.to_str().unwrap(), "--gnuplot", plot.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.lines().next().unwrap().ends_with(",wall_ms"));
    assert_eq!(table.lines().count(), 4);
    let gp = std::fs::read_to_string(&plot).unwrap();
    assert_eq!(gp.matches("# method=gfee").count(), 3);
}

#[test]
fn dmax_with_gfee_warns() {
    let o = gfee(&["simulate", "--sim", "sim1", "--n-grid", "100", "--replicates", "1", "--folds", "3", "--seed", "1", "--method", "gfee", "--dmax", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("--dmax has no effect"));
}

#[test]
fn unknown_method_or_sim_is_a_usage_error() {
    assert_eq!(gfee(&["simulate", "--sim", "sim1", "--method", "pca"]).status.code(), Some(2));
    assert_eq!(gfee(&["baseline", "--sim", "sim9"]).status.code(), Some(2));
}

#[test]
fn baseline_table_lists_every_method() {
    let o = gfee(&["baseline", "--sim", "sim3", "--n-grid", "200", "--replicates", "1", "--folds", "3", "--seed", "2", "--dmax", "3", "--no-timing"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 6 * 4);
    for m in ["gfee", "omnibus", "mase", "use"] {
        assert_eq!(text.lines().filter(|l| l.split(',').nth(2) == Some(m)).count(), 6);
    }
}

#[test]
fn verify_reports_all_three_checks() {
    let spec_dir = tempfile::tempdir().unwrap();
    let spec = spec_dir.path().join("pair.json");
    std::fs::write(
        &spec,
        r#"{"K": 2, "priors": [0.5, 0.5], "blocks": [[[0.1, 0.1], [0.1, 0.1]]]}"#,
    )
    .unwrap();
    let o = gfee(&["verify", "--spec", spec.to_str().unwrap(), "--n-grid", "100,200", "--replicates", "2", "--folds", "3", "--seed", "4", "--format", "text"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("identifiable: false"));
    assert!(text.contains("oracle error floor: 0.5000"));
    assert!(text.contains("convergence"));
    let o = gfee(&["verify", "--sim", "sim1", "--n-grid", "100", "--replicates", "1", "--folds", "3", "--seed", "4"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["identifiable"], true);
    assert_eq!(v["subsets"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn jobs_flag_is_accepted() {
    let inputs = tiny_inputs();
    let mut args = vec!["--jobs", "1"];
    args.extend(cmd("embed", &inputs, &[]));
    let o = gfee(&args);
    assert!(o.status.success(), "{}", stderr(&o));
}

