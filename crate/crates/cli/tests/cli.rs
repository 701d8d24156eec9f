use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn acqsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acqsim"))
        .args(args)
        .env_remove("ACQSIM_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = acqsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// A small synthetic corpus written through `ingest --synthetic`.
    fn new(n_texts: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let spec = root.join("spec.json");
        fs::write(&spec, format!(r#"{{"n_texts": {n_texts}}}"#)).unwrap();
        ok(&[
            "ingest",
            "--synthetic",
            "--config",
            p(&spec),
            "--seed",
            "4",
            "--out",
            p(&root.join("corpus")),
        ]);
        let config = root.join("config.json");
        fs::write(
            &config,
            r#"{"n_folds": 5, "train_fold_counts": [1, 3], "thresholds": [0.1, 0.25],
                "train": {"epochs": 15},
                "grid": {"texts": [5, 10, 20], "annotations": [20, 60, 100], "n_folds": 3}}"#,
        )
        .unwrap();
        Fixture { _dir: dir, root }
    }

    fn corpus_args(&self) -> Vec<String> {
        let c = self.root.join("corpus");
        vec![
            "--annotations".into(),
            p(&c.join("annotations.csv")).into(),
            "--texts".into(),
            p(&c.join("texts.csv")).into(),
            "--schema".into(),
            p(&c.join("schema.json")).into(),
        ]
    }

    fn scenario(&self, name: &str, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.root.join(out);
        let mut args: Vec<String> = vec!["scenario".into(), "--name".into(), name.into()];
        args.extend(self.corpus_args());
        args.extend(
            [
                "--config",
                p(&self.root.join("config.json")),
                "--out",
                p(&out),
            ]
            .map(String::from),
        );
        args.extend(extra.iter().map(|s| s.to_string()));
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        out
    }
}

fn stderr_line(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error ")).collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    lines[0].to_string()
}

#[test]
fn profile_prints_json_only() {
    let f = Fixture::new(30);
    let mut args = vec!["profile".to_string()];
    args.extend(f.corpus_args());
    let out = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_texts"], 30);
    assert_eq!(v["n_tasks"], 5);
}

#[test]
fn scenario_reruns_are_byte_identical() {
    let f = Fixture::new(60);
    let a = f.scenario("threshold_sweep", "a", &["--seed", "7"]);
    let b = f.scenario("threshold_sweep", "b", &["--seed", "7"]);
    let metrics = |d: &Path| fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(metrics(&a), metrics(&b));
    let c = f.scenario("threshold_sweep", "c", &["--seed", "8"]);
    assert_ne!(metrics(&a), metrics(&c));
}

#[test]
fn jobs_do_not_change_results() {
    let f = Fixture::new(60);
    for name in ["incremental", "diversity_grid"] {
        let one = f.scenario(name, &format!("{name}1"), &["--seed", "3", "--jobs", "1"]);
        let eight = f.scenario(name, &format!("{name}8"), &["--seed", "3", "--jobs", "8"]);
        assert_eq!(
            fs::read(one.join("metrics.csv")).unwrap(),
            fs::read(eight.join("metrics.csv")).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn diversity_grid_marks_infeasible_cells() {
    let f = Fixture::new(60);
    let out = f.scenario("diversity_grid", "grid", &["--seed", "1"]);
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    let rows: Vec<Vec<&str>> = grid.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["annotations", "5", "10", "20"]);
    // 8 annotators per text: 5 texts hold 40 pairs, so a budget of 100 is out of reach.
    assert_eq!(rows[3][0], "100");
    assert_eq!(rows[3][1], "--");
    assert_ne!(rows[1][1], "--");
    assert_ne!(rows[3][3], "--");
}

#[test]
fn manifest_describes_the_run() {
    let f = Fixture::new(30);
    let out = f.scenario("plain_cv", "cv", &["--seed", "11", "--threshold", "0.2"]);
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let config = fs::read(out.join("config.json")).unwrap();
    assert_eq!(m["config_hash"], acqsim::scenarios::sha256_hex(&config));
    assert_eq!(m["seed"], 11);
    assert_eq!(m["setting_sources"]["threshold"], "flag");
    assert_eq!(m["setting_sources"]["n_folds"], "file");
    assert_eq!(m["setting_sources"]["alpha"], "default");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 4);
    assert!(m["finished_at"].is_string());
    let effective: serde_json::Value = serde_json::from_slice(&config).unwrap();
    assert_eq!(effective["threshold"], 0.2);
}

#[test]
fn simulate_writes_plan_and_cost() {
    let f = Fixture::new(40);
    let cand = f.root.join("cand");
    ok(&["ingest", "--synthetic", "--seed", "9", "--out", p(&cand)]);
    for file in ["annotations.csv", "texts.csv"] {
        let text = fs::read_to_string(cand.join(file)).unwrap();
        let renamed: String = text
            .lines()
            .map(|l| l.strip_prefix('d').map(|r| format!("c{r}")).unwrap_or(l.to_string()) + "\n")
            .collect();
        fs::write(cand.join(file), renamed).unwrap();
    }
    let out = f.root.join("sim");
    let mut args: Vec<String> = vec!["simulate".into()];
    args.extend(f.corpus_args());
    args.extend(
        [
            "--candidate-annotations",
            p(&cand.join("annotations.csv")),
            "--candidate-texts",
            p(&cand.join("texts.csv")),
            "--config",
            p(&f.root.join("config.json")),
            "--price",
            "0.5",
            "--out",
            p(&out),
        ]
        .map(String::from),
    );
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let plan = fs::read_to_string(out.join("plan.csv")).unwrap();
    assert_eq!(plan.lines().count(), 1 + 200 * 5);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let sim = &report["simulation"];
    assert_eq!(sim["cost"]["price_per_label"], 0.5);
    let (aer, aal, mb) = (
        sim["report"]["aer"].as_f64().unwrap(),
        sim["report"]["aal"].as_f64().unwrap(),
        sim["report"]["mb"].as_f64().unwrap(),
    );
    assert!((mb - (aer - aal)).abs() <= 1e-12);
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let out = acqsim(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error class=UsageError"));
    let out = acqsim(&["scenario", "--name", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_3() {
    let f = Fixture::new(20);
    let bad = f.root.join("bad.csv");
    fs::write(&bad, "text_id,annotator_id,task,value\nd00000,u1,task0,notanumber\n").unwrap();
    let c = f.root.join("corpus");
    let out = acqsim(&[
        "profile",
        "--annotations",
        p(&bad),
        "--texts",
        p(&c.join("texts.csv")),
        "--schema",
        p(&c.join("schema.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let line = stderr_line(&out);
    assert!(line.contains("class=DataError kind=MalformedRow"), "{line}");
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_config_exits_4() {
    let f = Fixture::new(20);
    fs::write(f.root.join("config.json"), r#"{"n_folds": 1}"#).unwrap();
    let mut args: Vec<String> = vec!["scenario".into(), "--name".into(), "plain_cv".into()];
    args.extend(f.corpus_args());
    args.extend(["--config", p(&f.root.join("config.json")), "--out", p(&f.root.join("o"))].map(String::from));
    let out = acqsim(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_line(&out).contains("class=ConfigError kind=InvalidConfig"));

    let mut args: Vec<String> = vec!["vtl".into()];
    args.extend(f.corpus_args());
    args.extend(["--threshold", "1.5"].map(String::from));
    let out = acqsim(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn report_reexports_metrics() {
    let f = Fixture::new(30);
    let out = f.scenario("plain_cv", "cv", &[]);
    let printed = ok(&["report", p(&out)]).stdout;
    assert_eq!(printed, fs::read(out.join("metrics.csv")).unwrap());
}

#[test]
fn imported_predictions_drive_scenarios() {
    let f = Fixture::new(30);
    let c = f.root.join("corpus");
    // Every cell predicted valuable: nothing is skipped, nothing is lost.
    let texts = fs::read_to_string(c.join("texts.csv")).unwrap();
    let mut pred = String::from("text_id,task,bit\n");
    for line in texts.lines().skip(1) {
        let id = line.split(',').next().unwrap();
        for l in 0..5 {
            pred.push_str(&format!("{id},task{l},1\n"));
        }
    }
    let pred_path = f.root.join("pred.csv");
    fs::write(&pred_path, pred).unwrap();
    let out = f.scenario("plain_cv", "imp", &["--predictions", p(&pred_path)]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let mean = &report["variants"][0]["mean"];
    assert_eq!(mean["aer"], 0.0);
    assert_eq!(mean["aal"], 0.0);
}
