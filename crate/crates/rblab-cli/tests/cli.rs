use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rblab::rbsim::RbDataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rblab"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().next().unwrap())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn simulate_depolarizing_recovers_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("clifford1q_depolarizing.toml");
    let out = run(&["simulate", "-c", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    let dir = run_dir(&out);
    let fit = json(&dir.join("fit.json"));
    let rate = fit["rate"].as_f64().unwrap();
    assert!((rate - 0.98).abs() < 1e-3, "rate {rate}");
    assert!(dir.join("config.toml").exists());
    assert!(dir.join("dataset.meta.json").exists());
}

#[test]
fn exact_pole_extraction_reports_zero_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["extract-poles", "--family", "F2", "--n", "4", "--exact", "--output-dir", tmp.path().to_str().unwrap()]);
    let dir = run_dir(&out);
    let mut rdr = csv::Reader::from_path(dir.join("recovery.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let h: f64 = rows[0][4].parse().unwrap();
    assert!(h < 1e-12, "hausdorff {h}");
}

#[test]
fn verify_decay_on_overrotation_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("clifford1q_overrotation.toml");
    let out = run(&["verify-decay", "--strict", "-c", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let dir = run_dir(&out);
    assert_eq!(json(&dir.join("report.json"))["all_pass"], true);
    let mut rdr = csv::Reader::from_path(dir.join("bound.csv")).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        let res: f64 = r[3].parse().unwrap();
        let bound: f64 = r[4].parse().unwrap();
        assert!(res <= bound);
    }
}

#[test]
fn strict_mode_flags_violated_hypothesis() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[noise]\nmodel = \"overrotation\"\ntheta = 0.6\n[protocol]\nkind = \"uniform\"\nlengths = [5, 10, 20]\n",
    );
    let args = ["verify-decay", "-c", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()];
    assert_eq!(run(&args).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(run(&strict).status.code(), Some(3));
}

#[test]
fn schema_errors_exit_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 1\n[noise]\nmodel = \"depolarizing\"\nprob = 0.1\n");
    let out = run(&["simulate", "-c", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("prob"), "{err}");
    assert!(err.contains("line"), "{err}");

    let cfg = write_config(tmp.path(), "[noise]\nmodel = \"depolarizing\"\np = 2.0\n");
    let out = run(&["simulate", "-c", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise.p"));
}

#[test]
fn run_directories_are_never_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let rd = tmp.path().join("fixed");
    let cfg = bundled("xeb2q.toml");
    let args = ["xeb", "-c", cfg.to_str().unwrap(), "--samples", "200", "--run-dir", rd.to_str().unwrap()];
    assert!(run(&args).status.success());
    let second = run(&args);
    assert!(!second.status.success());
    assert!(String::from_utf8_lossy(&second.stderr).contains("not empty"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("clifford1q_depolarizing.toml");
    let mut files = Vec::new();
    for t in ["1", "4"] {
        let rd = tmp.path().join(format!("t{t}"));
        let out = run(&["--threads", t, "simulate", "-c", cfg.to_str().unwrap(), "--run-dir", rd.to_str().unwrap()]);
        run_dir(&out);
        files.push(std::fs::read(rd.join("dataset.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let filt = bundled("pauli1q_filtered.toml");
    let mut files = Vec::new();
    for t in ["1", "3"] {
        let rd = tmp.path().join(format!("f{t}"));
        let out = bin()
            .env("RBLAB_THREADS", t)
            .args(["filter", "-c", filt.to_str().unwrap(), "--samples", "2000", "--run-dir", rd.to_str().unwrap()])
            .output()
            .unwrap();
        run_dir(&out);
        files.push(std::fs::read(rd.join("filtered.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn dataset_round_trips_and_feeds_pole_extraction() {
    let tmp = tempfile::tempdir().unwrap();
    let lengths: Vec<String> = (0..=40).map(|m| m.to_string()).collect();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "seed = 4\n[noise]\nmodel = \"depolarizing\"\np = 0.03\n[protocol]\nkind = \"uniform\"\nlengths = [{}]\nshots = 0\nsequences = 20\n",
            lengths.join(", ")
        ),
    );
    let out = run(&["simulate", "-c", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    let dir = run_dir(&out);
    let csv_path = dir.join("dataset.csv");
    let data = RbDataset::read(&csv_path, &dir.join("dataset.json")).unwrap();
    let rewritten = tmp.path().join("again.csv");
    data.write_csv(&rewritten).unwrap();
    assert_eq!(std::fs::read(&csv_path).unwrap(), std::fs::read(&rewritten).unwrap());

    // Exact per-sequence probabilities with the inverting gate follow A f^m + B exactly.
    let out = run(&[
        "extract-poles",
        "--input",
        csv_path.to_str().unwrap(),
        "--n",
        "2",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let pd = run_dir(&out);
    let mut rdr = csv::Reader::from_path(pd.join("poles.csv")).unwrap();
    let re: Vec<f64> = rdr.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
    assert!(re.iter().any(|&z| (z - 1.0).abs() < 1e-8), "{re:?}");
    assert!(re.iter().any(|&z| (z - 0.97).abs() < 1e-8), "{re:?}");
}

#[test]
fn gauge_report_scans_counterexample() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("counterexample.toml");
    let out = run(&["gauge-report", "-c", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    let dir = run_dir(&out);
    let mut rdr = csv::Reader::from_path(dir.join("cp_scan.csv")).unwrap();
    let mut seen = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        let (alpha, gamma): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        if gamma == 0.0 && alpha < 1.0 {
            let phi: f64 = r[2].parse().unwrap();
            let noise: f64 = r[3].parse().unwrap();
            assert!(phi >= -1e-9 && noise < -1e-6);
            seen += 1;
        }
    }
    assert_eq!(seen, 9);
    assert!(json(&dir.join("gauge.json"))["gauge_error"].is_string());
}

#[test]
fn leak_report_and_conditioning_study() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = bundled("leak.toml");
    let out = run(&["gauge-report", "-c", cfg.to_str().unwrap(), "--samples", "200", "--output-dir", tmp.path().to_str().unwrap()]);
    let dir = run_dir(&out);
    let leak = json(&dir.join("leak.json"));
    assert!(leak["avg_fidelity"].as_f64().unwrap() >= leak["reference_level"].as_f64().unwrap());
    assert!(leak["nonexponentiality"].as_f64().unwrap() > 0.05);

    let out = run(&[
        "conditioning-study",
        "--family",
        "lin(0.9)",
        "--n",
        "2",
        "--study-shots",
        "100000",
        "--trials",
        "5",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let dir = run_dir(&out);
    assert!(dir.join("conditioning.csv").exists());
    assert!(dir.join("study_summary.meta.json").exists());
}
