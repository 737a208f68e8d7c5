use std::path::{Path, PathBuf};
use std::process::Command;

use clickstat::numeric::binomial_pmf;
use clickstat::{
    click_distribution_with_crosstalk, sample_aup, ClickDistribution, DetectorConfig, PeakShape, PhotonSource,
};
use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_clickstat"));
    cmd.env_remove("CLICKSTAT_SEED");
    cmd
}

/// Runs the binary and returns (exit code, stderr).
fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn ok(args: &[&str]) {
    let (code, err) = run(args);
    assert_eq!(code, 0, "{args:?}: {err}");
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn table(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn assert_valid(report: &Path, schema: &str) {
    let schema: Value = json(&schema_dir().join(format!("{schema}.schema.json")));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance = json(report);
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", report.display());
}

fn out_dir(dir: &tempfile::TempDir) -> String {
    dir.path().to_str().unwrap().to_string()
}

#[test]
fn model_vacuum_has_no_clicks() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "model",
        "--state",
        "coherent",
        "--mean-photons",
        "0",
        "--pixels",
        "100",
        "--out-dir",
        &out_dir(&d),
    ]);
    let rows = table(&d.path().join("clicks.csv"));
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0], vec![0.0, 1.0]);
    let report = json(&d.path().join("model.json"));
    assert!(report["q_binomial"].is_null());
    assert_valid(&d.path().join("model.json"), "model");
}

#[test]
fn model_with_crosstalk_matches_library() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "model",
        "--state",
        "coherent",
        "--mean-photons",
        "100",
        "--pixels",
        "100",
        "--chi",
        "0.0025",
        "--out-dir",
        &out_dir(&d),
    ]);
    let det = DetectorConfig::ideal(100).with_crosstalk(0.0025);
    let exact = click_distribution_with_crosstalk(&PhotonSource::coherent(100.0), &det).unwrap();
    let rows = table(&d.path().join("clicks.csv"));
    for (row, p) in rows.iter().zip(exact.probs()) {
        assert_eq!(row[1], *p);
    }
    assert!(json(&d.path().join("model.json"))["q_binomial"].as_f64().unwrap() > 0.0);
}

#[test]
fn model_single_photon_is_maximally_nonclassical() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "model",
        "--state",
        "fock",
        "--n",
        "1",
        "--pixels",
        "100",
        "--eta",
        "1",
        "--out-dir",
        &out_dir(&d),
    ]);
    let q = json(&d.path().join("model.json"))["q_binomial"].as_f64().unwrap();
    assert!((q + 1.0).abs() < 1e-12, "{q}");
}

#[test]
fn invalid_parameters_exit_with_one_line() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec![
            "model",
            "--state",
            "coherent",
            "--mean-photons",
            "-1",
            "--pixels",
            "100",
        ],
        vec![
            "model",
            "--state",
            "coherent",
            "--mean-photons",
            "1",
            "--pixels",
            "100",
            "--eta",
            "1.5",
        ],
        vec!["model", "--state", "fock", "--mean-photons", "1", "--pixels", "100"],
        vec!["model", "--pixels", "100"],
        vec![
            "simulate",
            "--state",
            "coherent",
            "--mean-photons",
            "1",
            "--pixels",
            "10",
            "--trials",
            "0",
        ],
    ] {
        let mut args = args.clone();
        let dir = out_dir(&d);
        args.extend(["--out-dir", &dir]);
        let (code, err) = run(&args);
        assert_eq!(code, 2, "{args:?}: {err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("clickstat: error:"), "{err}");
    }
}

#[test]
fn simulate_is_reproducible_and_valid() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(&[
            "simulate",
            "--state",
            "thermal",
            "--mean-photons",
            "20",
            "--pixels",
            "50",
            "--chi",
            "0.01",
            "--trials",
            "50000",
            "--seed",
            "7",
            "--areas",
            "--out-dir",
            &out_dir(d),
        ]);
    }
    for f in ["histogram.csv", "simulation.json", "areas.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_valid(&a.path().join("simulation.json"), "simulation");
}

#[test]
fn seed_defaults_to_environment() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let args = |d: &tempfile::TempDir| {
        vec![
            "simulate".to_string(),
            "--state".into(),
            "coherent".into(),
            "--mean-photons".into(),
            "5".into(),
            "--pixels".into(),
            "20".into(),
            "--trials".into(),
            "20000".into(),
            "--out-dir".into(),
            out_dir(d),
        ]
    };
    assert!(bin()
        .args(args(&a))
        .env("CLICKSTAT_SEED", "99")
        .status()
        .unwrap()
        .success());
    assert!(bin().args(args(&b)).arg("--seed").arg("99").status().unwrap().success());
    assert!(bin().args(args(&c)).status().unwrap().success());
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("histogram.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn config_file_supplies_flags_and_yields_to_command_line() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "# detector\npixels = 10\nstate = coherent\nmean_photons = 4\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "model", "--out-dir", &out_dir(&d)]);
    assert_eq!(json(&d.path().join("model.json"))["detector"]["n_pixels"], 10);
    ok(&["--config", cfg, "model", "--pixels", "30", "--out-dir", &out_dir(&d)]);
    assert_eq!(json(&d.path().join("model.json"))["detector"]["n_pixels"], 30);
    let (code, _) = run(&["--config", "/nonexistent.cfg", "model"]);
    assert_eq!(code, 4);
}

fn write_areas(path: &Path, areas: &[f64], header: bool) {
    let mut text = if header { String::from("area\n") } else { String::new() };
    for a in areas {
        text.push_str(&format!("{a}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn fit_recovers_binomial_clicks() {
    let d = tempfile::tempdir().unwrap();
    let truth = ClickDistribution::new(binomial_pmf(100, 0.3)).unwrap();
    let shape = PeakShape::from_ratios(100.0, 0.0, 0.18, 0.0037);
    let input = d.path().join("areas.csv");
    write_areas(&input, &sample_aup(&truth, &shape, 100_000, 3).unwrap(), true);
    ok(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--pixels",
        "100",
        "--resamples",
        "200",
        "--out-dir",
        &out_dir(&d),
    ]);
    let rows = table(&d.path().join("clicks.csv"));
    for (row, p) in rows.iter().zip(truth.probs()) {
        assert!((row[1] - p).abs() <= 0.01, "k {}: {} vs {p}", row[0], row[1]);
    }
    assert_valid(&d.path().join("fit.json"), "fit");
    assert_valid(&d.path().join("q_report.json"), "q_report");
}

#[test]
fn fit_of_empty_peak_is_all_zero_clicks() {
    let d = tempfile::tempdir().unwrap();
    let shape = PeakShape::from_ratios(100.0, 0.0, 0.18, 0.0037);
    let areas = sample_aup(&ClickDistribution::delta(0, 100).unwrap(), &shape, 20_000, 4).unwrap();
    let input = d.path().join("areas.csv");
    write_areas(&input, &areas, false);
    ok(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--pixels",
        "100",
        "--delta-x",
        "100",
        "--out-dir",
        &out_dir(&d),
    ]);
    let rows = table(&d.path().join("clicks.csv"));
    assert!(rows[0][1] > 0.999, "{}", rows[0][1]);
}

#[test]
fn fit_input_errors() {
    let d = tempfile::tempdir().unwrap();
    let empty = d.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let (code, err) = run(&[
        "fit",
        "--input",
        empty.to_str().unwrap(),
        "--pixels",
        "10",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert_eq!(code, 2, "{err}");
    let bad = d.path().join("bad.csv");
    std::fs::write(&bad, "area\n1.0\n2.0\noops\n").unwrap();
    let (code, err) = run(&[
        "fit",
        "--input",
        bad.to_str().unwrap(),
        "--pixels",
        "10",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains(":4:"), "{err}");
    let flat = d.path().join("flat.csv");
    // a smooth logistic hump carries no periodic structure
    let hump: Vec<f64> = (0..5000)
        .map(|i| {
            let u = (i as f64 + 0.5) / 5000.0;
            2500.0 + 300.0 * (u / (1.0 - u)).ln()
        })
        .collect();
    write_areas(&flat, &hump, false);
    let (code, err) = run(&[
        "fit",
        "--input",
        flat.to_str().unwrap(),
        "--pixels",
        "10",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("--delta-x"), "{err}");
}

#[test]
fn calibrate_from_q_values() {
    let d = tempfile::tempdir().unwrap();
    let report = d.path().join("crosstalk.json");
    ok(&[
        "calibrate-crosstalk",
        "--q",
        "0",
        "--pixels",
        "100",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert_eq!(json(&report)["chi"], 0.0);
    assert_valid(&report, "crosstalk");

    let (code, err) = run(&[
        "calibrate-crosstalk",
        "--q",
        "-0.02",
        "--pixels",
        "100",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert_eq!(code, 0);
    assert!(err.contains("warning"));
    assert_eq!(json(&report)["negative_q"], true);
    assert_eq!(json(&report)["chi"], 0.0);

    // Q_B cannot exceed N - 1, so 10 lies beyond the bracket for ten pixels
    let (code, err) = run(&[
        "calibrate-crosstalk",
        "--q",
        "10",
        "--pixels",
        "10",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("bracket"), "{err}");
}

#[test]
fn calibrate_from_simulated_histogram() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--state",
        "coherent",
        "--mean-photons",
        "0.1",
        "--pixels",
        "100",
        "--chi",
        "0.01",
        "--trials",
        "1000000",
        "--seed",
        "5",
        "--out-dir",
        &out_dir(&d),
    ]);
    let hist = d.path().join("histogram.csv");
    ok(&[
        "calibrate-crosstalk",
        "--histogram",
        hist.to_str().unwrap(),
        "--pixels",
        "100",
        "--resamples",
        "300",
        "--out-dir",
        &out_dir(&d),
    ]);
    let report = json(&d.path().join("crosstalk.json"));
    let (chi, se) = (report["chi"].as_f64().unwrap(), report["chi_stderr"].as_f64().unwrap());
    assert!((chi - 0.01).abs() < 4.0 * se, "{chi} +- {se}");
}

#[test]
fn qscan_columns() {
    let d = tempfile::tempdir().unwrap();
    ok(&["qscan", "--pixels", "100", "--points", "30", "--out-dir", &out_dir(&d)]);
    for row in table(&d.path().join("qscan.csv")) {
        assert!(row[1].abs() < 1e-12, "{row:?}");
        assert!((row[2] - row[3]).abs() < 1e-12, "{row:?}");
        assert!((row[3] - (-row[0]).exp_m1()).abs() < 1e-15);
    }
    ok(&[
        "qscan",
        "--pixels",
        "100",
        "--chi",
        "0.0025",
        "--points",
        "30",
        "--out-dir",
        &out_dir(&d),
    ]);
    let rows = table(&d.path().join("qscan.csv"));
    assert!(rows.iter().all(|r| r[1] > 0.0));
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
}

#[test]
fn invert_reports_negative_probabilities() {
    let d = tempfile::tempdir().unwrap();
    let report = d.path().join("inversion.json");
    ok(&[
        "invert",
        "--pixels",
        "100",
        "--state",
        "coherent",
        "--mean-photons",
        "150",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert!(json(&report)["min"].as_f64().unwrap() < -1e-3);
    assert_valid(&report, "inversion");
    ok(&[
        "invert",
        "--pixels",
        "100",
        "--state",
        "coherent",
        "--mean-photons",
        "5",
        "--out-dir",
        &out_dir(&d),
    ]);
    assert!(json(&report)["min"].as_f64().unwrap() >= -1e-6);
    assert_eq!(
        json(&report)["has_negative"].as_bool(),
        Some(json(&report)["min"].as_f64().unwrap() < 0.0)
    );
}

#[test]
fn missing_input_file_is_an_io_error() {
    let (code, err) = run(&["fit", "--input", "/nonexistent/areas.csv", "--pixels", "10"]);
    assert_eq!(code, 4, "{err}");
}

#[test]
fn library_entry_point_matches_binary() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |d: &tempfile::TempDir| {
        vec![
            "clickstat".to_string(),
            "--threads".into(),
            "2".into(),
            "simulate".into(),
            "--state".into(),
            "fock".into(),
            "--n".into(),
            "30".into(),
            "--pixels".into(),
            "40".into(),
            "--trials".into(),
            "30000".into(),
            "--seed".into(),
            "3".into(),
            "--out-dir".into(),
            out_dir(d),
        ]
    };
    clickstat_cli::run(args(&a)).unwrap();
    assert!(bin().args(&args(&b)[1..]).status().unwrap().success());
    assert_eq!(
        std::fs::read(a.path().join("simulation.json")).unwrap(),
        std::fs::read(b.path().join("simulation.json")).unwrap()
    );
}
