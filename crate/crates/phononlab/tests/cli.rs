use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phononlab::config::{ExperimentConfig, Scenario};
use serde_json::Value;

fn phononlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phononlab")).args(args).env("PHONONLAB_WORKERS", "2").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn metric(report: &Value, key: &str) -> f64 {
    report["metrics"].as_array().unwrap().iter().find(|m| m["key"] == key).unwrap()["value"].as_f64().unwrap()
}

fn shipped_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json").to_string_lossy().into_owned()
}

#[test]
fn shipped_config_is_the_default_and_validates_clean() {
    let text = fs::read_to_string(shipped_config()).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), ExperimentConfig::default());
    let o = phononlab(&["validate", &shipped_config()]);
    assert!(o.status.success());
    assert!(stdout(&o).trim_end().ends_with(": ok"), "{}", stdout(&o));
    let d = phononlab(&["defaults"]);
    assert_eq!(stdout(&d), text);
}

#[test]
fn validate_warns_when_t2_exceeds_twice_t1() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.node1.uni.t2_ramsey_us = 3.0 * cfg.node1.uni.t1_us;
    let path = dir.path().join("c.json");
    fs::write(&path, cfg.to_json_pretty()).unwrap();
    let o = phononlab(&["validate", path.to_str().unwrap()]);
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 1, "{lines:?}");
    assert!(lines[0].contains("T2 <= 2*T1"));
    assert!(!dir.path().join("phononlab-out").exists());
}

#[test]
fn schema_errors_exit_2() {
    let o = phononlab(&["run", "teleport"]);
    assert_eq!(o.status.code(), Some(2));
    for s in Scenario::ALL {
        assert!(stderr(&o).contains(s.name()), "{}", stderr(&o));
    }
    let o = phononlab(&["run", "transfer", "--set", "channel.loss=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("channel.loss"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"schema_version": 1, "channel": {"length_mm": -2}}"#).unwrap();
    assert_eq!(phononlab(&["validate", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn engine_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = phononlab(&[
        "run",
        "transfer",
        "--set",
        "numerics.dt_ns=4.9",
        "--set",
        "coupler.kappa_c_uni_mhz=60",
        "--set",
        "coupler.kappa_max_mhz=200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("retry with dt"));
}

#[test]
fn filesystem_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = phononlab(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("manifest.json"));
    let missing = dir.path().join("nope.json");
    assert_eq!(phononlab(&["validate", missing.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn transfer_run_writes_a_readable_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = phononlab(&["run", "transfer", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert!((metric(&r, "final_pe_q2") - 0.68).abs() < 0.03);
    assert_eq!(r["config"], serde_json::to_value(ExperimentConfig { output_dir: out.to_str().unwrap().into(), ..Default::default() }).unwrap());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for f in manifest["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t_ns,Pe_Q1,Pe_Q2,field_energy"));
    let rep = phononlab(&["report", out.to_str().unwrap()]);
    assert!(rep.status.success());
    assert!(stdout(&rep).contains("final_pe_q2"));
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = phononlab(&["run", "bell", "--shots", "2000", "--seed", "17", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["trajectory.csv", "rho.json", "rho_sampled.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // the report echoes the output directory, so compare everything else
    let (mut ra, mut rb) = (report(&a), report(&b));
    ra["config"]["output_dir"] = Value::Null;
    rb["config"]["output_dir"] = Value::Null;
    assert_eq!(ra, rb);
    let c = dir.path().join("c");
    let o = phononlab(&["run", "bell", "--shots", "2000", "--seed", "18", "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("rho_sampled.json")).unwrap(), fs::read(c.join("rho_sampled.json")).unwrap());
}

#[test]
fn narrowed_freq_map_finds_revivals_inside_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fm");
    let o = phononlab(&[
        "run",
        "freq-map",
        "--set",
        "sweep.start=3.80",
        "--set",
        "sweep.stop=4.00",
        "--set",
        "sweep.steps=3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(metric(&r, "revival_points"), 2.0);
    assert!((metric(&r, "revival_band_low_ghz") - 3.9).abs() < 1e-9);
    let summary = fs::read_to_string(out.join("freq_map_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn parameter_sweeps_write_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let o = phononlab(&[
        "run",
        "loss-characterization",
        "--set",
        "sweep.variable=channel.alpha_np_per_m",
        "--set",
        "sweep.start=50",
        "--set",
        "sweep.stop=200",
        "--set",
        "sweep.steps=3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("index,channel.alpha_np_per_m,"));
    let r = report(&out);
    let pts = r["sweep"]["points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    let alpha: Vec<f64> = pts
        .iter()
        .map(|p| p["metrics"].as_array().unwrap().iter().find(|m| m["key"] == "alpha_np_per_m").unwrap()["value"].as_f64().unwrap())
        .collect();
    for (got, want) in alpha.iter().zip([50.0, 125.0, 200.0]) {
        assert!((got - want).abs() < 0.02 * want, "{alpha:?}");
    }
}

#[test]
fn worker_count_must_be_positive() {
    let o = Command::new(env!("CARGO_BIN_EXE_phononlab"))
        .args(["run", "transfer", "--out", "/nonexistent/never"])
        .env("PHONONLAB_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("PHONONLAB_WORKERS"));
}
