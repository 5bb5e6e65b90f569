//! Running a configuration end to end and reading the results back.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Scenario, Severity};
use crate::error::CliError;
use crate::scenarios::{run_scenario, Artifact, Metric};
use crate::svg::{line_plot, Series};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
/// Wall-clock time lives apart from the report so the report stays
/// byte-identical between runs.
pub const TIMING: &str = "timing.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub metrics: Vec<Metric>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub variable: String,
    pub points: Vec<SweepPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub config: ExperimentConfig,
    pub metrics: Vec<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOutcome>,
    /// Files written next to the report.
    pub files: Vec<String>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.key == key).map(|m| m.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub report: String,
    pub files: Vec<String>,
}

/// Worker count from `PHONONLAB_WORKERS`, else the machine's parallelism.
pub fn worker_count() -> Result<usize, CliError> {
    match std::env::var("PHONONLAB_WORKERS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Schema(format!("PHONONLAB_WORKERS must be a positive integer, got `{s}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

type Computed = (Vec<Metric>, Option<SweepOutcome>, Vec<Artifact>);

fn compute(cfg: &ExperimentConfig) -> Result<Computed, CliError> {
    let scenario = cfg.scenario()?;
    match (&cfg.sweep, scenario) {
        (Some(sweep), s) if s != Scenario::FreqMap => {
            let values = sweep.values();
            let points = values
                .par_iter()
                .enumerate()
                .map(|(index, &value)| {
                    let point = cfg.with_value(&sweep.variable, value)?;
                    let out = run_scenario(&point, false, cfg.seed.wrapping_add(index as u64))?;
                    Ok(SweepPoint { index, value, metrics: out.metrics })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let artifacts = sweep_artifacts(&sweep.variable, &points);
            Ok((Vec::new(), Some(SweepOutcome { variable: sweep.variable.clone(), points }), artifacts))
        }
        _ => {
            let out = run_scenario(cfg, true, cfg.seed)?;
            Ok((out.metrics, None, out.artifacts))
        }
    }
}

fn sweep_artifacts(variable: &str, points: &[SweepPoint]) -> Vec<Artifact> {
    let keys: Vec<&str> = points.first().map(|p| p.metrics.iter().map(|m| m.key.as_str()).collect()).unwrap_or_default();
    let mut csv = format!("index,{variable},{}\n", keys.join(","));
    for p in points {
        let vals: Vec<String> = p.metrics.iter().map(|m| m.value.to_string()).collect();
        let _ = writeln!(csv, "{},{},{}", p.index, p.value, vals.join(","));
    }
    let mut files = vec![Artifact { name: "sweep.csv".into(), contents: csv }];
    if let Some(first) = keys.first() {
        let pts = points.iter().map(|p| (p.value, p.metrics[0].value)).collect();
        files.push(Artifact {
            name: "sweep.svg".into(),
            contents: line_plot(&format!("{first} vs {variable}"), variable, first, &[Series { label: first, points: pts }]),
        });
    }
    files
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(CliError::io(path))
}

/// Validates, runs on a bounded pool and writes every output into `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunReport, CliError> {
    let errors: Vec<String> =
        cfg.diagnostics().into_iter().filter(|d| d.severity == Severity::Error).map(|d| d.to_string()).collect();
    if !errors.is_empty() {
        return Err(CliError::Schema(errors.join("\n")));
    }
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count()?)
        .build()
        .map_err(|e| CliError::Filesystem(format!("cannot start worker pool: {e}")))?;
    let (metrics, sweep, artifacts) = pool.install(|| compute(cfg))?;
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut files: Vec<String> = artifacts.iter().map(|a| a.name.clone()).collect();
    for a in &artifacts {
        write(dir, &a.name, &a.contents)?;
    }
    files.push(REPORT.into());
    files.push(TIMING.into());
    let mut report = RunReport {
        schema_version: cfg.schema_version,
        scenario: cfg.scenario.clone(),
        config: cfg.clone(),
        metrics,
        sweep,
        files: files.clone(),
        wall_clock_s: 0.0,
    };
    write(dir, REPORT, &to_json(&report))?;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    write(dir, TIMING, &to_json(&serde_json::json!({ "wall_clock_s": report.wall_clock_s })))?;
    files.push(MANIFEST.into());
    write(dir, MANIFEST, &to_json(&Manifest { report: REPORT.into(), files }))?;
    Ok(report)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialise");
    s.push('\n');
    s
}

pub fn load_report(dir: &Path) -> Result<RunReport, CliError> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath)
        .map_err(|_| CliError::Filesystem(format!("{MANIFEST} not found in {}", dir.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Filesystem(format!("{} is not a manifest: {e}", mpath.display())))?;
    for f in &manifest.files {
        if !dir.join(f).is_file() {
            return Err(CliError::Filesystem(format!("{MANIFEST} lists {f}, which is missing")));
        }
    }
    let rpath = dir.join(&manifest.report);
    let text = fs::read_to_string(&rpath).map_err(CliError::io(&rpath))?;
    serde_json::from_str(&text).map_err(|e| CliError::Filesystem(format!("{} is unreadable: {e}", rpath.display())))
}

/// Condensed metric table of a finished run.
pub fn summary(report: &RunReport) -> String {
    let mut s = format!("scenario  {}\n", report.scenario);
    let width = report.metrics.iter().map(|m| m.key.len()).max().unwrap_or(0);
    for m in &report.metrics {
        let _ = writeln!(s, "{:<width$}  {:>14.6}  {}", m.key, m.value, m.definition);
    }
    if let Some(sw) = &report.sweep {
        let keys: Vec<&str> =
            sw.points.first().map(|p| p.metrics.iter().map(|m| m.key.as_str()).collect()).unwrap_or_default();
        let _ = writeln!(s, "sweep over {} ({} points)", sw.variable, sw.points.len());
        let _ = writeln!(s, "{:>5}  {:>12}  {}", "index", "value", keys.join("  "));
        for p in &sw.points {
            let vals: Vec<String> = p.metrics.iter().map(|m| format!("{:.6}", m.value)).collect();
            let _ = writeln!(s, "{:>5}  {:>12.6}  {}", p.index, p.value, vals.join("  "));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_names_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let e = load_report(dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains(MANIFEST));
    }

    #[test]
    fn invalid_configs_do_not_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { scenario: "nope".into(), ..Default::default() };
        assert_eq!(run(&cfg, dir.path()).unwrap_err().exit_code(), 2);
        assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
    }

    #[test]
    fn summary_lists_every_metric() {
        let report = RunReport {
            schema_version: 1,
            scenario: "bell".into(),
            config: ExperimentConfig::default(),
            metrics: vec![
                Metric { key: "fidelity".into(), value: 0.73, definition: "d".into() },
                Metric { key: "t_m_ns".into(), value: 750.0, definition: "d".into() },
            ],
            sweep: None,
            files: vec![],
            wall_clock_s: 0.0,
        };
        let s = summary(&report);
        assert!(s.contains("fidelity") && s.contains("0.730000") && s.contains("t_m_ns"));
    }
}
