use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phononlab::config::{parse_value, set_path, CarrierName, ExperimentConfig, Scenario, Severity, SweepSpec};
use phononlab::{load_report, run, summary, CliError};

#[derive(Parser)]
#[command(name = "phononlab", version, about = "Simulate phonon-mediated state transfer between two qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named scenario and write its outputs.
    Run {
        /// transfer, bell, freq-map, interferometer, ramsey-probe,
        /// loss-characterization or process-tomo
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set channel.alpha_np_per_m=0
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long, value_parser = ["uni", "bi"])]
        carrier: Option<String>,
    },
    /// Check a config file and list problems.
    Validate { file: PathBuf },
    /// Print the metrics of a finished run.
    Report { dir: PathBuf },
    /// Print the default configuration.
    Defaults,
}

fn read_config(path: Option<&PathBuf>) -> Result<serde_json::Value, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(CliError::io(p))?;
            ExperimentConfig::tree_from_json(&text)
        }
        None => Ok(ExperimentConfig::default().to_tree()),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, config, set, out, seed, shots, carrier } => {
            let mut tree = read_config(config.as_ref())?;
            // freq-map always sweeps, so --set sweep.* edits its default grid
            if scenario == Scenario::FreqMap.name() && tree["sweep"].is_null() {
                tree["sweep"] = serde_json::to_value(SweepSpec::freq_map_default()).expect("sweep serialises");
            }
            set_path(&mut tree, "scenario", scenario.into())?;
            for item in &set {
                let (key, value) = item
                    .split_once('=')
                    .ok_or_else(|| CliError::Schema(format!("--set expects KEY=VALUE, got `{item}`")))?;
                set_path(&mut tree, key.trim(), parse_value(value.trim()))?;
            }
            let mut cfg = ExperimentConfig::from_tree(tree)?;
            cfg.scenario()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = shots {
                cfg.shots = n;
            }
            if let Some(c) = carrier {
                cfg.carrier = if c == "bi" { CarrierName::Bi } else { CarrierName::Uni };
            }
            if let Some(o) = out {
                cfg.output_dir = o.to_string_lossy().into_owned();
            }
            for d in cfg.diagnostics().iter().filter(|d| d.severity == Severity::Warning) {
                eprintln!("{d}");
            }
            let dir = PathBuf::from(&cfg.output_dir);
            let report = run(&cfg, &dir)?;
            print!("{}", summary(&report));
            println!("wrote {} files to {} in {:.2} s", report.files.len() + 1, dir.display(), report.wall_clock_s);
            Ok(())
        }
        Command::Validate { file } => {
            let text = fs::read_to_string(&file).map_err(CliError::io(&file))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let diags = cfg.diagnostics();
            for d in &diags {
                println!("{d}");
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                return Err(CliError::Schema(format!("{} is invalid", file.display())));
            }
            if diags.is_empty() {
                println!("{}: ok", file.display());
            }
            Ok(())
        }
        Command::Report { dir } => {
            print!("{}", summary(&load_report(&dir)?));
            Ok(())
        }
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().to_json_pretty());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
