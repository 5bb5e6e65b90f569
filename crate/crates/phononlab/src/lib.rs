//! Scenario runner for the phonon network simulator.
//!
//! Configurations are JSON documents merged over built-in device
//! defaults; results land in a directory as CSV, JSON and SVG files plus
//! a `report.json` and a `manifest.json`.

pub mod config;
pub mod error;
pub mod run;
pub mod scenarios;
pub mod svg;

pub use config::{ExperimentConfig, Scenario};
pub use error::CliError;
pub use run::{load_report, run, summary, RunReport};
