//! Experiment orchestration for `fedcgm`: TOML configs, presets, a parallel runner,
//! threshold summaries and the verification report.

pub mod config;
pub mod presets;
pub mod runner;
pub mod summarize;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use fedcgm_core::verification::{run_suite, write_reports_csv, OracleReport};

pub use config::ExperimentConfig;
pub use runner::{run_experiment, RunSummary};
pub use summarize::{summarize, SummaryRow};

/// Runs the verification suite and writes it to `report` (JSON when the extension
/// is `.json`, CSV otherwise).
pub fn verify(report: Option<&Path>, seed: u64, runs: u64) -> anyhow::Result<Vec<OracleReport>> {
    let reports = run_suite(seed, runs)?;
    if let Some(path) = report {
        let f = BufWriter::new(File::create(path)?);
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::to_writer_pretty(f, &reports)?;
        } else {
            write_reports_csv(&reports, f)?;
        }
    }
    Ok(reports)
}
