use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fedcgm_cli::presets::{preset, PRESETS};
use fedcgm_cli::summarize::write_summary_csv;
use fedcgm_cli::{run_experiment, summarize, verify, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fedcgm", version, about = "Cost-aware federated optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file, a preset, or a preset overridden by a file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Comma-separated seeds replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        no_diagnostics: bool,
    },
    /// Run the verification oracles.
    Verify {
        /// Write the reports here (.json or .csv).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectories per statistical bound.
        #[arg(long, default_value_t = 200)]
        runs: u64,
    },
    /// Cost to reach each threshold, per algorithm and sweep value.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List presets, or print one as TOML.
    Presets { name: Option<String> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, preset: name, seeds, out, workers, no_diagnostics } => {
            let base = match &name {
                Some(n) => Some(preset(n).with_context(|| format!("unknown preset {n:?}; try `fedcgm presets`"))?),
                None => None,
            };
            let mut cfg = match (&config, base) {
                (Some(path), base) => ExperimentConfig::load(path, base.as_ref())?,
                (None, Some(b)) => b,
                (None, None) => bail!("give --config, --preset or both"),
            };
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            if no_diagnostics {
                cfg.diagnostics = false;
            }
            let summaries = run_experiment(&cfg, workers)?;
            let diverged = summaries.iter().filter(|s| s.diverged).count();
            println!("{} runs written to {} ({diverged} diverged)", summaries.len(), cfg.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { report, seed, runs } => {
            let reports = verify(report.as_deref(), seed, runs)?;
            let mut failed = 0;
            for r in &reports {
                println!("{:<4} {:<40} observed {:<12.6e} reference {:.6e}", if r.pass { "ok" } else { "FAIL" }, r.name, r.observed, r.reference);
                failed += usize::from(!r.pass);
            }
            println!("{} checks, {failed} failed", reports.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Summarize { input, thresholds, out } => {
            let rows = summarize(&input, &thresholds)?;
            match out {
                Some(p) => write_summary_csv(&rows, std::fs::File::create(&p)?)?,
                None => write_summary_csv(&rows, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name } => {
            match name {
                Some(n) => print!("{}", preset(&n).with_context(|| format!("unknown preset {n:?}"))?.to_toml_string()?),
                None => PRESETS.iter().for_each(|p| println!("{p}")),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
