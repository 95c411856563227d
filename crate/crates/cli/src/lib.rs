//! Experiment runner behind the `damisac` binary.
//!
//! Every subcommand reads a [`config::RunConfig`], writes CSV tables and SVG
//! plots into the output directory and finishes with a `manifest.json` that
//! records the resolved configuration, seed, source revision and wall time.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use thiserror::Error;

use config::RunConfig;
use output::{FigureBundle, Manifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Core(damisac_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<damisac_core::Error> for CliError {
    fn from(e: damisac_core::Error) -> Self {
        match e {
            damisac_core::Error::Infeasible { .. } | damisac_core::Error::RecoveryFailed(_) => Self::Infeasible(e.to_string()),
            other => Self::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Core(_) | Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Af,
    Beampattern,
    DopplerCutIsr,
    Tradeoff,
    Papr,
    CompareOfdm,
    SnrBudget,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Af => "af",
            Self::Beampattern => "beampattern",
            Self::DopplerCutIsr => "doppler-cut-isr",
            Self::Tradeoff => "tradeoff",
            Self::Papr => "papr",
            Self::CompareOfdm => "compare-ofdm",
            Self::SnrBudget => "snr-budget",
        }
    }
}

/// Runs one experiment and writes its manifest. Returns the manifest path.
pub fn run(command: Command, cfg: &RunConfig, seed: u64, out: &Path) -> Result<(FigureBundle, PathBuf), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let start = Instant::now();
    let bundle = match command {
        Command::Af => experiments::run_af(cfg, seed, out),
        Command::Beampattern => experiments::run_beampattern(cfg, seed, out),
        Command::DopplerCutIsr => experiments::run_doppler_cut_isr(cfg, seed, out),
        Command::Tradeoff => experiments::run_tradeoff(cfg, seed, out),
        Command::Papr => experiments::run_papr(cfg, seed, out),
        Command::CompareOfdm => experiments::run_compare_ofdm(cfg, seed, out),
        Command::SnrBudget => experiments::run_snr_budget(cfg, seed, out),
    }?;
    let manifest = Manifest {
        command: command.name(),
        seed,
        git_describe: output::git_describe(),
        wall_time_s: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        config: cfg,
        files: bundle
            .files
            .iter()
            .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        summary: &bundle.summary,
    };
    let path = output::write_manifest(out, &manifest)?;
    Ok((bundle, path))
}
