use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use damisac_cli::config::RunConfig;
use damisac_cli::{run, CliError, Command};

/// Delay alignment modulation ISAC experiments.
#[derive(Debug, Parser)]
#[command(name = "damisac", version)]
struct Args {
    command: Command,
    /// TOML run configuration; omitted keys take the paper-v1 defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set scenario.num_tx_antennas=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn execute(args: &Args) -> Result<PathBuf, CliError> {
    if let Ok(v) = std::env::var("DAMISAC_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("DAMISAC_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let text = match &args.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let cfg = RunConfig::load(text.as_deref(), &args.set)?;
    let (_, manifest) = run(args.command, &cfg, args.seed, &args.out)?;
    Ok(manifest)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("damisac {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
