use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use statrom::cli::{self, Command, ExperimentConfig, RawConfig};
use statrom::Error;

/// Statistical FEM with reduced-order priors: experiment harness.
#[derive(Debug, Parser)]
#[command(name = "statrom", version)]
struct Args {
    /// converge-rom | sweep | statrom-converge | scatter2d | gen-data | plot
    #[arg(value_parser = parse_command)]
    command: Command,
    /// Experiment file (`key = value` lines, optional `[section]` headers).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Further `--key value` pairs overriding config keys.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn parse_command(s: &str) -> Result<Command, String> {
    Command::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Command::ALL.iter().map(|c| c.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn load(args: &Args) -> statrom::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut raw = RawConfig::parse(&text)?;
    raw.apply_overrides(&args.overrides)?;
    if let Some(seed) = args.seed {
        raw.set("seed", &seed.to_string());
    }
    if let Some(out) = &args.out {
        raw.set("out", &out.to_string_lossy());
    }
    ExperimentConfig::from_raw(&raw)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            error!("--jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            error!("cannot configure worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match load(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(2);
        }
    };
    match cli::run(args.command, &cfg) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{} failed: {e}", args.command.as_str());
            ExitCode::FAILURE
        }
    }
}
