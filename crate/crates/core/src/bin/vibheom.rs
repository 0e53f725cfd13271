use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vibheom::config::{parse_config, RunConfig, SolverChoice};
use vibheom::sweep::{emit_outputs, run_sweep, SweepOptions};

#[derive(Parser)]
#[command(version, about = "Driven vibronic junction: HEOM and Floquet master-equation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML configuration.
    Run {
        config: PathBuf,
        /// Worker threads (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// heom, fqme or both (overrides the config).
        #[arg(long)]
        solver: Option<SolverChoice>,
        /// Skip points completed by a previous run into the same directory.
        #[arg(long)]
        resume: bool,
    },
}

fn load(path: &PathBuf, workers: Option<usize>, out: Option<PathBuf>, solver: Option<SolverChoice>) -> vibheom::Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| vibheom::Error::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(o) = out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    if let Some(s) = solver {
        cfg.solver = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run {
        config,
        workers,
        out,
        solver,
        resume,
    } = Cli::parse().command;
    let cfg = match load(&config, workers, out, solver) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let dir = PathBuf::from(&cfg.out);
    let options = SweepOptions { resume, manifest: true };
    let table = match run_sweep(&cfg, &dir, &options).and_then(|t| emit_outputs(&t, &dir).map(|_| t)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let failed = table.failures();
    println!("{} rows, {failed} failed, written to {}", table.rows.len(), dir.display());
    if failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
