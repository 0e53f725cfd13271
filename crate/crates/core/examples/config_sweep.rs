//! Config-driven sweep with both solvers, written as CSV and SVG.
//!
//! Usage: `config_sweep [out_dir]` (default `sweep_out`).

use std::path::PathBuf;

use vibheom::config::parse_config;
use vibheom::sweep::{emit_outputs, run_sweep, SweepOptions};

const CONFIG: &str = r#"
solver = "both"
workers = 2

[model]
lambda_over_omega = 0.5
gamma = 0.0025
n_osc = 6

[drive]
amplitude = 0.2

[sweep]
omega_d = { start = 0.1, stop = 0.3, count = 3 }

[heom]
pade_fermi = 8
threshold = 1e-4
rtol = 1e-5

[protocol]
cycle_tol = 1e-5
adiabatic_samples = 4
"#;

fn main() -> vibheom::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sweep_out".into()));
    let cfg = parse_config(CONFIG)?;
    let table = run_sweep(&cfg, &out, &SweepOptions::default())?;
    emit_outputs(&table, &out)?;
    print!("{}", table.to_csv());
    Ok(())
}
