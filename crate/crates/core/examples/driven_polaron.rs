//! Limit cycle of the driven polaron at one drive frequency, solved with the hierarchy.
//!
//! Usage: `driven_polaron [omega_d]` (default 0.16 eV). Small numerical settings keep the
//! run to a few minutes on one core.

use vibheom::model::ModelParams;
use vibheom::protocol::{run_protocol, HeomDynamics, HeomSettings, ProtocolConfig};

fn main() -> vibheom::Result<()> {
    env_logger::init();
    let omega_d: f64 = std::env::args().nth(1).map_or(0.16, |s| s.parse().expect("omega_d"));
    let p = ModelParams {
        n_osc: 8,
        ..ModelParams::default()
    }
    .with_drive(0.4, omega_d);
    let settings = HeomSettings {
        pade_fermi: 10,
        threshold: 1e-4,
        rtol: 1e-5,
        ..HeomSettings::default()
    };
    let cfg = ProtocolConfig {
        cycle_tol: 1e-5,
        adiabatic_samples: 4,
        ..ProtocolConfig::default()
    };
    let mut d = HeomDynamics::new(&p, &settings)?;
    let (_, s) = run_protocol(&mut d, &p, &cfg)?;
    println!("omega_d            {omega_d}");
    println!("warm-up cycles     {}", s.warm_up.cycles);
    println!("<n>                {:.6} (oscillation {:.3e})", s.population.average, s.population.amplitude);
    println!("<a+a^dag>          {:.6} (oscillation {:.3e})", s.displacement.average, s.displacement.amplitude);
    println!("<a^dag a>          {:.6}", s.occupation.average);
    println!("induced power      {:.6e}", s.power);
    println!("relative phase     {:?}", s.relative_phase);
    Ok(())
}
