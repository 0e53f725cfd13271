//! Stationary current through a noninteracting level from the hierarchy, against bias.

use vibheom::model::ModelParams;
use vibheom::protocol::{relax_undriven, Dynamics, HeomDynamics, HeomSettings, ProtocolConfig};

fn main() -> vibheom::Result<()> {
    let settings = HeomSettings::default();
    let cfg = ProtocolConfig::default();
    println!("{:>8} {:>14} {:>12}", "phi_ev", "current", "population");
    for phi in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let p = ModelParams::resonant_level(0.0, 0.025, 0.025).with_bias(phi);
        let mut d = HeomDynamics::new(&p, &settings)?;
        relax_undriven(&mut d, &p, &cfg)?;
        let s = d.sample();
        println!("{phi:>8.3} {:>14.6e} {:>12.6}", s.current(), s.population);
    }
    Ok(())
}
