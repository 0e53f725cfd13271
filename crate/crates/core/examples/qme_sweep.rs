//! Drive-frequency scan of the weak-coupling polaron with the Floquet master equation.

use vibheom::model::ModelParams;
use vibheom::protocol::{adiabatic_reference, drive_to_limit_cycle, relax_undriven, Dynamics, ProtocolConfig, QmeDynamics};

fn main() -> vibheom::Result<()> {
    let base = ModelParams {
        n_osc: 12,
        ..ModelParams::default()
    }
    .with_gamma(0.0025);
    let cfg = ProtocolConfig {
        cycle_tol: 1e-6,
        adiabatic_samples: 8,
        ..ProtocolConfig::default()
    };
    let mut d = QmeDynamics::new(&base, 1e-8)?;
    let relaxation = relax_undriven(&mut d, &base, &cfg)?;
    let start = d.vector();
    let reference = adiabatic_reference(&mut d, &base, &cfg)?;
    println!("{:>8} {:>14} {:>10} {:>10}", "omega_d", "power", "<a^dag a>", "dphi");
    for k in 0..9 {
        let omega_d = 0.08 + 0.04 * k as f64;
        let p = base.clone().with_drive(0.4, omega_d);
        d.set_level(p.eps0, 0.0, 0.0)?;
        d.set_vector(&start, 0.0);
        let (_, s) = drive_to_limit_cycle(&mut d, &p, &cfg, Some(&reference), relaxation)?;
        let dphi = s.relative_phase.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!("{omega_d:>8.3} {:>14.6e} {:>10.4} {dphi:>10}", s.power, s.occupation.average);
    }
    Ok(())
}
