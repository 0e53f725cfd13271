//! Exponential expansion of the lead and phonon-bath correlation functions.

use vibheom::bathdecomp::{auto_pade_count, bosonic_modes, fermionic_modes, pade_fermi, reconstruct};
use vibheom::model::{Lead, ModelParams, Sign};

fn main() -> vibheom::Result<()> {
    let p = ModelParams::resonant_level(0.0, 0.025, 0.025).with_bias(0.2);
    println!("first Fermi Padé poles:");
    for pole in pade_fermi(6)?.iter().take(3) {
        println!("  {pole:?}");
    }

    let reference = fermionic_modes(&p, Lead::Left, Sign::Plus, 200)?;
    let norm = reconstruct(&reference, 0.0).norm();
    println!("\n{:>4} {:>12}", "N", "max error");
    for n in [2, 5, 10, 20, 40] {
        let modes = fermionic_modes(&p, Lead::Left, Sign::Plus, n)?;
        let err = (1..=400)
            .map(|k| {
                let t = k as f64;
                (reconstruct(&modes, t) - reconstruct(&reference, t)).norm() / norm
            })
            .fold(0.0, f64::max);
        println!("{n:>4} {err:>12.3e}");
    }
    println!("selected count at 1e-6: {}", auto_pade_count(&p, 1e-6, 200)?);

    let q = ModelParams {
        bath_coupling: 0.01,
        ..ModelParams::default()
    };
    println!("\nphonon bath modes (N = 4):");
    for m in bosonic_modes(&q, 4)? {
        println!("  {m:?}");
    }
    Ok(())
}
