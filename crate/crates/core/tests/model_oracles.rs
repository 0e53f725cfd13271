mod common;

use nalgebra::{DMatrix, DVector};
use vibheom::fqme::{franck_condon, Qme};
use vibheom::model::{build_system_hamiltonian, phonon_spectral_density, Lead, ModelParams, SystemOperator};
use vibheom::special::fermi;

#[test]
fn franck_condon_matches_hermite_overlaps() {
    for g in [0.3, 1.0, 1.5, -0.7] {
        let shift = -std::f64::consts::SQRT_2 * g;
        for i in 0..8 {
            for ip in 0..8 {
                let exact = common::shifted_overlap(i, ip, shift);
                let fc = franck_condon(i, ip, g);
                assert!((fc - exact).abs() < 1e-9, "g {g} ({i},{ip}): {fc} vs {exact}");
            }
        }
    }
}

#[test]
fn counter_term_coefficient_matches_quadrature() {
    for (lambda_bath, wc) in [(0.01, 0.2), (0.005, 0.05), (0.02, 1.0)] {
        let p = ModelParams {
            bath_coupling: lambda_bath,
            bath_cutoff: wc,
            ..ModelParams::default()
        };
        // (1/π)∫_0^∞ J(ω)/ω dω; the integrand is even.
        let whole = common::integrate_line(|w| phonon_spectral_density(&p, w) / w, 0.0, wc, &[], 1e-13);
        let exact = 0.5 * whole / std::f64::consts::PI;
        let c = p.counter_term_coefficient();
        assert!((c - exact).abs() < 1e-10 * exact, "{c} vs {exact}");
    }
}

#[test]
fn counter_term_enters_the_hamiltonian_as_displacement_squared() {
    let on = ModelParams {
        bath_coupling: 0.01,
        n_osc: 6,
        ..ModelParams::default()
    };
    let off = ModelParams {
        counter_term: false,
        ..on.clone()
    };
    assert_eq!(off.counter_term_coefficient(), 0.0);
    let diff = build_system_hamiltonian(&on, 0.3).matrix - build_system_hamiltonian(&off, 0.3).matrix;
    let x = SystemOperator::displacement(on.n_osc);
    let x2 = x.mul(&x).matrix * num_complex::Complex64::new(on.counter_term_coefficient(), 0.0);
    let n = on.n_osc;
    // The top Fock level of (a+a†)² is truncation dependent; compare below it.
    for el in 0..2 {
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                let (i, j) = (el * n + r, el * n + c);
                assert!((diff[(i, j)] - x2[(i, j)]).norm() < 1e-14, "({i},{j})");
            }
        }
    }
}

/// Secular (Pauli) rate equation of the undriven polaron: populations `P0(i)`, `P1(j)` with
/// transition rates `Γ_α F_ij² f_α(ε̄0 + (j-i)Ω)` into and `Γ_α F_ij² (1-f_α)` out of the level.
fn pauli_populations(p: &ModelParams) -> (Vec<f64>, Vec<f64>, f64) {
    let n = p.n_osc;
    let g = p.lambda / p.omega;
    let eps_bar = p.eps0 - p.polaron_shift();
    let mut w = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let rate = |lead: Lead, i: usize, j: usize, into: bool| {
        let e = eps_bar + (j as f64 - i as f64) * p.omega;
        let f = fermi((e - p.lead_mu(lead)) / p.lead_temperature(lead));
        let fc = franck_condon(i, j, g).powi(2);
        p.lead_gamma(lead) * fc * if into { f } else { 1.0 - f }
    };
    for i in 0..n {
        for j in 0..n {
            for lead in Lead::ALL {
                let up = rate(lead, i, j, true);
                let down = rate(lead, i, j, false);
                w[(n + j, i)] += up;
                w[(i, i)] -= up;
                w[(i, n + j)] += down;
                w[(n + j, n + j)] -= down;
            }
        }
    }
    for k in 0..2 * n {
        w[(0, k)] = 1.0;
    }
    let mut rhs = DVector::zeros(2 * n);
    rhs[0] = 1.0;
    let x = w.lu().solve(&rhs).unwrap();
    let flux = |lead: Lead| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += rate(lead, i, j, true) * x[i] - rate(lead, i, j, false) * x[n + j];
            }
        }
        s
    };
    let current = 0.5 * (flux(Lead::Left) - flux(Lead::Right));
    (x.rows(0, n).iter().copied().collect(), x.rows(n, n).iter().copied().collect(), current)
}

// Without bias the master equation relaxes to the diagonal Gibbs-like state and the
// two agree to round-off. With bias the master equation keeps coherences of relative
// size Γ/Ω between vibrational levels, which the secular rates drop.
#[test]
fn undriven_master_equation_matches_pauli_rates() {
    for (phi, eps_bar) in [(0.0, 0.0), (0.3, 0.0), (0.5, 0.1)] {
        let p = ModelParams {
            n_osc: 12,
            lambda: 0.2,
            drive_amplitude: 0.0,
            ..ModelParams::default()
        }
        .with_bias(phi)
        .with_eps_bar0(eps_bar);
        let qme = Qme::new(&p).unwrap();
        let s = qme.stationary_state(0.0).unwrap();
        let (p0, p1, current) = pauli_populations(&p);
        for i in 0..p.n_osc {
            let tol = if phi == 0.0 { 1e-12 } else { 2e-4 };
            assert!((s.rho0[(i, i)].re - p0[i]).abs() < tol, "phi {phi} P0({i})");
            assert!((s.rho1[(i, i)].re - p1[i]).abs() < tol, "phi {phi} P1({i})");
        }
        let q = qme.current(&s);
        let tol = if phi == 0.0 { 1e-14 } else { 1e-4 * current.abs() };
        assert!((q - current).abs() < tol, "phi {phi}: {q} vs {current}");
    }
}
