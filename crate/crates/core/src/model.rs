//! Physical parameters of the driven vibronic junction and the system operators.
//!
//! The system Hilbert space is `|n_el> ⊗ |m>` with the electronic occupation as
//! the slow index: basis index `n_el * n_osc + m`. The unoccupied block comes
//! first, then the occupied block.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electronic reservoir label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lead {
    Left,
    Right,
}

impl Lead {
    pub const ALL: [Lead; 2] = [Lead::Left, Lead::Right];

    pub fn index(self) -> usize {
        match self {
            Lead::Left => 0,
            Lead::Right => 1,
        }
    }
}

/// Creation (`Plus`) / annihilation (`Minus`) label of a fermionic bath operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const ALL: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// All parameters of the model Hamiltonian plus the drive and the Fock truncation.
///
/// Energies in eV, times in ħ/eV, `k_B = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Bare level energy `ε₀`.
    pub eps0: f64,
    /// Electronic-vibrational coupling `λ`.
    pub lambda: f64,
    /// Vibrational frequency `Ω`.
    pub omega: f64,
    /// Drive amplitude `A_D`.
    pub drive_amplitude: f64,
    /// Drive frequency `Ω_D`.
    pub drive_frequency: f64,
    pub gamma_l: f64,
    pub gamma_r: f64,
    pub bandwidth_l: f64,
    pub bandwidth_r: f64,
    pub mu_l: f64,
    pub mu_r: f64,
    pub temperature_l: f64,
    pub temperature_r: f64,
    pub temperature_bath: f64,
    /// Phonon-bath coupling `Λ`.
    pub bath_coupling: f64,
    /// Phonon-bath cutoff `ω_c`.
    pub bath_cutoff: f64,
    /// Number of Fock levels kept for the vibrational mode.
    pub n_osc: usize,
    /// Include the `(a†+a)²` counter-term.
    pub counter_term: bool,
}

impl Default for ModelParams {
    /// Resonance-study parameters: `ε̄₀ = 0`, `Ω = 0.2`, `λ/Ω = 1.5`, `A_D = 0.4`,
    /// `T = Γ = 0.025`, wide bands `D = 30`, no bias, no phonon bath.
    fn default() -> Self {
        let omega = 0.2;
        let lambda = 1.5 * omega;
        ModelParams {
            eps0: lambda * lambda / omega,
            lambda,
            omega,
            drive_amplitude: 0.4,
            drive_frequency: omega,
            gamma_l: 0.0125,
            gamma_r: 0.0125,
            bandwidth_l: 30.0,
            bandwidth_r: 30.0,
            mu_l: 0.0,
            mu_r: 0.0,
            temperature_l: 0.025,
            temperature_r: 0.025,
            temperature_bath: 0.025,
            bath_coupling: 0.0,
            bath_cutoff: omega,
            n_osc: 20,
            counter_term: true,
        }
    }
}

impl ModelParams {
    /// Noninteracting resonant level (`λ = 0`, `Λ = 0`, `A_D = 0`) with the minimal oscillator.
    pub fn resonant_level(eps0: f64, gamma: f64, temperature: f64) -> Self {
        ModelParams {
            eps0,
            lambda: 0.0,
            drive_amplitude: 0.0,
            n_osc: 2,
            ..ModelParams::default()
        }
        .with_gamma(gamma)
        .with_temperature(temperature)
    }

    /// Symmetric coupling `Γ_L = Γ_R = Γ/2`.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma_l = 0.5 * gamma;
        self.gamma_r = 0.5 * gamma;
        self
    }

    /// Symmetric bias `μ_L = Φ/2`, `μ_R = -Φ/2`.
    pub fn with_bias(mut self, phi: f64) -> Self {
        self.mu_l = 0.5 * phi;
        self.mu_r = -0.5 * phi;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature_l = t;
        self.temperature_r = t;
        self.temperature_bath = t;
        self
    }

    /// Sets `ε₀` such that the polaron-shifted level `ε̄₀ = ε₀ - λ²/Ω` equals `eps_bar0`.
    pub fn with_eps_bar0(mut self, eps_bar0: f64) -> Self {
        self.eps0 = eps_bar0 + self.polaron_shift();
        self
    }

    pub fn with_drive(mut self, amplitude: f64, frequency: f64) -> Self {
        self.drive_amplitude = amplitude;
        self.drive_frequency = frequency;
        self
    }

    pub fn undriven(&self) -> Self {
        ModelParams {
            drive_amplitude: 0.0,
            ..self.clone()
        }
    }

    pub fn gamma_total(&self) -> f64 {
        self.gamma_l + self.gamma_r
    }

    pub fn bias(&self) -> f64 {
        self.mu_l - self.mu_r
    }

    pub fn lead_gamma(&self, lead: Lead) -> f64 {
        match lead {
            Lead::Left => self.gamma_l,
            Lead::Right => self.gamma_r,
        }
    }

    pub fn lead_bandwidth(&self, lead: Lead) -> f64 {
        match lead {
            Lead::Left => self.bandwidth_l,
            Lead::Right => self.bandwidth_r,
        }
    }

    pub fn lead_mu(&self, lead: Lead) -> f64 {
        match lead {
            Lead::Left => self.mu_l,
            Lead::Right => self.mu_r,
        }
    }

    pub fn lead_temperature(&self, lead: Lead) -> f64 {
        match lead {
            Lead::Left => self.temperature_l,
            Lead::Right => self.temperature_r,
        }
    }

    /// `λ²/Ω`.
    pub fn polaron_shift(&self) -> f64 {
        self.lambda * self.lambda / self.omega
    }

    /// Drive period `2π/Ω_D`; infinite without drive frequency.
    pub fn drive_period(&self) -> f64 {
        if self.drive_frequency > 0.0 {
            2.0 * std::f64::consts::PI / self.drive_frequency
        } else {
            f64::INFINITY
        }
    }

    /// Coefficient of the `(a†+a)²` counter-term: `Σ_j ξ_j²/ω_j = (1/π)∫ Λ(ω)/ω dω = Λ ω_c / (2Ω)`.
    pub fn counter_term_coefficient(&self) -> f64 {
        if self.counter_term {
            self.bath_coupling * self.bath_cutoff / (2.0 * self.omega)
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("eps0", self.eps0),
            ("lambda", self.lambda),
            ("omega", self.omega),
            ("drive_amplitude", self.drive_amplitude),
            ("drive_frequency", self.drive_frequency),
            ("gamma_l", self.gamma_l),
            ("gamma_r", self.gamma_r),
            ("bandwidth_l", self.bandwidth_l),
            ("bandwidth_r", self.bandwidth_r),
            ("mu_l", self.mu_l),
            ("mu_r", self.mu_r),
            ("temperature_l", self.temperature_l),
            ("temperature_r", self.temperature_r),
            ("temperature_bath", self.temperature_bath),
            ("bath_coupling", self.bath_coupling),
            ("bath_cutoff", self.bath_cutoff),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        let positive = [
            ("omega", self.omega),
            ("temperature_l", self.temperature_l),
            ("temperature_r", self.temperature_r),
            ("temperature_bath", self.temperature_bath),
            ("bandwidth_l", self.bandwidth_l),
            ("bandwidth_r", self.bandwidth_r),
            ("bath_cutoff", self.bath_cutoff),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("gamma_l", self.gamma_l),
            ("gamma_r", self.gamma_r),
            ("bath_coupling", self.bath_coupling),
            ("drive_frequency", self.drive_frequency),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.n_osc < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_osc must be >= 2, got {}",
                self.n_osc
            )));
        }
        Ok(())
    }
}

/// `ε_d(t) = ε₀ + A_D sin(Ω_D t)`.
pub fn drive_energy(p: &ModelParams, t: f64) -> f64 {
    p.eps0 + p.drive_amplitude * (p.drive_frequency * t).sin()
}

/// `ε̄_d(t) = ε_d(t) - λ²/Ω`.
pub fn polaron_shifted_energy(p: &ModelParams, t: f64) -> Result<f64> {
    if p.omega == 0.0 {
        return Err(Error::InvalidParameter("omega must be nonzero".into()));
    }
    Ok(drive_energy(p, t) - p.polaron_shift())
}

/// Lorentzian lead spectral density `Γ_α D_α² / (D_α² + (ε-μ_α)²)`.
pub fn lead_spectral_density(p: &ModelParams, lead: Lead, energy: f64) -> f64 {
    let d = p.lead_bandwidth(lead);
    let x = energy - p.lead_mu(lead);
    p.lead_gamma(lead) * d * d / (d * d + x * x)
}

/// Ohmic phonon spectral density with Lorentzian cutoff `Λ (ω/Ω) ω_c²/(ω_c²+ω²)`.
pub fn phonon_spectral_density(p: &ModelParams, omega: f64) -> f64 {
    let wc = p.bath_cutoff;
    p.bath_coupling * (omega / p.omega) * wc * wc / (wc * wc + omega * omega)
}

/// Dense operator on the `2·n_osc` dimensional system space.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemOperator {
    pub matrix: DMatrix<Complex64>,
}

impl SystemOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Electronic annihilator `d`.
    pub fn d(n_osc: usize) -> Self {
        let dim = 2 * n_osc;
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..n_osc {
            m[(k, n_osc + k)] = Complex64::new(1.0, 0.0);
        }
        SystemOperator { matrix: m }
    }

    /// Vibrational annihilator `a` (truncated at `n_osc` levels).
    pub fn a(n_osc: usize) -> Self {
        let dim = 2 * n_osc;
        let mut m = DMatrix::zeros(dim, dim);
        for el in 0..2 {
            for k in 1..n_osc {
                m[(el * n_osc + k - 1, el * n_osc + k)] = Complex64::new((k as f64).sqrt(), 0.0);
            }
        }
        SystemOperator { matrix: m }
    }

    pub fn adjoint(&self) -> Self {
        SystemOperator {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn mul(&self, other: &SystemOperator) -> Self {
        SystemOperator {
            matrix: &self.matrix * &other.matrix,
        }
    }

    /// Electronic population operator `d†d`.
    pub fn population(n_osc: usize) -> Self {
        let d = Self::d(n_osc);
        d.adjoint().mul(&d)
    }

    /// Displacement operator `a† + a`.
    pub fn displacement(n_osc: usize) -> Self {
        let a = Self::a(n_osc);
        SystemOperator {
            matrix: &a.matrix + a.matrix.adjoint(),
        }
    }

    /// Vibrational occupation `a†a`.
    pub fn occupation(n_osc: usize) -> Self {
        let a = Self::a(n_osc);
        a.adjoint().mul(&a)
    }

    /// Maximum elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Tr(O ρ)`.
    pub fn expectation(&self, rho: &DMatrix<Complex64>) -> Complex64 {
        (&self.matrix * rho).trace()
    }
}

/// `H_S(t) = ε_d(t) d†d + λ(a†+a)d†d + Ω a†a + c_ct (a†+a)²`.
pub fn build_system_hamiltonian(p: &ModelParams, t: f64) -> SystemOperator {
    let n = p.n_osc;
    let blocks = OscillatorBlocks::new(p);
    let eps = drive_energy(p, t);
    let dim = 2 * n;
    let mut m = DMatrix::zeros(dim, dim);
    for (el, h) in [(0usize, &blocks.h0), (1, &blocks.h1)] {
        for (i, row) in h.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(el * n + i, el * n + j)] += Complex64::new(v, 0.0);
            }
        }
        if el == 1 {
            for i in 0..n {
                m[(n + i, n + i)] += Complex64::new(eps, 0.0);
            }
        }
    }
    SystemOperator { matrix: m }
}

/// Real symmetric sparse matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSym {
    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let n = dense.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let v = dense[(i, j)];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        SparseSym { n, rows }
    }

    /// `out += alpha * (self · x)` for a row-major `n×n` complex block.
    pub fn left_mul_acc(&self, x: &[Complex64], alpha: Complex64, out: &mut [Complex64]) {
        let n = self.n;
        for (i, row) in self.rows.iter().enumerate() {
            let o = &mut out[i * n..(i + 1) * n];
            for &(k, v) in row {
                let a = alpha * v;
                let xr = &x[k * n..(k + 1) * n];
                for (oj, xj) in o.iter_mut().zip(xr) {
                    *oj += a * xj;
                }
            }
        }
    }

    /// `out += alpha * (x · self)` for a row-major `n×n` complex block.
    pub fn right_mul_acc(&self, x: &[Complex64], alpha: Complex64, out: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let xr = &x[i * n..(i + 1) * n];
            let o = &mut out[i * n..(i + 1) * n];
            for (j, row) in self.rows.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(k, v) in row {
                    acc += xr[k] * v;
                }
                o[j] += alpha * acc;
            }
        }
    }
}

/// Oscillator-space blocks of the system Hamiltonian without the driven level energy.
#[derive(Debug, Clone)]
pub struct OscillatorBlocks {
    /// Unoccupied-sector Hamiltonian `Ω a†a + c_ct Q²`.
    pub h0: SparseSym,
    /// Occupied-sector Hamiltonian minus `ε_d(t)`: `Ω a†a + λ Q + c_ct Q²`.
    pub h1: SparseSym,
    /// Displacement `Q = a + a†`.
    pub q: SparseSym,
}

impl OscillatorBlocks {
    pub fn new(p: &ModelParams) -> Self {
        let n = p.n_osc;
        let mut q = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let s = (k as f64).sqrt();
            q[(k - 1, k)] = s;
            q[(k, k - 1)] = s;
        }
        let q2 = &q * &q;
        let ct = p.counter_term_coefficient();
        let mut h0 = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            h0[(k, k)] = p.omega * k as f64;
        }
        h0 += &q2 * ct;
        let h1 = &h0 + &q * p.lambda;
        OscillatorBlocks {
            h0: SparseSym::from_dense(&h0),
            h1: SparseSym::from_dense(&h1),
            q: SparseSym::from_dense(&q),
        }
    }
}
