//! Time-periodic Born–Markov master equation in the oscillator eigenbases.
//!
//! `ρ0` lives in the number basis of `h0 = Ω a†a`, `ρ1` in the displaced basis of
//! `h1 = Ω a†a + λ(a†+a)`, whose states are `|i'⟩ = D(-g)|i'⟩` with `g = λ/Ω`.
//! Tunneling between them carries Franck–Condon factors `F_{i→i'} = ⟨i'|D(g)|i⟩`
//! and the Floquet-replica Fermi function `f̃`.
//!
//! Gain terms pair with loss terms so that `tr ρ0 + tr ρ1` is conserved by the
//! generator. Valid only without the phonon bath (`Λ = 0`).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Lead, ModelParams};
use crate::ode::{Integrator, IntegratorConfig, Method, OdeSystem};
use crate::special::{bessel_j_all, fermi, laguerre, ln_factorial};

type C = Complex64;
const I: C = C { re: 0.0, im: 1.0 };

/// `F_{i→i'} = ⟨i'|i⟩` between undisplaced state `i` and displaced state `i'` for `g = λ/Ω`.
pub fn franck_condon(i: usize, ip: usize, g: f64) -> f64 {
    let (p, q) = (i.min(ip), i.max(ip));
    let k = (q - p) as f64;
    let g2 = g * g;
    let lag = laguerre(p, k, g2);
    if g == 0.0 {
        return if i == ip { 1.0 } else { 0.0 };
    }
    // magnitude in log space: 0.5 ln(p!/q!) + k ln|g| - g²/2
    let ln_mag = 0.5 * (ln_factorial(p) - ln_factorial(q)) + k * g.abs().ln() - 0.5 * g2;
    let mut v = ln_mag.exp() * lag;
    if g < 0.0 && (q - p) % 2 == 1 {
        v = -v;
    }
    if ip < i && (i - ip) % 2 == 1 {
        v = -v;
    }
    v
}

/// Table `F[i][i']` for `i, i' < n_osc`.
#[derive(Debug, Clone, PartialEq)]
pub struct FranckCondonTable {
    pub g: f64,
    pub f: DMatrix<f64>,
}

impl FranckCondonTable {
    pub fn new(n_osc: usize, g: f64) -> Self {
        FranckCondonTable {
            g,
            f: DMatrix::from_fn(n_osc, n_osc, |i, ip| franck_condon(i, ip, g)),
        }
    }

    pub fn from_params(p: &ModelParams) -> Result<Self> {
        if p.omega == 0.0 {
            return Err(Error::InvalidParameter("omega must be nonzero".into()));
        }
        Ok(Self::new(p.n_osc, p.lambda / p.omega))
    }

    /// `1 - Σ_{i'} F[i][i']²`, the weight of state `i` lost to truncation.
    pub fn leakage(&self, i: usize) -> f64 {
        1.0 - self.f.row(i).iter().map(|v| v * v).sum::<f64>()
    }
}

/// Smallest `cut` with `Σ_{|m|≤cut} J_m(z)² > 1 - 1e-10`.
pub fn replica_cutoff(z: f64) -> usize {
    let mut nmax = 8 + (2.0 * z.abs()) as usize;
    loop {
        let j = bessel_j_all(nmax, z);
        let mut sum = j[0] * j[0];
        for (m, v) in j.iter().enumerate().skip(1) {
            if sum > 1.0 - 1e-10 {
                return m - 1;
            }
            sum += 2.0 * v * v;
        }
        nmax *= 2;
    }
}

/// Floquet-replica Fermi function of one lead.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedFermi {
    pub z: f64,
    pub omega_d: f64,
    pub mu: f64,
    pub temperature: f64,
    pub cut: usize,
    bessel: Vec<f64>,
}

impl ModifiedFermi {
    pub fn new(z: f64, omega_d: f64, mu: f64, temperature: f64, cut: usize) -> Self {
        ModifiedFermi {
            z,
            omega_d,
            mu,
            temperature,
            cut,
            bessel: bessel_j_all(cut, z),
        }
    }

    fn j(&self, m: i64) -> f64 {
        let v = self.bessel[m.unsigned_abs() as usize];
        if m < 0 && m % 2 != 0 {
            -v
        } else {
            v
        }
    }

    /// `Σ_{n,m} i^n (-i)^m J_n J_m e^{i(n-m)Ω_D t} f(x - μ - mΩ_D)`.
    ///
    /// The `n` sum is the Jacobi–Anger series of `exp(i z cos Ω_D t)`; the `m` sum is truncated at `cut`.
    pub fn eval(&self, x: f64, t: f64) -> C {
        self.prefactor(t) * self.replica_sum(x, t)
    }

    fn prefactor(&self, t: f64) -> C {
        (I * self.z * (self.omega_d * t).cos()).exp()
    }

    fn replica_sum(&self, x: f64, t: f64) -> C {
        let cut = self.cut as i64;
        let mut acc = C::new(0.0, 0.0);
        for m in -cut..=cut {
            let jm = self.j(m);
            if jm == 0.0 {
                continue;
            }
            // (-i)^m e^{-imΩt}
            let phase = C::from_polar(1.0, -(m as f64) * (std::f64::consts::FRAC_PI_2 + self.omega_d * t));
            acc += phase * jm * fermi((x - self.mu - m as f64 * self.omega_d) / self.temperature);
        }
        acc
    }

    /// Period average `Σ_m J_m² f(x - μ - mΩ_D)`.
    pub fn cycle_average(&self, x: f64) -> f64 {
        let cut = self.cut as i64;
        (-cut..=cut)
            .map(|m| {
                let j = self.j(m);
                j * j * fermi((x - self.mu - m as f64 * self.omega_d) / self.temperature)
            })
            .sum()
    }
}

/// Free-function form of [`ModifiedFermi::eval`] with `μ = 0`.
pub fn modified_fermi(x: f64, t: f64, z: f64, omega_d: f64, temperature: f64, replica_cut: usize) -> C {
    ModifiedFermi::new(z, omega_d, 0.0, temperature, replica_cut).eval(x, t)
}

/// Reduced density matrix split by electronic occupation.
#[derive(Debug, Clone, PartialEq)]
pub struct QmeState {
    pub time: f64,
    /// Unoccupied sector, number basis.
    pub rho0: DMatrix<C>,
    /// Occupied sector, displaced basis.
    pub rho1: DMatrix<C>,
}

impl QmeState {
    /// `ρ_el ⊗ |0⟩⟨0|` in each sector's own ground state.
    pub fn product_state(n_osc: usize, population: f64) -> Self {
        let mut rho0 = DMatrix::zeros(n_osc, n_osc);
        let mut rho1 = DMatrix::zeros(n_osc, n_osc);
        rho0[(0, 0)] = C::new(1.0 - population, 0.0);
        rho1[(0, 0)] = C::new(population, 0.0);
        QmeState { time: 0.0, rho0, rho1 }
    }

    pub fn trace(&self) -> C {
        self.rho0.trace() + self.rho1.trace()
    }

    /// Column-major `ρ0` followed by `ρ1`.
    pub fn to_vec(&self) -> Vec<C> {
        self.rho0.iter().chain(self.rho1.iter()).copied().collect()
    }

    /// Inverse of [`QmeState::to_vec`].
    pub fn load(&mut self, x: &[C]) {
        let n2 = self.rho0.len();
        self.rho0.copy_from_slice(&x[..n2]);
        self.rho1.copy_from_slice(&x[n2..]);
    }
}

/// Master-equation generator for one parameter set.
#[derive(Debug, Clone)]
pub struct Qme {
    params: ModelParams,
    fc: FranckCondonTable,
    leads: Vec<(Lead, f64, ModifiedFermi)>,
    eps_bar0: f64,
    g: f64,
}

/// Per-lead rate matrices at one time.
struct Rates {
    /// `M0(i,k) = Σ_{i'} F[i][i'] F[k][i'] f̃(i'-k)`
    m0: DMatrix<C>,
    /// `M1(i',k') = Σ_i F[i][i'] F[i][k'] (1 - f̃*(k'-i))`
    m1: DMatrix<C>,
    /// `G(j',j) = F[j][j'] (1 - f̃(j'-j))`
    g: DMatrix<C>,
    /// `H(j,j') = F[j][j'] f̃*(j'-j)`
    h: DMatrix<C>,
}

impl Qme {
    pub fn new(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        if p.bath_coupling != 0.0 {
            return Err(Error::Contract(format!(
                "the master equation excludes the phonon bath, got bath coupling {}",
                p.bath_coupling
            )));
        }
        let fc = FranckCondonTable::from_params(p)?;
        let z = if p.drive_amplitude == 0.0 {
            0.0
        } else {
            p.drive_amplitude / p.drive_frequency
        };
        let cut = if z == 0.0 { 0 } else { replica_cutoff(z) };
        let leads = Lead::ALL
            .iter()
            .filter(|&&l| p.lead_gamma(l) > 0.0)
            .map(|&l| {
                (
                    l,
                    p.lead_gamma(l),
                    ModifiedFermi::new(z, p.drive_frequency, p.lead_mu(l), p.lead_temperature(l), cut),
                )
            })
            .collect();
        Ok(Qme {
            eps_bar0: p.eps0 - p.polaron_shift(),
            g: p.lambda / p.omega,
            params: p.clone(),
            fc,
            leads,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn franck_condon(&self) -> &FranckCondonTable {
        &self.fc
    }

    fn n(&self) -> usize {
        self.params.n_osc
    }

    /// `f̃_α(E1(i') - E0(i))` for every difference `k = i' - i`, indexed by `k + n - 1`.
    fn tilde_f(&self, mf: &ModifiedFermi, t: f64) -> Vec<C> {
        let n = self.n() as i64;
        let pre = mf.prefactor(t);
        (-(n - 1)..n)
            .map(|k| pre * mf.replica_sum(self.params.omega * k as f64 + self.eps_bar0, t))
            .collect()
    }

    fn rates(&self, mf: &ModifiedFermi, t: f64) -> Rates {
        let n = self.n();
        let ft = self.tilde_f(mf, t);
        let fk = |ip: usize, i: usize| ft[ip + n - 1 - i];
        let f = &self.fc.f;
        let one = C::new(1.0, 0.0);
        Rates {
            m0: DMatrix::from_fn(n, n, |i, k| (0..n).map(|ip| fk(ip, k) * (f[(i, ip)] * f[(k, ip)])).sum()),
            m1: DMatrix::from_fn(n, n, |ip, kp| {
                (0..n).map(|i| (one - fk(kp, i).conj()) * (f[(i, ip)] * f[(i, kp)])).sum()
            }),
            g: DMatrix::from_fn(n, n, |jp, j| (one - fk(jp, j)) * f[(j, jp)]),
            h: DMatrix::from_fn(n, n, |j, jp| fk(jp, j).conj() * f[(j, jp)]),
        }
    }

    /// Derivative `(dρ0/dt, dρ1/dt)` at time `t`.
    pub fn rhs(&self, s: &QmeState, t: f64) -> (DMatrix<C>, DMatrix<C>) {
        let n = self.n();
        let om = self.params.omega;
        let mut d0 = DMatrix::from_fn(n, n, |i, j| -I * om * (i as f64 - j as f64) * s.rho0[(i, j)]);
        let mut d1 = DMatrix::from_fn(n, n, |i, j| -I * om * (i as f64 - j as f64) * s.rho1[(i, j)]);
        for (_, gamma, mf) in &self.leads {
            let (l0, g0, l1, g1) = self.lead_terms(s, mf, t);
            let w = C::new(0.5 * gamma, 0.0);
            d0 += (g0 - l0) * w;
            d1 += (g1 - l1) * w;
        }
        (d0, d1)
    }

    /// Loss and gain matrices of one lead (without the `Γ_α/2` prefactor).
    fn lead_terms(&self, s: &QmeState, mf: &ModifiedFermi, t: f64) -> (DMatrix<C>, DMatrix<C>, DMatrix<C>, DMatrix<C>) {
        let r = self.rates(mf, t);
        let fc: DMatrix<C> = self.fc.f.map(|v| C::new(v, 0.0));
        let loss0 = &r.m0 * &s.rho0 + &s.rho0 * r.m0.adjoint();
        let half0 = &fc * &s.rho1 * &r.g;
        let gain0 = &half0 + half0.adjoint();
        let loss1 = &r.m1 * &s.rho1 + &s.rho1 * r.m1.adjoint();
        let half1 = fc.transpose() * &s.rho0 * &r.h;
        let gain1 = &half1 + half1.adjoint();
        (loss0, gain0, loss1, gain1)
    }

    /// Current from lead `α` into the level: its contribution to `d tr ρ1/dt`.
    pub fn lead_current(&self, s: &QmeState, lead: Lead) -> f64 {
        self.leads
            .iter()
            .filter(|(l, _, _)| *l == lead)
            .map(|(_, gamma, mf)| {
                let (_, _, l1, g1) = self.lead_terms(s, mf, s.time);
                0.5 * gamma * (g1.trace() - l1.trace()).re
            })
            .sum()
    }

    /// Symmetrized current `(I_L - I_R)/2`.
    pub fn current(&self, s: &QmeState) -> f64 {
        0.5 * (self.lead_current(s, Lead::Left) - self.lead_current(s, Lead::Right))
    }

    /// Electronic population, displacement and vibrational occupation.
    pub fn observables(&self, s: &QmeState) -> crate::heom::Observables {
        let n = self.n();
        let g = self.g;
        let mut occ = 0.0;
        let mut q0 = 0.0;
        let mut q1 = 0.0;
        for k in 0..n {
            occ += k as f64 * (s.rho0[(k, k)].re + s.rho1[(k, k)].re);
            if k + 1 < n {
                let sq = ((k + 1) as f64).sqrt();
                q0 += sq * (s.rho0[(k, k + 1)].re + s.rho0[(k + 1, k)].re);
                q1 += sq * (s.rho1[(k, k + 1)].re + s.rho1[(k + 1, k)].re);
            }
        }
        let p1 = s.rho1.trace().re;
        // occupied sector: a = b - g, so a†a = b†b - g(b+b†) + g² and a+a† = b+b† - 2g
        crate::heom::Observables {
            population: p1,
            displacement: q0 + q1 - 2.0 * g * p1,
            occupation: occ - g * q1 + g * g * p1,
        }
    }

    /// Stationary state of the generator frozen at time `t` (null vector with unit trace).
    ///
    /// For an undriven model this is the steady state; with driving it is the
    /// instantaneous (adiabatic) stationary state.
    pub fn stationary_state(&self, t: f64) -> Result<QmeState> {
        let n = self.n();
        let dim = 2 * n * n;
        let sys = QmeSystem { qme: self, n };
        let mut gen = DMatrix::<C>::zeros(dim, dim);
        let mut e = vec![C::new(0.0, 0.0); dim];
        let mut col = vec![C::new(0.0, 0.0); dim];
        for k in 0..dim {
            e[k] = C::new(1.0, 0.0);
            sys.explicit_rhs(t, &e, &mut col);
            gen.set_column(k, &nalgebra::DVector::from_column_slice(&col));
            e[k] = C::new(0.0, 0.0);
        }
        // replace one (redundant) equation by the trace condition
        let mut rhs = nalgebra::DVector::<C>::zeros(dim);
        let row = 0;
        for k in 0..dim {
            gen[(row, k)] = C::new(0.0, 0.0);
        }
        for i in 0..n {
            gen[(row, i * n + i)] = C::new(1.0, 0.0);
            gen[(row, n * n + i * n + i)] = C::new(1.0, 0.0);
        }
        rhs[row] = C::new(1.0, 0.0);
        // Without vibronic coupling or a phonon bath the oscillator levels are not relaxed and
        // the null space is degenerate; the minimum-norm solution is then one valid stationary state.
        let x = match gen.clone().lu().solve(&rhs) {
            Some(x) => x,
            None => {
                let x = gen
                    .clone()
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .map_err(|e| Error::Contract(format!("singular master-equation generator: {e}")))?;
                if (&gen * &x - &rhs).norm() > 1e-8 {
                    return Err(Error::Contract("singular master-equation generator".into()));
                }
                x
            }
        };
        let mut s = QmeState::product_state(n, 0.0);
        s.load(x.as_slice());
        s.time = t;
        Ok(s)
    }

    /// Stationary rate-equation population `Σ_α Γ_α f_α(ε̄0) / Γ` of the undriven, uncoupled level.
    pub fn rate_equation_population(p: &ModelParams) -> f64 {
        let eps = p.eps0 - p.polaron_shift();
        Lead::ALL
            .iter()
            .map(|&l| p.lead_gamma(l) * fermi((eps - p.lead_mu(l)) / p.lead_temperature(l)))
            .sum::<f64>()
            / p.gamma_total()
    }
}

struct QmeSystem<'a> {
    qme: &'a Qme,
    n: usize,
}

impl OdeSystem for QmeSystem<'_> {
    fn len(&self) -> usize {
        2 * self.n * self.n
    }

    fn explicit_rhs(&self, t: f64, x: &[C], out: &mut [C]) {
        let n2 = self.n * self.n;
        let s = QmeState {
            time: t,
            rho0: DMatrix::from_column_slice(self.n, self.n, &x[..n2]),
            rho1: DMatrix::from_column_slice(self.n, self.n, &x[n2..]),
        };
        let (d0, d1) = self.qme.rhs(&s, t);
        out[..n2].copy_from_slice(d0.as_slice());
        out[n2..].copy_from_slice(d1.as_slice());
    }
}

/// Adaptive propagator for the master equation (Dormand–Prince by default).
pub struct QmePropagator {
    integrator: Integrator,
}

impl QmePropagator {
    pub fn new(rtol: f64) -> Self {
        QmePropagator {
            integrator: Integrator::new(IntegratorConfig {
                method: Method::DormandPrince,
                rtol,
                ..Default::default()
            }),
        }
    }

    pub fn with_config(config: IntegratorConfig) -> Self {
        QmePropagator {
            integrator: Integrator::new(config),
        }
    }

    pub fn restart(&mut self) {
        self.integrator.restart();
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integrator
    }

    /// Uniform-step counterpart of [`QmePropagator::propagate`].
    pub fn propagate_uniform(&mut self, qme: &Qme, state: &mut QmeState, t1: f64, steps: usize) -> Result<f64> {
        if t1 < state.time {
            return Err(Error::InvalidParameter(format!(
                "cannot propagate backwards from {} to {t1}",
                state.time
            )));
        }
        let sys = QmeSystem { qme, n: qme.n() };
        let mut x = state.to_vec();
        let worst = self.integrator.integrate_uniform(&sys, state.time, t1, steps, &mut x)?;
        state.load(&x);
        state.time = t1;
        Ok(worst)
    }

    pub fn propagate(&mut self, qme: &Qme, state: &mut QmeState, t1: f64) -> Result<()> {
        if t1 < state.time {
            return Err(Error::InvalidParameter(format!(
                "cannot propagate backwards from {} to {t1}",
                state.time
            )));
        }
        let sys = QmeSystem { qme, n: qme.n() };
        let mut x = state.to_vec();
        self.integrator.integrate(&sys, state.time, t1, &mut x)?;
        state.load(&x);
        state.time = t1;
        Ok(())
    }
}
