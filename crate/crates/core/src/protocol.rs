//! Driving protocol and limit-cycle analysis.
//!
//! A run has three phases: the undriven model relaxes to its stationary state, the
//! drive is switched on and whole periods are iterated until the state repeats, and
//! one period is recorded at fine sampling and summarized.
//!
//! Relaxation and warm-up are both fixed-point problems for a linear propagator
//! `x ↦ U(τ)x`. They are solved by Anderson mixing over the last few iterates, which
//! near resonance needs far fewer periods than plain iteration. Mixing coefficients
//! are real and sum to one, so trace and Hermiticity are preserved.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bathdecomp::BathExpansion;
use crate::error::{Error, Result};
use crate::fqme::{Qme, QmePropagator, QmeState};
use crate::heom::{Hierarchy, HierarchyState, Propagator, Truncation};
use crate::model::{Lead, ModelParams};
use crate::ode::IntegratorConfig;

type C = Complex64;

/// Smallest `|a₁|` for which a phase is defined.
pub const PHASE_FLOOR: f64 = 1e-12;

/// Observables at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub population: f64,
    pub displacement: f64,
    pub occupation: f64,
    pub current_l: f64,
    pub current_r: f64,
}

impl Sample {
    /// Symmetrized current `(I_L - I_R)/2`.
    pub fn current(&self) -> f64 {
        0.5 * (self.current_l - self.current_r)
    }

    /// Largest channel difference, with currents measured in units of `gamma`.
    pub fn distance(&self, other: &Sample, gamma: f64) -> f64 {
        let g = if gamma > 0.0 { gamma } else { 1.0 };
        let d = [
            (self.population - other.population).abs(),
            (self.displacement - other.displacement).abs(),
            (self.occupation - other.occupation).abs(),
            (self.current_l - other.current_l).abs() / g,
            (self.current_r - other.current_r).abs() / g,
        ];
        if d.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        d.into_iter().fold(0.0, f64::max)
    }
}

/// A time-dependent solver the protocol can drive.
///
/// The state is exposed as a flat vector so that the protocol can restart and
/// extrapolate it.
pub trait Dynamics {
    /// Parameters currently in effect (level energy and drive may differ from the run's).
    fn params(&self) -> &ModelParams;
    fn time(&self) -> f64;
    fn vector(&self) -> Vec<C>;
    fn set_vector(&mut self, x: &[C], time: f64);
    fn advance(&mut self, t1: f64) -> Result<()>;
    fn sample(&self) -> Sample;
    /// Replaces the level energy `ε₀` and the drive, keeping the state.
    fn set_level(&mut self, eps0: f64, amplitude: f64, frequency: f64) -> Result<()>;

    /// Accepted integration steps so far; 0 if not tracked.
    fn steps_taken(&self) -> usize {
        0
    }

    /// Drops any integrator state carried over from earlier propagation.
    fn restart(&mut self) {}

    /// Advances to `t1` in `steps` equal steps, so that repeated passes apply the same linear map.
    fn advance_uniform(&mut self, t1: f64, steps: usize) -> Result<()> {
        let _ = steps;
        self.advance(t1)
    }

    /// Number of leading state components whose residual steers the extrapolation.
    fn mixing_window(&self) -> usize {
        usize::MAX
    }

    /// Relaxes the undriven model at level energy `eps0` to its stationary state.
    fn relax(&mut self, eps0: f64, cfg: &ProtocolConfig) -> Result<Convergence> {
        self.set_level(eps0, 0.0, 0.0)?;
        let window = cfg.relaxation_window(self.params());
        fixed_point(self, window, cfg)
    }
}

/// Iterations used and final residual of a fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Convergence {
    pub cycles: usize,
    pub residual: f64,
    /// Uniform integration steps per pass after the first; 0 if every pass was adaptive.
    pub steps_per_pass: usize,
}

/// Knobs of the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub samples_per_cycle: usize,
    /// Largest allowed change of any observable between successive iterates.
    pub cycle_tol: f64,
    pub max_cycles: usize,
    /// Anderson history length; 0 gives plain iteration.
    pub anderson_depth: usize,
    /// Relaxation window of the undriven phase; `None` means `10/Γ`.
    pub relaxation_window: Option<f64>,
    /// Drive phases at which the adiabatic reference is solved.
    pub adiabatic_samples: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            samples_per_cycle: 128,
            cycle_tol: 1e-6,
            max_cycles: 500,
            anderson_depth: 5,
            relaxation_window: None,
            adiabatic_samples: 16,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_cycle < 16 {
            return Err(Error::InvalidParameter(format!(
                "samples_per_cycle must be >= 16, got {}",
                self.samples_per_cycle
            )));
        }
        if !(self.cycle_tol > 0.0) {
            return Err(Error::InvalidParameter("cycle_tol must be > 0".into()));
        }
        if self.max_cycles == 0 {
            return Err(Error::InvalidParameter("max_cycles must be >= 1".into()));
        }
        if self.adiabatic_samples < 4 {
            return Err(Error::InvalidParameter("adiabatic_samples must be >= 4".into()));
        }
        if let Some(w) = self.relaxation_window {
            if !(w > 0.0) {
                return Err(Error::InvalidParameter("relaxation_window must be > 0".into()));
            }
        }
        Ok(())
    }

    fn relaxation_window(&self, p: &ModelParams) -> f64 {
        self.relaxation_window.unwrap_or_else(|| {
            let g = p.gamma_total();
            if g > 0.0 {
                10.0 / g
            } else {
                10.0 / p.omega
            }
        })
    }
}

struct Anderson {
    depth: usize,
    /// Leading components entering the least-squares residual.
    window: usize,
    g: VecDeque<Vec<C>>,
    f: VecDeque<Vec<C>>,
    best: f64,
}

impl Anderson {
    fn new(depth: usize, window: usize) -> Self {
        Anderson {
            depth,
            window,
            g: VecDeque::new(),
            f: VecDeque::new(),
            best: f64::INFINITY,
        }
    }

    fn reset(&mut self) {
        self.g.clear();
        self.f.clear();
        self.best = f64::INFINITY;
    }

    /// Next iterate from `x` and its image `gx`.
    fn next(&mut self, x: &[C], gx: Vec<C>) -> Vec<C> {
        if self.depth == 0 {
            return gx;
        }
        let f: Vec<C> = gx.iter().zip(x).take(self.window).map(|(a, b)| a - b).collect();
        let norm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e3 * self.best {
            self.reset();
        }
        self.best = self.best.min(norm);
        self.g.push_back(gx);
        self.f.push_back(f);
        if self.g.len() > self.depth + 1 {
            self.g.pop_front();
            self.f.pop_front();
        }
        let m = self.g.len() - 1;
        let last = self.g.len() - 1;
        if m == 0 {
            return self.g[last].clone();
        }
        let df: Vec<Vec<C>> = (0..m)
            .map(|i| self.f[i + 1].iter().zip(&self.f[i]).map(|(a, b)| a - b).collect())
            .collect();
        let dot = |a: &[C], b: &[C]| a.iter().zip(b).map(|(u, v)| (u.conj() * v).re).sum::<f64>();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for i in 0..m {
            for j in i..m {
                let v = dot(&df[i], &df[j]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            b[i] = dot(&df[i], &self.f[last]);
        }
        let reg = 1e-12 * a.trace().max(f64::MIN_POSITIVE);
        for i in 0..m {
            a[(i, i)] += reg;
        }
        let Some(gamma) = a.lu().solve(&b) else {
            let out = self.g[last].clone();
            self.reset();
            return out;
        };
        if gamma.iter().any(|v| !v.is_finite()) {
            let out = self.g[last].clone();
            self.reset();
            return out;
        }
        let mut out = self.g[last].clone();
        for i in 0..m {
            let c = gamma[i];
            for ((o, g1), g0) in out.iter_mut().zip(&self.g[i + 1]).zip(&self.g[i]) {
                *o -= c * (g1 - g0);
            }
        }
        out
    }
}

/// Finds `x = U(interval) x` starting from the current state, with time reset to 0 each pass.
///
/// The first pass is adaptive and fixes a uniform step count for the following
/// passes, which then apply one and the same linear map, as the extrapolation requires.
/// On success the dynamics holds the converged state at time 0.
pub fn fixed_point<D: Dynamics + ?Sized>(dynamics: &mut D, interval: f64, cfg: &ProtocolConfig) -> Result<Convergence> {
    let gamma = dynamics.params().gamma_total();
    dynamics.restart();
    let mut x = dynamics.vector();
    let mut mixer = Anderson::new(cfg.anderson_depth, dynamics.mixing_window());
    let mut residual = f64::INFINITY;
    let mut steps = 0;
    for k in 1..=cfg.max_cycles {
        dynamics.set_vector(&x, 0.0);
        let before = dynamics.sample();
        let taken = dynamics.steps_taken();
        if steps == 0 {
            dynamics.advance(interval)?;
        } else {
            dynamics.advance_uniform(interval, steps)?;
        }
        let after = dynamics.sample();
        let gx = dynamics.vector();
        residual = before.distance(&after, gamma);
        if !residual.is_finite() {
            break;
        }
        log::debug!("fixed point pass {k}: residual {residual:.3e}");
        if residual < cfg.cycle_tol {
            dynamics.set_vector(&gx, 0.0);
            return Ok(Convergence {
                cycles: k,
                residual,
                steps_per_pass: steps,
            });
        }
        if k == 1 {
            steps = dynamics.steps_taken() - taken;
            x = gx;
        } else {
            x = mixer.next(&x, gx);
        }
    }
    Err(Error::NonConvergence {
        cycles: cfg.max_cycles,
        residual,
    })
}

/// HEOM solver state for the protocol.
pub struct HeomDynamics {
    state: HierarchyState,
    propagator: Propagator,
}

/// Numerical settings of the HEOM solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeomSettings {
    pub pade_fermi: usize,
    pub pade_bose: usize,
    pub m_max: usize,
    pub n_max: usize,
    pub threshold: f64,
    pub rtol: f64,
}

impl Default for HeomSettings {
    fn default() -> Self {
        HeomSettings {
            pade_fermi: 20,
            pade_bose: 4,
            m_max: 2,
            n_max: 2,
            threshold: 1e-9,
            rtol: 1e-8,
        }
    }
}

impl HeomSettings {
    pub fn truncation(&self) -> Truncation {
        Truncation {
            m_max: self.m_max,
            n_max: self.n_max,
            threshold: self.threshold,
        }
    }
}

impl HeomDynamics {
    /// Builds the hierarchy for `p` with the level half filled and the oscillator in its ground state.
    pub fn new(p: &ModelParams, settings: &HeomSettings) -> Result<Self> {
        let exp = BathExpansion::new(p, settings.pade_fermi, settings.pade_bose)?;
        let h = Arc::new(Hierarchy::new(p, &exp, settings.truncation())?);
        Ok(Self::from_state(
            HierarchyState::product_state(h, 0.5),
            IntegratorConfig {
                rtol: settings.rtol,
                ..Default::default()
            },
        ))
    }

    pub fn from_state(state: HierarchyState, config: IntegratorConfig) -> Self {
        HeomDynamics {
            state,
            propagator: Propagator::new(config),
        }
    }

    pub fn state(&self) -> &HierarchyState {
        &self.state
    }
}

impl Dynamics for HeomDynamics {
    fn params(&self) -> &ModelParams {
        self.state.hierarchy().params()
    }

    fn time(&self) -> f64 {
        self.state.time
    }

    fn vector(&self) -> Vec<C> {
        self.state.data.clone()
    }

    fn set_vector(&mut self, x: &[C], time: f64) {
        self.state.data.copy_from_slice(x);
        self.state.time = time;
    }

    fn advance(&mut self, t1: f64) -> Result<()> {
        self.propagator.propagate(&mut self.state, t1)
    }

    fn sample(&self) -> Sample {
        let o = self.state.observables();
        Sample {
            population: o.population,
            displacement: o.displacement,
            occupation: o.occupation,
            current_l: self.state.lead_current(Lead::Left),
            current_r: self.state.lead_current(Lead::Right),
        }
    }

    fn set_level(&mut self, eps0: f64, amplitude: f64, frequency: f64) -> Result<()> {
        let h = self.state.hierarchy().with_level(eps0, amplitude, frequency)?;
        self.state.rebind(Arc::new(h))
    }

    fn mixing_window(&self) -> usize {
        self.state.hierarchy().ados()[0].len
    }

    fn steps_taken(&self) -> usize {
        self.propagator.integrator().accepted_steps
    }

    fn restart(&mut self) {
        self.propagator.restart();
    }

    fn advance_uniform(&mut self, t1: f64, steps: usize) -> Result<()> {
        self.propagator.propagate_uniform(&mut self.state, t1, steps).map(|_| ())
    }
}

/// Master-equation solver state for the protocol.
pub struct QmeDynamics {
    qme: Qme,
    state: QmeState,
    propagator: QmePropagator,
}

impl QmeDynamics {
    pub fn new(p: &ModelParams, rtol: f64) -> Result<Self> {
        Ok(QmeDynamics {
            qme: Qme::new(p)?,
            state: QmeState::product_state(p.n_osc, 0.5),
            propagator: QmePropagator::new(rtol),
        })
    }

    pub fn qme(&self) -> &Qme {
        &self.qme
    }

    pub fn state(&self) -> &QmeState {
        &self.state
    }
}

impl Dynamics for QmeDynamics {
    fn params(&self) -> &ModelParams {
        self.qme.params()
    }

    fn time(&self) -> f64 {
        self.state.time
    }

    fn vector(&self) -> Vec<C> {
        self.state.to_vec()
    }

    fn set_vector(&mut self, x: &[C], time: f64) {
        self.state.load(x);
        self.state.time = time;
    }

    fn advance(&mut self, t1: f64) -> Result<()> {
        self.propagator.propagate(&self.qme, &mut self.state, t1)
    }

    fn steps_taken(&self) -> usize {
        self.propagator.integrator().accepted_steps
    }

    fn restart(&mut self) {
        self.propagator.restart();
    }

    fn advance_uniform(&mut self, t1: f64, steps: usize) -> Result<()> {
        self.propagator
            .propagate_uniform(&self.qme, &mut self.state, t1, steps)
            .map(|_| ())
    }

    fn sample(&self) -> Sample {
        let o = self.qme.observables(&self.state);
        Sample {
            population: o.population,
            displacement: o.displacement,
            occupation: o.occupation,
            current_l: self.qme.lead_current(&self.state, Lead::Left),
            current_r: self.qme.lead_current(&self.state, Lead::Right),
        }
    }

    fn set_level(&mut self, eps0: f64, amplitude: f64, frequency: f64) -> Result<()> {
        let mut p = self.qme.params().clone();
        p.eps0 = eps0;
        p.drive_amplitude = amplitude;
        p.drive_frequency = frequency;
        self.qme = Qme::new(&p)?;
        Ok(())
    }

    /// Direct null-space solve of the undriven generator.
    fn relax(&mut self, eps0: f64, _cfg: &ProtocolConfig) -> Result<Convergence> {
        self.set_level(eps0, 0.0, 0.0)?;
        self.state = self.qme.stationary_state(0.0)?;
        Ok(Convergence::default())
    }
}

/// Channels sampled on a time grid, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        TimeSeries {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            times: Vec::new(),
            values: vec![Vec::new(); names.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends one row; times must increase strictly.
    pub fn push(&mut self, t: f64, row: &[f64]) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::InvalidParameter(format!(
                "row has {} values for {} channels",
                row.len(),
                self.names.len()
            )));
        }
        if self.times.last().is_some_and(|&last| t <= last) {
            return Err(Error::InvalidParameter(format!("time {t} does not increase")));
        }
        self.times.push(t);
        for (col, &v) in self.values.iter_mut().zip(row) {
            col.push(v);
        }
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }
}

/// Channel names of protocol time series.
pub const CHANNELS: [&str; 7] = [
    "population",
    "displacement",
    "occupation",
    "current_l",
    "current_r",
    "current",
    "power",
];

fn sample_row(s: &Sample, power: f64) -> [f64; 7] {
    [
        s.population,
        s.displacement,
        s.occupation,
        s.current_l,
        s.current_r,
        s.current(),
        power,
    ]
}

/// Discrete Fourier components `a_k = (1/N) Σ_j e^{-ikΩ_D t_j} O_j` for `k = 0..=N/2`.
///
/// The samples must cover exactly one period `2π/Ω_D` at uniform spacing.
pub fn fourier_components(times: &[f64], values: &[f64], omega_d: f64) -> Result<Vec<C>> {
    let n = times.len();
    if n < 2 || values.len() != n {
        return Err(Error::NonUniformSampling(format!(
            "need at least two samples with matching values, got {n} times and {} values",
            values.len()
        )));
    }
    if !(omega_d > 0.0) {
        return Err(Error::InvalidParameter("drive frequency must be > 0".into()));
    }
    let period = 2.0 * PI / omega_d;
    let dt = period / n as f64;
    for (j, &t) in times.iter().enumerate() {
        let expected = times[0] + j as f64 * dt;
        if (t - expected).abs() > 1e-9 * period {
            return Err(Error::NonUniformSampling(format!(
                "sample {j} at t = {t}, expected {expected} for {n} samples per period {period}"
            )));
        }
    }
    Ok((0..=n / 2)
        .map(|k| {
            values
                .iter()
                .zip(times)
                .map(|(&v, &t)| v * C::from_polar(1.0, -(k as f64) * omega_d * t))
                .sum::<C>()
                / n as f64
        })
        .collect())
}

/// Fundamental `a₁` of samples taken uniformly over one period starting at phase zero.
pub fn fundamental(values: &[f64]) -> C {
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(j, &v)| v * C::from_polar(1.0, -2.0 * PI * j as f64 / n))
        .sum::<C>()
        / n
}

/// Maps an angle to `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Phase of `a₁` relative to the reference `a₁`, in `(-π, π]`.
pub fn phase_from_components(a1: C, reference_a1: C) -> Result<f64> {
    for z in [a1, reference_a1] {
        if z.norm() < PHASE_FLOOR {
            return Err(Error::UndefinedPhase(z.norm()));
        }
    }
    Ok(wrap_phase(a1.arg() - reference_a1.arg()))
}

/// Phase shift of `series` against `reference`, both sampled uniformly over one period from phase zero.
pub fn phase_shift(series: &[f64], reference: &[f64]) -> Result<f64> {
    phase_from_components(fundamental(series), fundamental(reference))
}

/// Pointwise power `A_D Ω_D cos(Ω_D t)⟨d†d⟩` and its mean over the samples.
pub fn induced_power(times: &[f64], population: &[f64], amplitude: f64, omega_d: f64) -> (Vec<f64>, f64) {
    let p: Vec<f64> = times
        .iter()
        .zip(population)
        .map(|(&t, &n)| amplitude * omega_d * (omega_d * t).cos() * n)
        .collect();
    let mean = if p.is_empty() {
        0.0
    } else {
        p.iter().sum::<f64>() / p.len() as f64
    };
    (p, mean)
}

/// Summary of one observable over the limit cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    /// Cycle average `Ō`.
    pub average: f64,
    /// `max - min` over the cycle.
    pub amplitude: f64,
    /// `|a₁|`.
    pub fundamental: f64,
    /// Phase against the adiabatic reference; `None` when a fundamental vanishes.
    pub phase_shift: Option<f64>,
    /// `Δφ / Ω_D`.
    pub delay: Option<f64>,
}

impl ChannelSummary {
    fn new(values: &[f64], reference_a1: Option<C>, omega_d: f64) -> Self {
        let average = values.iter().sum::<f64>() / values.len() as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let a1 = fundamental(values);
        let phase_shift = reference_a1.and_then(|r| phase_from_components(a1, r).ok());
        ChannelSummary {
            average,
            amplitude: max - min,
            fundamental: a1.norm(),
            phase_shift,
            delay: phase_shift.map(|p| p / omega_d),
        }
    }
}

/// Result of a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleSummary {
    pub omega_d: f64,
    pub population: ChannelSummary,
    pub displacement: ChannelSummary,
    pub occupation: ChannelSummary,
    /// Cycle-averaged induced power `P̄`.
    pub power: f64,
    pub current_l: f64,
    pub current_r: f64,
    pub current: f64,
    /// Population phase minus displacement phase, in `(-π, π]`.
    pub relative_phase: Option<f64>,
    pub relaxation: Convergence,
    pub warm_up: Convergence,
    /// Largest channel change between the start and the end of the recorded period.
    pub periodicity_error: f64,
}

/// Quasi-static response: stationary states at frozen level energies `ε₀ + A_D sin θ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticReference {
    /// Drive phases `θ_j = 2πj/M` used as times (period `2π`).
    pub series: TimeSeries,
}

impl AdiabaticReference {
    /// Fundamental of a channel, `None` if the channel is unknown.
    pub fn fundamental(&self, channel: &str) -> Option<C> {
        self.series.channel(channel).map(fundamental)
    }
}

/// Solves the stationary state at each sampled drive phase, continuing from the current state.
pub fn adiabatic_reference<D: Dynamics + ?Sized>(
    dynamics: &mut D,
    p: &ModelParams,
    cfg: &ProtocolConfig,
) -> Result<AdiabaticReference> {
    cfg.validate()?;
    let m = cfg.adiabatic_samples;
    let mut series = TimeSeries::new(&CHANNELS);
    for j in 0..m {
        let theta = 2.0 * PI * j as f64 / m as f64;
        let eps = p.eps0 + p.drive_amplitude * theta.sin();
        dynamics.relax(eps, cfg)?;
        let s = dynamics.sample();
        series.push(theta, &sample_row(&s, 0.0))?;
    }
    Ok(AdiabaticReference { series })
}

/// Phase 1: the undriven stationary state of `p`.
pub fn relax_undriven<D: Dynamics + ?Sized>(dynamics: &mut D, p: &ModelParams, cfg: &ProtocolConfig) -> Result<Convergence> {
    cfg.validate()?;
    dynamics.relax(p.eps0, cfg)
}

/// Phases 2 and 3, starting from the state the dynamics currently holds.
pub fn drive_to_limit_cycle<D: Dynamics + ?Sized>(
    dynamics: &mut D,
    p: &ModelParams,
    cfg: &ProtocolConfig,
    reference: Option<&AdiabaticReference>,
    relaxation: Convergence,
) -> Result<(TimeSeries, LimitCycleSummary)> {
    cfg.validate()?;
    let omega_d = p.drive_frequency;
    if !(omega_d > 0.0) {
        return Err(Error::InvalidParameter("drive frequency must be > 0".into()));
    }
    let period = 2.0 * PI / omega_d;
    dynamics.set_level(p.eps0, p.drive_amplitude, omega_d)?;
    dynamics.set_vector(&dynamics.vector(), 0.0);
    let warm_up = fixed_point(dynamics, period, cfg)?;

    let n = cfg.samples_per_cycle;
    let mut series = TimeSeries::new(&CHANNELS);
    let mut first = Sample::default();
    let sub = warm_up.steps_per_pass.div_ceil(n);
    let step_to = |d: &mut D, t: f64| if sub == 0 { d.advance(t) } else { d.advance_uniform(t, sub) };
    for j in 0..n {
        let t = period * j as f64 / n as f64;
        step_to(dynamics, t)?;
        let s = dynamics.sample();
        if j == 0 {
            first = s;
        }
        let power = p.drive_amplitude * omega_d * (omega_d * t).cos() * s.population;
        series.push(t, &sample_row(&s, power))?;
    }
    step_to(dynamics, period)?;
    let periodicity_error = dynamics.sample().distance(&first, p.gamma_total());
    if periodicity_error > 10.0 * cfg.cycle_tol {
        log::warn!("recorded cycle at omega_d = {omega_d} repeats only to {periodicity_error:.3e}");
    }

    let col = |name: &str| series.channel(name).expect("protocol channel");
    let ref_a1 = |name: &str| reference.and_then(|r| r.fundamental(name));
    let population = ChannelSummary::new(col("population"), ref_a1("population"), omega_d);
    let displacement = ChannelSummary::new(col("displacement"), ref_a1("displacement"), omega_d);
    let occupation = ChannelSummary::new(col("occupation"), ref_a1("occupation"), omega_d);
    let mean = |name: &str| col(name).iter().sum::<f64>() / n as f64;
    let relative_phase = match (population.phase_shift, displacement.phase_shift) {
        (Some(a), Some(b)) => Some(wrap_phase(a - b)),
        _ => None,
    };
    let summary = LimitCycleSummary {
        omega_d,
        population,
        displacement,
        occupation,
        power: mean("power"),
        current_l: mean("current_l"),
        current_r: mean("current_r"),
        current: mean("current"),
        relative_phase,
        relaxation,
        warm_up,
        periodicity_error,
    };
    Ok((series, summary))
}

/// Full protocol: relaxation, adiabatic reference (if driven), warm-up, and one recorded cycle.
pub fn run_protocol<D: Dynamics + ?Sized>(
    dynamics: &mut D,
    p: &ModelParams,
    cfg: &ProtocolConfig,
) -> Result<(TimeSeries, LimitCycleSummary)> {
    let relaxation = relax_undriven(dynamics, p, cfg)?;
    let reference = if p.drive_amplitude != 0.0 {
        let start = dynamics.vector();
        let r = adiabatic_reference(dynamics, p, cfg)?;
        dynamics.set_level(p.eps0, 0.0, 0.0)?;
        dynamics.set_vector(&start, 0.0);
        Some(r)
    } else {
        None
    };
    drive_to_limit_cycle(dynamics, p, cfg, reference.as_ref(), relaxation)
}

/// Physical trajectory through all three phases without acceleration.
///
/// The undriven model is propagated over `[-t_init, 0)` from the current state, then
/// the drive acts for `cycles` periods. Sampling is `samples_per_cycle` points per period throughout.
pub fn trajectory<D: Dynamics + ?Sized>(
    dynamics: &mut D,
    p: &ModelParams,
    t_init: f64,
    cycles: usize,
    samples_per_cycle: usize,
) -> Result<TimeSeries> {
    let omega_d = p.drive_frequency;
    if !(omega_d > 0.0) || samples_per_cycle == 0 {
        return Err(Error::InvalidParameter(
            "trajectory needs a drive frequency > 0 and at least one sample per cycle".into(),
        ));
    }
    let dt = 2.0 * PI / omega_d / samples_per_cycle as f64;
    let mut series = TimeSeries::new(&CHANNELS);
    dynamics.set_level(p.eps0, 0.0, 0.0)?;
    let x = dynamics.vector();
    dynamics.set_vector(&x, -t_init);
    let n_init = (t_init / dt).ceil() as usize;
    for j in 0..n_init {
        let t = -t_init + j as f64 * dt;
        dynamics.advance(t)?;
        series.push(t, &sample_row(&dynamics.sample(), 0.0))?;
    }
    dynamics.advance(0.0)?;
    dynamics.set_level(p.eps0, p.drive_amplitude, omega_d)?;
    for j in 0..=cycles * samples_per_cycle {
        let t = j as f64 * dt;
        dynamics.advance(t)?;
        let s = dynamics.sample();
        let power = p.drive_amplitude * omega_d * (omega_d * t).cos() * s.population;
        series.push(t, &sample_row(&s, power))?;
    }
    Ok(series)
}
