//! Hierarchical equations of motion for the driven vibronic level.
//!
//! ADOs are stored in one flat complex array. The electronic level has only two
//! states, so an ADO whose fermionic indices carry net charge `q` is nonzero only
//! in the electronic blocks `(r, c)` with `r - c = q`: charge `0` keeps the
//! `(0,0)` and `(1,1)` oscillator blocks, charge `+1` keeps `(1,0)`, charge `-1`
//! keeps `(0,1)`. Each block is a row-major `n_osc × n_osc` matrix.
//!
//! Index `h = (α, s, q)` couples upward through `d^{s̄}` and downward through
//! `d^{s}`; the charge current is then `I_α = Γ_α Σ s Tr(d^{s̄} ρ_h)`, which is
//! what charge conservation of the root equation gives.

pub mod keys;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bathdecomp::BathExpansion;
use crate::error::{Error, Result};
use crate::model::{drive_energy, Lead, ModelParams, OscillatorBlocks, Sign, SparseSym};
use crate::ode::{DecaySegment, Integrator, IntegratorConfig, OdeSystem};

pub use keys::{enumerate_hierarchy, importance_value, AdoKey, FermionIndex, Truncation};

type C = Complex64;
const I: C = C { re: 0.0, im: 1.0 };
const ZERO: C = C { re: 0.0, im: 0.0 };

fn parity(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn axpy(alpha: C, x: &[C], y: &mut [C]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Electronic blocks stored for an ADO of the given charge, in storage order.
pub fn charge_blocks(charge: i32) -> &'static [(usize, usize)] {
    match charge {
        0 => &[(0, 0), (1, 1)],
        1 => &[(1, 0)],
        -1 => &[(0, 1)],
        _ => &[],
    }
}

/// Layout entry of one ADO.
#[derive(Debug, Clone)]
pub struct Ado {
    pub key: AdoKey,
    pub charge: i32,
    pub offset: usize,
    pub len: usize,
    /// `Σγ̃ + Σγ` of the key's indices.
    pub decay: C,
}

#[derive(Debug, Clone)]
struct UpFermion {
    child: usize,
    /// `-Γ_α` times the permutation sign of the appended index.
    coef: f64,
    sign: Sign,
}

#[derive(Debug, Clone)]
struct DownFermion {
    parent: usize,
    /// `-(-1)^l` with `l` the 1-based position of the removed index.
    coef: f64,
    sign: Sign,
    eta: C,
    eta_bar_conj: C,
}

#[derive(Debug, Clone)]
struct DownBoson {
    parent: usize,
    eta: C,
}

/// Retained hierarchy together with its coupling links.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    params: ModelParams,
    blocks: OscillatorBlocks,
    ados: Vec<Ado>,
    index: HashMap<AdoKey, usize>,
    up_f: Vec<Vec<UpFermion>>,
    down_f: Vec<Vec<DownFermion>>,
    up_b: Vec<Vec<usize>>,
    down_b: Vec<Vec<DownBoson>>,
    segments: Vec<DecaySegment>,
    total_len: usize,
    unfiltered_count: usize,
}

impl Hierarchy {
    pub fn new(p: &ModelParams, exp: &BathExpansion, trunc: Truncation) -> Result<Self> {
        p.validate()?;
        let keys = enumerate_hierarchy(exp, trunc, p.gamma_total(), p.bath_coupling)?;
        let unfiltered_count = keys::candidate_keys(exp, trunc.m_max, trunc.n_max).len();
        Self::from_keys(p, exp, keys, unfiltered_count)
    }

    /// Builds the hierarchy from an explicit key list (must contain the root and be downward closed).
    pub fn from_keys(p: &ModelParams, exp: &BathExpansion, keys: Vec<AdoKey>, unfiltered_count: usize) -> Result<Self> {
        let n2 = p.n_osc * p.n_osc;
        let mut index = HashMap::with_capacity(keys.len());
        let mut ados = Vec::with_capacity(keys.len());
        let mut offset = 0;
        for key in keys {
            let charge = key.charge();
            if charge.abs() > 1 {
                return Err(Error::Hierarchy(format!("key {key:?} has charge {charge}")));
            }
            let mut decay = ZERO;
            for &x in &key.h {
                let m = exp
                    .fermionic
                    .get(&(x.lead, x.sign))
                    .and_then(|v| v.get(x.q))
                    .ok_or_else(|| Error::Hierarchy(format!("no mode for {x:?}")))?;
                decay += m.gamma;
            }
            for &g in &key.g {
                decay += exp
                    .bosonic
                    .get(g)
                    .ok_or_else(|| Error::Hierarchy(format!("no bosonic mode {g}")))?
                    .gamma;
            }
            let len = charge_blocks(charge).len() * n2;
            index.insert(key.clone(), ados.len());
            ados.push(Ado {
                key,
                charge,
                offset,
                len,
                decay,
            });
            offset += len;
        }
        if !index.contains_key(&AdoKey::root()) {
            return Err(Error::Hierarchy("root key missing".into()));
        }

        let fidx = keys::fermion_indices(exp);
        let nb = exp.bosonic.len();
        let count = ados.len();
        let mut up_f = vec![Vec::new(); count];
        let mut down_f = vec![Vec::new(); count];
        let mut up_b = vec![Vec::new(); count];
        let mut down_b = vec![Vec::new(); count];
        for (i, ado) in ados.iter().enumerate() {
            let key = &ado.key;
            for &x in &fidx {
                if let Some((child, order)) = key.with_fermion(x) {
                    if let Some(&j) = index.get(&child) {
                        up_f[i].push(UpFermion {
                            child: j,
                            coef: -order * p.lead_gamma(x.lead),
                            sign: x.sign,
                        });
                    }
                }
            }
            for (l, &x) in key.h.iter().enumerate() {
                let parent = key.without_fermion(l);
                let j = *index
                    .get(&parent)
                    .ok_or_else(|| Error::Hierarchy(format!("missing parent {parent:?} of {key:?}")))?;
                let eta = exp.fermionic[&(x.lead, x.sign)][x.q].eta;
                let bar = x.flipped();
                let eta_bar = exp
                    .fermionic
                    .get(&(bar.lead, bar.sign))
                    .and_then(|v| v.get(bar.q))
                    .ok_or_else(|| Error::Hierarchy(format!("no conjugate mode for {x:?}")))?
                    .eta;
                down_f[i].push(DownFermion {
                    parent: j,
                    coef: -parity(l + 1),
                    sign: x.sign,
                    eta,
                    eta_bar_conj: eta_bar.conj(),
                });
            }
            for g in 0..nb {
                if let Some(&j) = index.get(&key.with_boson(g)) {
                    up_b[i].push(j);
                }
            }
            for (l, &g) in key.g.iter().enumerate() {
                let parent = key.without_boson(l);
                let j = *index
                    .get(&parent)
                    .ok_or_else(|| Error::Hierarchy(format!("missing parent {parent:?} of {key:?}")))?;
                down_b[i].push(DownBoson {
                    parent: j,
                    eta: exp.bosonic[g].eta,
                });
            }
        }
        let segments = ados
            .iter()
            .filter(|a| a.decay != ZERO)
            .map(|a| DecaySegment {
                start: a.offset,
                end: a.offset + a.len,
                rate: a.decay,
            })
            .collect();
        Ok(Hierarchy {
            params: p.clone(),
            blocks: OscillatorBlocks::new(p),
            ados,
            index,
            up_f,
            down_f,
            up_b,
            down_b,
            segments,
            total_len: offset,
            unfiltered_count,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Same hierarchy with a different level energy and drive.
    ///
    /// The bath expansion and the oscillator blocks do not depend on these, so
    /// every link is reused.
    pub fn with_level(&self, eps0: f64, amplitude: f64, frequency: f64) -> Result<Self> {
        let mut h = self.clone();
        h.params.eps0 = eps0;
        h.params.drive_amplitude = amplitude;
        h.params.drive_frequency = frequency;
        h.params.validate()?;
        Ok(h)
    }

    pub fn ados(&self) -> &[Ado] {
        &self.ados
    }

    pub fn len(&self) -> usize {
        self.ados.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ados.is_empty()
    }

    /// Number of complex scalars in a state vector.
    pub fn state_len(&self) -> usize {
        self.total_len
    }

    /// Candidate count before importance filtering.
    pub fn unfiltered_count(&self) -> usize {
        self.unfiltered_count
    }

    pub fn position(&self, key: &AdoKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Number of ADOs per `(m, n)` tier.
    pub fn tier_counts(&self) -> std::collections::BTreeMap<(usize, usize), usize> {
        let mut out = std::collections::BTreeMap::new();
        for a in &self.ados {
            *out.entry(a.key.tiers()).or_insert(0) += 1;
        }
        out
    }

    fn n_osc(&self) -> usize {
        self.params.n_osc
    }

    fn block_range(&self, ado: usize, r: usize, c: usize) -> std::ops::Range<usize> {
        let a = &self.ados[ado];
        let n2 = self.n_osc() * self.n_osc();
        let k = local_block(a.charge, r, c);
        a.offset + k * n2..a.offset + (k + 1) * n2
    }

    fn h_block(&self, r: usize) -> &SparseSym {
        if r == 0 {
            &self.blocks.h0
        } else {
            &self.blocks.h1
        }
    }

    /// Explicit part of the derivative of ADO `i` (everything except its scalar decay).
    fn ado_rhs(&self, i: usize, t: f64, x: &[C], out: &mut [C]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        let a = &self.ados[i];
        let n = self.n_osc();
        let n2 = n * n;
        let eps = drive_energy(&self.params, t);
        let blk = |j: usize, r: usize, c: usize| &x[self.block_range(j, r, c)];
        let loc = |r: usize, c: usize| {
            let k = local_block(a.charge, r, c);
            k * n2..(k + 1) * n2
        };

        for (k, &(r, c)) in charge_blocks(a.charge).iter().enumerate() {
            let xs = &x[a.offset + k * n2..a.offset + (k + 1) * n2];
            let o = &mut out[k * n2..(k + 1) * n2];
            self.h_block(r).left_mul_acc(xs, -I, o);
            self.h_block(c).right_mul_acc(xs, I, o);
            let de = eps * (r as f64 - c as f64);
            if de != 0.0 {
                axpy(-I * de, xs, o);
            }
        }

        let n_f = a.key.h.len();
        // A: Γ (d^{s̄} X + (-1)^{n+1} X d^{s̄}) from children
        let pc = parity(n_f + 1);
        for u in &self.up_f[i] {
            let coef = C::new(u.coef, 0.0);
            let j = u.child;
            match (u.sign, a.charge) {
                (Sign::Plus, 0) => {
                    let x10 = blk(j, 1, 0);
                    axpy(coef, x10, &mut out[loc(0, 0)]);
                    axpy(coef * pc, x10, &mut out[loc(1, 1)]);
                }
                (Sign::Plus, -1) => {
                    axpy(coef, blk(j, 1, 1), &mut out[loc(0, 1)]);
                    axpy(coef * pc, blk(j, 0, 0), &mut out[loc(0, 1)]);
                }
                (Sign::Minus, 0) => {
                    let x01 = blk(j, 0, 1);
                    axpy(coef, x01, &mut out[loc(1, 1)]);
                    axpy(coef * pc, x01, &mut out[loc(0, 0)]);
                }
                (Sign::Minus, 1) => {
                    axpy(coef, blk(j, 0, 0), &mut out[loc(1, 0)]);
                    axpy(coef * pc, blk(j, 1, 1), &mut out[loc(1, 0)]);
                }
                _ => unreachable!("child charge out of range"),
            }
        }

        // C: (-1)^{n-1} η d^{s} P - η*_{h̄} P d^{s} from parents
        let pp = parity(n_f.saturating_sub(1));
        for dn in &self.down_f[i] {
            let j = dn.parent;
            let left = dn.coef * pp * dn.eta;
            let right = -dn.coef * dn.eta_bar_conj;
            match (dn.sign, a.charge) {
                (Sign::Plus, 1) => {
                    axpy(left, blk(j, 0, 0), &mut out[loc(1, 0)]);
                    axpy(right, blk(j, 1, 1), &mut out[loc(1, 0)]);
                }
                (Sign::Plus, 0) => {
                    let p01 = blk(j, 0, 1);
                    axpy(left, p01, &mut out[loc(1, 1)]);
                    axpy(right, p01, &mut out[loc(0, 0)]);
                }
                (Sign::Minus, -1) => {
                    axpy(left, blk(j, 1, 1), &mut out[loc(0, 1)]);
                    axpy(right, blk(j, 0, 0), &mut out[loc(0, 1)]);
                }
                (Sign::Minus, 0) => {
                    let p10 = blk(j, 1, 0);
                    axpy(left, p10, &mut out[loc(0, 0)]);
                    axpy(right, p10, &mut out[loc(1, 1)]);
                }
                _ => unreachable!("parent charge out of range"),
            }
        }

        // bosonic: -iΛ[Q, X] from children, -i(η̃ Q P - η̃* P Q) from parents
        let q = &self.blocks.q;
        let lam = self.params.bath_coupling;
        for &j in &self.up_b[i] {
            for (k, &(r, c)) in charge_blocks(a.charge).iter().enumerate() {
                let xs = blk(j, r, c);
                let o = &mut out[k * n2..(k + 1) * n2];
                q.left_mul_acc(xs, -I * lam, o);
                q.right_mul_acc(xs, I * lam, o);
            }
        }
        for dn in &self.down_b[i] {
            for (k, &(r, c)) in charge_blocks(a.charge).iter().enumerate() {
                let ps = blk(dn.parent, r, c);
                let o = &mut out[k * n2..(k + 1) * n2];
                q.left_mul_acc(ps, -I * dn.eta, o);
                q.right_mul_acc(ps, I * dn.eta.conj(), o);
            }
        }
    }

    /// Writes the full derivative (including decays) into `out`.
    pub fn rhs(&self, t: f64, x: &[C], out: &mut [C]) {
        OdeSystem::rhs(self, t, x, out)
    }

    fn split_outputs<'a>(&self, out: &'a mut [C]) -> Vec<&'a mut [C]> {
        let mut chunks = Vec::with_capacity(self.ados.len());
        let mut rest = out;
        for a in &self.ados {
            let (head, tail) = rest.split_at_mut(a.len);
            chunks.push(head);
            rest = tail;
        }
        chunks
    }
}

fn local_block(charge: i32, r: usize, c: usize) -> usize {
    match (charge, r, c) {
        (0, 0, 0) | (1, 1, 0) | (-1, 0, 1) => 0,
        (0, 1, 1) => 1,
        _ => panic!("block ({r},{c}) not stored for charge {charge}"),
    }
}

impl OdeSystem for Hierarchy {
    fn len(&self) -> usize {
        self.total_len
    }

    fn explicit_rhs(&self, t: f64, x: &[C], out: &mut [C]) {
        let chunks = self.split_outputs(out);
        chunks
            .into_par_iter()
            .enumerate()
            .with_min_len(8)
            .for_each(|(i, o)| self.ado_rhs(i, t, x, o));
    }

    fn decay_segments(&self) -> &[DecaySegment] {
        &self.segments
    }
}

/// Electronic population, displacement and vibrational occupation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub population: f64,
    pub displacement: f64,
    pub occupation: f64,
}

/// All ADOs of a hierarchy at one time.
#[derive(Debug, Clone)]
pub struct HierarchyState {
    pub time: f64,
    pub data: Vec<C>,
    hierarchy: Arc<Hierarchy>,
}

impl HierarchyState {
    pub fn zeros(hierarchy: Arc<Hierarchy>, time: f64) -> Self {
        HierarchyState {
            time,
            data: vec![ZERO; hierarchy.state_len()],
            hierarchy,
        }
    }

    /// Root set to `ρ_el ⊗ |0⟩⟨0|` with occupation `population`; all other ADOs zero.
    pub fn product_state(hierarchy: Arc<Hierarchy>, population: f64) -> Self {
        let mut s = Self::zeros(hierarchy, 0.0);
        let h = s.hierarchy.clone();
        s.data[h.block_range(0, 0, 0).start] = C::new(1.0 - population, 0.0);
        s.data[h.block_range(0, 1, 1).start] = C::new(population, 0.0);
        s
    }

    /// Root set to the given `2·n_osc` density matrix (occupied and unoccupied blocks only).
    pub fn from_density_matrix(hierarchy: Arc<Hierarchy>, rho: &DMatrix<C>, time: f64) -> Result<Self> {
        let n = hierarchy.n_osc();
        if rho.nrows() != 2 * n || rho.ncols() != 2 * n {
            return Err(Error::InvalidParameter(format!(
                "density matrix must be {}x{}",
                2 * n,
                2 * n
            )));
        }
        let mut s = Self::zeros(hierarchy, time);
        let h = s.hierarchy.clone();
        for el in 0..2 {
            let r = h.block_range(0, el, el);
            for i in 0..n {
                for j in 0..n {
                    s.data[r.start + i * n + j] = rho[(el * n + i, el * n + j)];
                }
            }
        }
        Ok(s)
    }

    pub fn hierarchy(&self) -> &Arc<Hierarchy> {
        &self.hierarchy
    }

    /// Moves the state onto another hierarchy with the same layout.
    pub fn rebind(&mut self, hierarchy: Arc<Hierarchy>) -> Result<()> {
        if hierarchy.state_len() != self.data.len() || hierarchy.len() != self.hierarchy.len() {
            return Err(Error::Hierarchy("rebind to a hierarchy with a different layout".into()));
        }
        self.hierarchy = hierarchy;
        Ok(())
    }

    /// Full `2·n_osc` matrix of the ADO with the given key.
    pub fn entry(&self, key: &AdoKey) -> Option<DMatrix<C>> {
        let h = &self.hierarchy;
        let i = h.position(key)?;
        let n = h.n_osc();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for &(r, c) in charge_blocks(h.ados[i].charge) {
            let b = &self.data[h.block_range(i, r, c)];
            for a in 0..n {
                for bcol in 0..n {
                    m[(r * n + a, c * n + bcol)] = b[a * n + bcol];
                }
            }
        }
        Some(m)
    }

    /// Reduced density matrix of the system.
    pub fn density_matrix(&self) -> DMatrix<C> {
        self.entry(&AdoKey::root()).expect("root always present")
    }

    pub fn trace(&self) -> C {
        let h = &self.hierarchy;
        let n = h.n_osc();
        [(0, 0), (1, 1)]
            .iter()
            .map(|&(r, c)| {
                let b = &self.data[h.block_range(0, r, c)];
                (0..n).map(|k| b[k * n + k]).sum::<C>()
            })
            .sum()
    }

    pub fn observables(&self) -> Observables {
        let h = &self.hierarchy;
        let n = h.n_osc();
        let x00 = &self.data[h.block_range(0, 0, 0)];
        let x11 = &self.data[h.block_range(0, 1, 1)];
        let mut population = 0.0;
        let mut occupation = 0.0;
        let mut displacement = 0.0;
        for k in 0..n {
            population += x11[k * n + k].re;
            occupation += k as f64 * (x00[k * n + k].re + x11[k * n + k].re);
            if k + 1 < n {
                let s = ((k + 1) as f64).sqrt();
                // Tr(Q X) with Q_{k,k+1} = Q_{k+1,k} = sqrt(k+1)
                displacement += s * (x00[(k + 1) * n + k].re + x00[k * n + k + 1].re);
                displacement += s * (x11[(k + 1) * n + k].re + x11[k * n + k + 1].re);
            }
        }
        Observables {
            population,
            displacement,
            occupation,
        }
    }

    /// Current `I_α = Γ_α Σ_h s_h Tr(d^{s̄_h} ρ_h)` over first-tier ADOs of lead `α`.
    ///
    /// Positive when electrons flow from the lead into the level.
    pub fn lead_current(&self, lead: Lead) -> f64 {
        let h = &self.hierarchy;
        let n = h.n_osc();
        let gamma = h.params.lead_gamma(lead);
        let mut acc = ZERO;
        for u in &h.up_f[0] {
            let a = &h.ados[u.child];
            let x = a.key.h[0];
            if x.lead != lead || !a.key.g.is_empty() {
                continue;
            }
            let b = &self.data[a.offset..a.offset + a.len];
            let tr: C = (0..n).map(|k| b[k * n + k]).sum();
            acc += tr * x.sign.value();
        }
        gamma * acc.re
    }

    /// Symmetrized current `(I_L - I_R) / 2`.
    pub fn current(&self) -> f64 {
        0.5 * (self.lead_current(Lead::Left) - self.lead_current(Lead::Right))
    }

    /// Derivative of the state at its own time.
    pub fn derivative(&self) -> Vec<C> {
        let mut out = vec![ZERO; self.data.len()];
        self.hierarchy.rhs(self.time, &self.data, &mut out);
        out
    }
}

/// Time propagator of a hierarchy state.
pub struct Propagator {
    integrator: Integrator,
}

impl Propagator {
    pub fn new(config: IntegratorConfig) -> Self {
        Propagator {
            integrator: Integrator::new(config),
        }
    }

    pub fn restart(&mut self) {
        self.integrator.restart();
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integrator
    }

    /// Advances `state` to `t1`.
    pub fn propagate(&mut self, state: &mut HierarchyState, t1: f64) -> Result<()> {
        if t1 < state.time {
            return Err(Error::InvalidParameter(format!(
                "cannot propagate backwards from {} to {t1}",
                state.time
            )));
        }
        let h = state.hierarchy.clone();
        self.integrator.integrate(h.as_ref(), state.time, t1, &mut state.data)?;
        state.time = t1;
        Ok(())
    }

    /// Advances `state` to `t1` in `steps` equal steps without error control.
    ///
    /// Returns the largest normalized error estimate of the steps taken.
    pub fn propagate_uniform(&mut self, state: &mut HierarchyState, t1: f64, steps: usize) -> Result<f64> {
        if t1 < state.time {
            return Err(Error::InvalidParameter(format!(
                "cannot propagate backwards from {} to {t1}",
                state.time
            )));
        }
        let h = state.hierarchy.clone();
        let worst = self.integrator.integrate_uniform(h.as_ref(), state.time, t1, steps, &mut state.data)?;
        state.time = t1;
        Ok(worst)
    }

    /// Advances through every time in `times` (ascending), calling `visit` at each.
    pub fn propagate_sampled(
        &mut self,
        state: &mut HierarchyState,
        times: &[f64],
        mut visit: impl FnMut(&HierarchyState),
    ) -> Result<()> {
        for &t in times {
            self.propagate(state, t)?;
            visit(state);
        }
        Ok(())
    }
}

/// Builds the hierarchy and an initial product state in one call.
pub fn setup(
    p: &ModelParams,
    pade_fermi: usize,
    pade_bose: usize,
    trunc: Truncation,
) -> Result<(Arc<Hierarchy>, HierarchyState)> {
    let exp = BathExpansion::new(p, pade_fermi, pade_bose)?;
    let h = Arc::new(Hierarchy::new(p, &exp, trunc)?);
    let s = HierarchyState::product_state(h.clone(), 0.5);
    Ok((h, s))
}
