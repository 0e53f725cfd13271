//! Exponential expansions of the free-bath correlation functions.
//!
//! The Fermi and Bose functions are replaced by `[N-1/N]` Padé sum-over-poles
//! forms; closing the frequency integrals in the appropriate half plane then
//! yields a finite sum `C(t) = prefactor · Σ_k η_k e^{-γ_k t}` for `t > 0`.
//!
//! Bose convention: the `ω = 0` pole of `1/(1-e^{-x})` is kept analytically
//! (`1/x + 1/2 + Padé remainder`). The Ohmic density vanishes linearly at
//! `ω = 0`, so that pole never contributes a mode.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Lead, ModelParams, Sign};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Pole separation below which a Padé pole is treated as colliding with a spectral-density pole.
pub const POLE_COLLISION_EV: f64 = 1e-8;

/// One `(residue, pole)` term of a Padé sum-over-poles expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadePole {
    pub residue: f64,
    pub pole: f64,
}

/// One term `η e^{-γ t}` of a correlation-function expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionMode {
    pub eta: Complex64,
    pub gamma: Complex64,
}

impl ExpansionMode {
    pub fn value(&self, t: f64) -> Complex64 {
        self.eta * (-self.gamma * t).exp()
    }
}

/// Evaluates `Σ_k η_k e^{-γ_k t}`.
pub fn reconstruct(modes: &[ExpansionMode], t: f64) -> Complex64 {
    modes.iter().map(|m| m.value(t)).sum()
}

fn hu_xu_yan(n: usize, b: impl Fn(usize) -> f64) -> Result<Vec<PadePole>> {
    if n == 0 {
        return Err(Error::Decomposition("Padé count must be >= 1".into()));
    }
    let positive_eigs = |size: usize, shift: usize| -> Result<Vec<f64>> {
        let mut m = DMatrix::<f64>::zeros(size, size);
        for i in 0..size.saturating_sub(1) {
            // 1-based: Λ_{m,m+1} = 1/sqrt(b_{m+shift} b_{m+1+shift})
            let v = 1.0 / (b(i + 1 + shift) * b(i + 2 + shift)).sqrt();
            m[(i, i + 1)] = v;
            m[(i + 1, i)] = v;
        }
        let eig = SymmetricEigen::try_new(m, 1e-15, 10_000)
            .ok_or_else(|| Error::Decomposition("tridiagonal eigen-solver did not converge".into()))?;
        let mut pos: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&v| v > 1e-12).collect();
        pos.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(pos)
    };
    let xi: Vec<f64> = positive_eigs(2 * n, 0)?.iter().map(|e| 2.0 / e).collect();
    let zeta: Vec<f64> = if n > 1 {
        positive_eigs(2 * n - 1, 1)?.iter().map(|e| 2.0 / e).collect()
    } else {
        Vec::new()
    };
    if xi.len() != n || zeta.len() != n - 1 {
        return Err(Error::Decomposition(format!(
            "unexpected eigenvalue count ({} poles, {} zeros) for N = {n}",
            xi.len(),
            zeta.len()
        )));
    }
    let pref = 0.5 * n as f64 * b(n + 1);
    let poles = xi
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let x2 = xj * xj;
            // pair factors in sorted order so the running product stays O(1)
            let others = xi.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, xk)| xk);
            let ratio: f64 = zeta
                .iter()
                .zip(others)
                .map(|(z, xk)| (z * z - x2) / (xk * xk - x2))
                .product();
            PadePole {
                residue: pref * ratio,
                pole: xj,
            }
        })
        .collect();
    Ok(poles)
}

/// `[N-1/N]` Padé poles of the Fermi function:
/// `1/(e^x+1) ≈ 1/2 - Σ_q κ_q 2x/(x²+ζ_q²)`, poles sorted ascending.
pub fn pade_fermi(n: usize) -> Result<Vec<PadePole>> {
    hu_xu_yan(n, |m| 2.0 * m as f64 - 1.0)
}

/// `[N-1/N]` Padé poles of the Bose function:
/// `1/(1-e^{-x}) ≈ 1/x + 1/2 + Σ_k κ_k 2x/(x²+ξ_k²)`, poles sorted ascending.
pub fn pade_bose(n: usize) -> Result<Vec<PadePole>> {
    hu_xu_yan(n, |m| 2.0 * m as f64 + 1.0)
}

/// Padé Fermi function at a complex dimensionless argument.
pub fn fermi_pade_eval(poles: &[PadePole], x: Complex64) -> Complex64 {
    let mut f = Complex64::new(0.5, 0.0);
    for p in poles {
        f -= p.residue * 2.0 * x / (x * x + p.pole * p.pole);
    }
    f
}

/// Padé Bose factor `1/(1-e^{-x})` at a complex dimensionless argument.
pub fn bose_pade_eval(poles: &[PadePole], x: Complex64) -> Complex64 {
    let mut f = 1.0 / x + 0.5;
    for p in poles {
        f += p.residue * 2.0 * x / (x * x + p.pole * p.pole);
    }
    f
}

fn separate(pole_ev: f64, other_ev: f64) -> f64 {
    if (pole_ev - other_ev).abs() < POLE_COLLISION_EV {
        pole_ev + 1e3 * POLE_COLLISION_EV
    } else {
        pole_ev
    }
}

/// Modes of `C^s_α(t) = Γ_α Σ_q η_{α,q} e^{-γ_{α,s,q} t}` (prefactor `Γ_α` not included).
///
/// Mode 0 comes from the Lorentzian pole at `ε = μ_α + s·iD_α`; modes `1..=N`
/// from the Padé poles of `f(s(ε-μ_α))`.
pub fn fermionic_modes(p: &ModelParams, lead: Lead, sign: Sign, n: usize) -> Result<Vec<ExpansionMode>> {
    let t = p.lead_temperature(lead);
    if t <= 0.0 {
        return Err(Error::InvalidParameter("lead temperature must be > 0".into()));
    }
    let d = p.lead_bandwidth(lead);
    let mu = p.lead_mu(lead);
    let s = sign.value();
    let poles = pade_fermi(n)?;
    let mut modes = Vec::with_capacity(n + 1);
    modes.push(ExpansionMode {
        eta: 0.5 * d * fermi_pade_eval(&poles, I * (d / t)),
        gamma: Complex64::new(d, -s * mu),
    });
    for pole in &poles {
        let nu = separate(pole.pole * t, d);
        let lorentz = d * d / (d * d - nu * nu);
        modes.push(ExpansionMode {
            eta: -I * pole.residue * t * lorentz,
            gamma: Complex64::new(nu, -s * mu),
        });
    }
    Ok(modes)
}

/// Modes of `C̃(t) = Λ Σ_p η̃_p e^{-γ̃_p t}` (prefactor `Λ` not included).
///
/// Mode 0 comes from the cutoff pole at `ω = -iω_c`, the rest from the Padé poles
/// of the Bose factor.
pub fn bosonic_modes(p: &ModelParams, n: usize) -> Result<Vec<ExpansionMode>> {
    let t = p.temperature_bath;
    if t <= 0.0 {
        return Err(Error::InvalidParameter("bath temperature must be > 0".into()));
    }
    let wc = p.bath_cutoff;
    let poles = pade_bose(n)?;
    let mut modes = Vec::with_capacity(n + 1);
    let x0 = Complex64::new(0.0, -wc / t);
    modes.push(ExpansionMode {
        eta: -I * (wc * wc / p.omega) * bose_pade_eval(&poles, x0),
        gamma: Complex64::new(wc, 0.0),
    });
    for pole in &poles {
        let nu = separate(pole.pole * t, wc);
        let eta = -2.0 * pole.residue * t * nu * wc * wc / (p.omega * (wc * wc - nu * nu));
        modes.push(ExpansionMode {
            eta: Complex64::new(eta, 0.0),
            gamma: Complex64::new(nu, 0.0),
        });
    }
    Ok(modes)
}

/// All correlation-function expansions of one parameter set.
#[derive(Debug, Clone)]
pub struct BathExpansion {
    pub fermionic: BTreeMap<(Lead, Sign), Vec<ExpansionMode>>,
    pub bosonic: Vec<ExpansionMode>,
    pub pade_count_fermi: usize,
    pub pade_count_bose: usize,
}

impl BathExpansion {
    /// Builds the expansions; leads with `Γ_α = 0` and a bath with `Λ = 0` contribute no modes.
    pub fn new(p: &ModelParams, pade_count_fermi: usize, pade_count_bose: usize) -> Result<Self> {
        Self::with_cache(p, pade_count_fermi, pade_count_bose, None)
    }

    pub fn with_cache(
        p: &ModelParams,
        pade_count_fermi: usize,
        pade_count_bose: usize,
        cache: Option<&ExpansionCache>,
    ) -> Result<Self> {
        p.validate()?;
        let mut fermionic = BTreeMap::new();
        for lead in Lead::ALL {
            if p.lead_gamma(lead) == 0.0 {
                continue;
            }
            for sign in Sign::ALL {
                let modes = match cache {
                    Some(c) => c.fermionic(p, lead, sign, pade_count_fermi)?,
                    None => Arc::new(fermionic_modes(p, lead, sign, pade_count_fermi)?),
                };
                fermionic.insert((lead, sign), modes.as_ref().clone());
            }
        }
        let bosonic = if p.bath_coupling > 0.0 {
            bosonic_modes(p, pade_count_bose)?
        } else {
            Vec::new()
        };
        Ok(BathExpansion {
            fermionic,
            bosonic,
            pade_count_fermi,
            pade_count_bose,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.fermionic.values().all(|v| v.is_empty()) && self.bosonic.is_empty()
    }

    /// Largest `Re γ` over all modes.
    pub fn fastest_rate(&self) -> f64 {
        self.fermionic
            .values()
            .flatten()
            .chain(self.bosonic.iter())
            .map(|m| m.gamma.re)
            .fold(0.0, f64::max)
    }
}

/// Smallest Padé count whose fermionic reconstruction matches a high-order reference
/// to relative accuracy `tol` on `t ∈ [0, 10/max(Γ, T)]`.
pub fn auto_pade_count(p: &ModelParams, tol: f64, max_count: usize) -> Result<usize> {
    const REFERENCE: usize = 200;
    let scale = p.gamma_total().max(p.temperature_l.max(p.temperature_r));
    let t_max = 10.0 / scale;
    let grid: Vec<f64> = (0..=400).map(|k| t_max * k as f64 / 400.0).collect();
    let mut refs = Vec::new();
    for lead in Lead::ALL {
        let modes = fermionic_modes(p, lead, Sign::Plus, REFERENCE)?;
        let vals: Vec<Complex64> = grid.iter().map(|&t| reconstruct(&modes, t)).collect();
        refs.push((lead, vals));
    }
    for n in 1..=max_count {
        let ok = refs.iter().all(|(lead, vals)| {
            let modes = match fermionic_modes(p, *lead, Sign::Plus, n) {
                Ok(m) => m,
                Err(_) => return false,
            };
            let norm = vals[0].norm().max(1e-300);
            grid.iter()
                .zip(vals)
                .all(|(&t, v)| (reconstruct(&modes, t) - v).norm() / norm < tol)
        });
        if ok {
            return Ok(n);
        }
    }
    Err(Error::Decomposition(format!(
        "no Padé count up to {max_count} reaches reconstruction tolerance {tol:e}"
    )))
}

type CacheKey = (Lead, Sign, u64, u64, u64, usize);

/// Shared cache of fermionic expansions keyed by `(α, s, μ_α, T_α, D_α, N)`.
#[derive(Debug, Default)]
pub struct ExpansionCache {
    inner: RwLock<HashMap<CacheKey, Arc<Vec<ExpansionMode>>>>,
}

impl ExpansionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fermionic(&self, p: &ModelParams, lead: Lead, sign: Sign, n: usize) -> Result<Arc<Vec<ExpansionMode>>> {
        let key = (
            lead,
            sign,
            p.lead_mu(lead).to_bits(),
            p.lead_temperature(lead).to_bits(),
            p.lead_bandwidth(lead).to_bits(),
            n,
        );
        if let Some(v) = self.inner.read().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let modes = Arc::new(fermionic_modes(p, lead, sign, n)?);
        self.inner.write().unwrap().entry(key).or_insert_with(|| modes.clone());
        Ok(modes)
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::fermi;

    #[test]
    fn single_pole_schemes() {
        let f = pade_fermi(1).unwrap();
        assert!((f[0].pole - 12f64.sqrt()).abs() < 1e-12);
        assert!((f[0].residue - 1.5).abs() < 1e-12);
        let b = pade_bose(1).unwrap();
        assert!((b[0].pole - 60f64.sqrt()).abs() < 1e-12);
        assert!((b[0].residue - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fermi_reconstruction() {
        for n in [1, 5, 30] {
            let poles = pade_fermi(n).unwrap();
            assert_eq!(fermi_pade_eval(&poles, Complex64::new(0.0, 0.0)).re, 0.5);
        }
        let poles = pade_fermi(30).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=4000 {
            let x = -20.0 + 40.0 * k as f64 / 4000.0;
            worst = worst.max((fermi_pade_eval(&poles, x.into()).re - fermi(x)).abs());
        }
        assert!(worst < 1e-10, "worst {worst:e}");
        // N = 1 regression baseline at x = 5: 1/2 - 30/37 vs exact
        let one = pade_fermi(1).unwrap();
        let err = fermi_pade_eval(&one, 5.0.into()).re - fermi(5.0);
        let expect = 0.5 - 15.0 / 37.0 - fermi(5.0);
        assert!((err - expect).abs() < 1e-14);
        assert!((err - 0.087_901_743_670_309_71).abs() < 1e-12);
    }

    #[test]
    fn bose_reconstruction() {
        let poles = pade_bose(30).unwrap();
        assert!(poles.iter().all(|p| p.residue > 0.0));
        for k in 0..=2000 {
            let x = 0.1 + 19.9 * k as f64 / 2000.0;
            let exact = 1.0 / (1.0 - (-x).exp());
            let approx = bose_pade_eval(&poles, x.into()).re;
            assert!(((approx - exact) / exact).abs() < 1e-8, "x={x}");
        }
        // pole-subtracted remainder is finite at the origin
        let rem = bose_pade_eval(&poles, 1e-9.into()).re - 1e9;
        assert!(rem.is_finite() && (rem - 0.5).abs() < 1e-6);
    }

    #[test]
    fn every_mode_decays() {
        let p = ModelParams {
            bath_coupling: 0.01,
            ..ModelParams::default()
        }
        .with_bias(0.6);
        let exp = BathExpansion::new(&p, 20, 4).unwrap();
        for m in exp.fermionic.values().flatten().chain(&exp.bosonic) {
            assert!(m.gamma.re > 0.0);
        }
        assert_eq!(exp.fermionic.len(), 4);
        assert_eq!(exp.bosonic.len(), 5);
    }

    #[test]
    fn particle_hole_symmetric_leads() {
        // at μ = 0 the substitution ε → -ε maps C^- onto C^+
        let p = ModelParams::default();
        let plus = fermionic_modes(&p, Lead::Left, Sign::Plus, 20).unwrap();
        let minus = fermionic_modes(&p, Lead::Left, Sign::Minus, 20).unwrap();
        for t in [0.0, 0.5, 3.0, 40.0] {
            assert!((reconstruct(&plus, t) - reconstruct(&minus, t)).norm() < 1e-12);
        }
    }

    #[test]
    fn cache_reuses_entries() {
        let cache = ExpansionCache::new();
        let p = ModelParams::default();
        let a = BathExpansion::with_cache(&p, 10, 2, Some(&cache)).unwrap();
        let _b = BathExpansion::with_cache(&p, 10, 2, Some(&cache)).unwrap();
        assert_eq!(cache.len(), 4);
        let q = p.clone().with_bias(0.1);
        let _c = BathExpansion::with_cache(&q, 10, 2, Some(&cache)).unwrap();
        assert_eq!(cache.len(), 8);
        assert_eq!(a.fermionic[&(Lead::Left, Sign::Plus)].len(), 11);
    }

    #[test]
    fn auto_count_is_monotone_in_tolerance() {
        let p = ModelParams::default();
        let loose = auto_pade_count(&p, 1e-3, 200).unwrap();
        let tight = auto_pade_count(&p, 1e-6, 200).unwrap();
        assert!(loose <= tight);
    }
}
