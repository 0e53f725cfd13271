//! ADO labels, importance estimates and hierarchy enumeration.

use std::collections::BTreeSet;

use crate::bathdecomp::{BathExpansion, ExpansionMode};
use crate::error::{Error, Result};
use crate::model::{Lead, Sign};

/// Fermionic multi-index `h = (α, s, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FermionIndex {
    pub lead: Lead,
    pub sign: Sign,
    pub q: usize,
}

impl FermionIndex {
    pub fn flipped(self) -> Self {
        FermionIndex {
            sign: self.sign.flip(),
            ..self
        }
    }

    /// Electronic charge carried by the index: `+1` for `s = +`, `-1` for `s = -`.
    pub fn charge(self) -> i32 {
        match self.sign {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// Label of one auxiliary density operator.
///
/// `g` holds bosonic mode indices as a sorted multiset; `h` holds fermionic
/// indices sorted without repeats. Any other ordering of `h` is related to the
/// stored one by the permutation sign.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AdoKey {
    pub g: Vec<usize>,
    pub h: Vec<FermionIndex>,
}

impl AdoKey {
    pub fn root() -> Self {
        AdoKey::default()
    }

    pub fn is_root(&self) -> bool {
        self.g.is_empty() && self.h.is_empty()
    }

    /// `(m, n)` tier pair.
    pub fn tiers(&self) -> (usize, usize) {
        (self.g.len(), self.h.len())
    }

    /// Net electronic charge `#(+) - #(-)` of the fermionic indices.
    pub fn charge(&self) -> i32 {
        self.h.iter().map(|x| x.charge()).sum()
    }

    /// Builds a key from an arbitrary ordering of fermionic indices.
    ///
    /// Returns the canonical key and the permutation sign, or `None` when an index repeats.
    pub fn canonical(mut g: Vec<usize>, h: &[FermionIndex]) -> Option<(AdoKey, f64)> {
        g.sort_unstable();
        let mut h = h.to_vec();
        let mut sign = 1.0;
        // insertion sort counts transpositions
        for i in 1..h.len() {
            let mut j = i;
            while j > 0 && h[j - 1] > h[j] {
                h.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        if h.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some((AdoKey { g, h }, sign))
    }

    /// Key with `x` appended at the end of `h`, canonicalized.
    pub fn with_fermion(&self, x: FermionIndex) -> Option<(AdoKey, f64)> {
        if self.h.contains(&x) {
            return None;
        }
        let after = self.h.iter().filter(|&&y| y > x).count();
        let pos = self.h.len() - after;
        let mut h = self.h.clone();
        h.insert(pos, x);
        let sign = if after % 2 == 0 { 1.0 } else { -1.0 };
        Some((AdoKey { g: self.g.clone(), h }, sign))
    }

    pub fn with_boson(&self, p: usize) -> AdoKey {
        let mut g = self.g.clone();
        let pos = g.partition_point(|&v| v <= p);
        g.insert(pos, p);
        AdoKey { g, h: self.h.clone() }
    }

    pub fn without_fermion(&self, l: usize) -> AdoKey {
        let mut h = self.h.clone();
        h.remove(l);
        AdoKey { g: self.g.clone(), h }
    }

    pub fn without_boson(&self, l: usize) -> AdoKey {
        let mut g = self.g.clone();
        g.remove(l);
        AdoKey { g, h: self.h.clone() }
    }

    /// Key with every fermionic sign flipped, canonicalized.
    pub fn conjugate(&self) -> (AdoKey, f64) {
        let h: Vec<FermionIndex> = self.h.iter().map(|x| x.flipped()).collect();
        AdoKey::canonical(self.g.clone(), &h).expect("flipping signs keeps indices distinct")
    }
}

fn fermion_mode<'a>(exp: &'a BathExpansion, x: FermionIndex) -> Option<&'a ExpansionMode> {
    exp.fermionic.get(&(x.lead, x.sign)).and_then(|v| v.get(x.q))
}

fn ordered_product(modes: &[ExpansionMode], coupling: f64) -> f64 {
    let mut acc = 1.0;
    let mut rate_sum = 0.0;
    for m in modes {
        rate_sum += m.gamma.re;
        acc *= coupling / rate_sum * m.eta.norm() / m.gamma.re;
    }
    acc.abs()
}

fn max_over_orderings(modes: &mut [ExpansionMode], coupling: f64) -> f64 {
    fn permute(k: usize, v: &mut [ExpansionMode], coupling: f64, best: &mut f64) {
        if k == v.len() {
            *best = best.max(ordered_product(v, coupling));
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(k + 1, v, coupling, best);
            v.swap(k, i);
        }
    }
    if modes.len() <= 1 {
        return ordered_product(modes, coupling);
    }
    let mut best = 0.0;
    permute(0, modes, coupling, &mut best);
    best
}

/// Importance estimate of an ADO.
///
/// Each tier contributes `|coupling / Σ_{a≤l} Re γ_a · η_l / Re γ_l|`. The product
/// depends on the order of indices, so the largest value over orderings is used.
pub fn importance_value(key: &AdoKey, exp: &BathExpansion, gamma: f64, lambda: f64) -> Result<f64> {
    let mut fm = Vec::with_capacity(key.h.len());
    for &x in &key.h {
        fm.push(*fermion_mode(exp, x).ok_or_else(|| Error::Hierarchy(format!("no fermionic mode {x:?}")))?);
    }
    let mut bm = Vec::with_capacity(key.g.len());
    for &p in &key.g {
        bm.push(*exp.bosonic.get(p).ok_or_else(|| Error::Hierarchy(format!("no bosonic mode {p}")))?);
    }
    Ok(max_over_orderings(&mut fm, gamma) * max_over_orderings(&mut bm, lambda))
}

/// All fermionic indices of an expansion, in canonical order.
pub fn fermion_indices(exp: &BathExpansion) -> Vec<FermionIndex> {
    let mut out = Vec::new();
    for (&(lead, sign), modes) in &exp.fermionic {
        for q in 0..modes.len() {
            out.push(FermionIndex { lead, sign, q });
        }
    }
    out.sort();
    out
}

/// Truncation settings of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub m_max: usize,
    pub n_max: usize,
    pub threshold: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            m_max: 2,
            n_max: 2,
            threshold: 1e-9,
        }
    }
}

/// Every candidate key with `|g| ≤ m_max`, `|h| ≤ n_max`, ignoring importance.
///
/// Keys with net charge of magnitude two or more are left out: their ADOs act
/// between charge sectors that a single level does not have, so they vanish.
pub fn candidate_keys(exp: &BathExpansion, m_max: usize, n_max: usize) -> Vec<AdoKey> {
    let fidx = fermion_indices(exp);
    let nb = exp.bosonic.len();
    let mut hs: Vec<Vec<FermionIndex>> = vec![Vec::new()];
    let mut frontier = hs.clone();
    for _ in 0..n_max {
        let mut next = Vec::new();
        for h in &frontier {
            for &x in &fidx {
                if h.last().is_some_and(|&l| l >= x) {
                    continue;
                }
                let mut v = h.clone();
                v.push(x);
                let charge: i32 = v.iter().map(|y| y.charge()).sum();
                if charge.abs() <= 1 {
                    next.push(v);
                }
            }
        }
        hs.extend(next.iter().cloned());
        frontier = next;
    }
    let mut gs: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = gs.clone();
    for _ in 0..m_max {
        let mut next = Vec::new();
        for g in &frontier {
            let start = g.last().copied().unwrap_or(0);
            for p in start..nb {
                let mut v = g.clone();
                v.push(p);
                next.push(v);
            }
        }
        gs.extend(next.iter().cloned());
        frontier = next;
    }
    let mut out = Vec::with_capacity(gs.len() * hs.len());
    for g in &gs {
        for h in &hs {
            out.push(AdoKey {
                g: g.clone(),
                h: h.clone(),
            });
        }
    }
    out
}

/// Retained hierarchy: keys passing the importance filter, their ancestors, and the root.
///
/// The result is sorted by total tier, then canonical order, with the root first.
pub fn enumerate_hierarchy(exp: &BathExpansion, trunc: Truncation, gamma: f64, lambda: f64) -> Result<Vec<AdoKey>> {
    if exp.is_empty() {
        return Err(Error::EmptyExpansion);
    }
    if !(trunc.threshold > 0.0) {
        return Err(Error::InvalidParameter("importance threshold must be > 0".into()));
    }
    let mut kept: BTreeSet<AdoKey> = BTreeSet::new();
    kept.insert(AdoKey::root());
    for key in candidate_keys(exp, trunc.m_max, trunc.n_max) {
        if key.is_root() {
            continue;
        }
        if importance_value(&key, exp, gamma, lambda)? >= trunc.threshold {
            kept.insert(key);
        }
    }
    // close under removal of one index
    let mut stack: Vec<AdoKey> = kept.iter().cloned().collect();
    while let Some(k) = stack.pop() {
        let parents = (0..k.h.len())
            .map(|l| k.without_fermion(l))
            .chain((0..k.g.len()).map(|l| k.without_boson(l)));
        for parent in parents {
            if kept.insert(parent.clone()) {
                stack.push(parent);
            }
        }
    }
    let mut out: Vec<AdoKey> = kept.into_iter().collect();
    out.sort_by(|a, b| (a.g.len() + a.h.len()).cmp(&(b.g.len() + b.h.len())).then(a.cmp(b)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn fx(lead: Lead, sign: Sign, q: usize) -> FermionIndex {
        FermionIndex { lead, sign, q }
    }

    fn expansion() -> BathExpansion {
        BathExpansion::new(&ModelParams::default(), 4, 2).unwrap()
    }

    #[test]
    fn canonical_sign_counts_transpositions() {
        let a = fx(Lead::Left, Sign::Plus, 0);
        let b = fx(Lead::Left, Sign::Minus, 1);
        let c = fx(Lead::Right, Sign::Plus, 2);
        let (k1, s1) = AdoKey::canonical(vec![], &[a, b, c]).unwrap();
        let (k2, s2) = AdoKey::canonical(vec![], &[b, a, c]).unwrap();
        let (k3, s3) = AdoKey::canonical(vec![], &[c, a, b]).unwrap();
        assert_eq!(k1, k2);
        assert_eq!(k1, k3);
        assert_eq!(s1, 1.0);
        assert_eq!(s2, -1.0);
        assert_eq!(s3, 1.0);
        assert!(AdoKey::canonical(vec![], &[a, a]).is_none());
    }

    #[test]
    fn append_matches_canonicalization() {
        let a = fx(Lead::Left, Sign::Plus, 3);
        let b = fx(Lead::Right, Sign::Minus, 0);
        let c = fx(Lead::Left, Sign::Minus, 1);
        let base = AdoKey::canonical(vec![2], &[a, b]).unwrap().0;
        let (k, s) = base.with_fermion(c).unwrap();
        let (k2, s2) = AdoKey::canonical(vec![2], &[base.h[0], base.h[1], c]).unwrap();
        assert_eq!(k, k2);
        assert_eq!(s, s2);
    }

    #[test]
    fn root_importance_is_one() {
        let exp = expansion();
        assert_eq!(importance_value(&AdoKey::root(), &exp, 0.025, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn single_index_importance() {
        let exp = expansion();
        let x = fx(Lead::Left, Sign::Plus, 0);
        let m = exp.fermionic[&(Lead::Left, Sign::Plus)][0];
        let key = AdoKey { g: vec![], h: vec![x] };
        let v = importance_value(&key, &exp, 0.025, 0.0).unwrap();
        let expected = (0.025 * m.eta.norm() / (m.gamma.re * m.gamma.re)).abs();
        assert!((v - expected).abs() < 1e-15 * expected);
    }

    #[test]
    fn infinite_threshold_keeps_only_root() {
        let exp = expansion();
        let trunc = Truncation {
            threshold: f64::INFINITY,
            ..Default::default()
        };
        let keys = enumerate_hierarchy(&exp, trunc, 0.025, 0.0).unwrap();
        assert_eq!(keys, vec![AdoKey::root()]);
    }

    #[test]
    fn empty_expansion_is_rejected() {
        let p = ModelParams::default().with_gamma(0.0);
        let exp = BathExpansion::new(&p, 4, 2).unwrap();
        assert_eq!(
            enumerate_hierarchy(&exp, Truncation::default(), 0.0, 0.0),
            Err(Error::EmptyExpansion)
        );
    }

    #[test]
    fn enumeration_is_downward_closed() {
        let p = ModelParams {
            bath_coupling: 0.01,
            temperature_bath: 0.025,
            ..ModelParams::default()
        };
        let exp = BathExpansion::new(&p, 6, 2).unwrap();
        let trunc = Truncation {
            threshold: 1e-6,
            ..Default::default()
        };
        let keys = enumerate_hierarchy(&exp, trunc, p.gamma_total(), p.bath_coupling).unwrap();
        let set: BTreeSet<_> = keys.iter().cloned().collect();
        assert_eq!(keys[0], AdoKey::root());
        for k in &keys {
            assert!(k.charge().abs() <= 1);
            for l in 0..k.h.len() {
                assert!(set.contains(&k.without_fermion(l)));
            }
            for l in 0..k.g.len() {
                assert!(set.contains(&k.without_boson(l)));
            }
        }
    }

    #[test]
    fn conjugate_flips_all_signs() {
        let a = fx(Lead::Left, Sign::Plus, 0);
        let b = fx(Lead::Left, Sign::Minus, 2);
        let key = AdoKey::canonical(vec![], &[a, b]).unwrap().0;
        let (c, _) = key.conjugate();
        assert!(c.h.contains(&a.flipped()));
        assert!(c.h.contains(&b.flipped()));
        assert_eq!(c.charge(), -key.charge());
    }
}
