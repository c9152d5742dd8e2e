//! Finite-volume Gibbs measures: exhaustive enumeration for tiny regions,
//! heat-bath dynamics for large ones, and the push-up surgery φ ∨ ψ_n.
//!
//! Both samplers work on an [`EnergyModel`], a list of pair terms
//! `V(φ(v) - φ(u))` plus midpoint anchor terms `V_*(φ(y) - a)` over a set of
//! free vertices. The usual specification on a patch is one instance; the
//! conditional Hamiltonian left behind by the enriched exploration is
//! another.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::{Parity, PlanarPatch, VertexId};
use crate::potentials::{EdgePotentials, HalfInt, Potential, WeightTable};

pub type ChainRng = ChaCha8Rng;

pub const DEFAULT_ENUMERATION_CAP: usize = 12;
pub const WINDOW_TAIL_TOLERANCE: f64 = 1e-12;
pub const BATCHES: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error("every configuration has infinite energy")]
    Infeasible,
    #[error("{n} free vertices exceed the enumeration cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("single-site conditional at vertex {0} has zero mass")]
    StuckSite(VertexId),
    #[error("height window {window} leaves tail mass {tail:e} (limit {limit:e})")]
    WindowTooSmall { window: i64, tail: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("push-up radius {n} needs Λ_{n} inside the interior of the patch")]
    RadiusTooLarge { n: usize },
}

/// Heights on every patch vertex; `fixed` vertices are never resampled.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightConfig {
    pub heights: Vec<i64>,
    pub fixed: Vec<bool>,
    /// Patch parity class whose heights must be odd (the other class carries
    /// even heights). `None` for unconstrained models.
    pub odd_class: Option<Parity>,
}

impl HeightConfig {
    /// Zero on all non-interior vertices. With `parity_model`, the height
    /// parity classes are chosen so that the first boundary vertex carries an
    /// even height, and every fixed vertex gets the parity-correct value in
    /// {0, 1}. A patch without boundary (a torus) pins its root instead.
    pub fn zero_boundary(patch: &PlanarPatch, parity_model: bool) -> Result<Self, GibbsError> {
        let n = patch.n_vertices();
        let mut fixed: Vec<bool> = (0..n).map(|v| !patch.is_interior(v)).collect();
        if !fixed.iter().any(|&f| f) {
            fixed[patch.root] = true;
        }
        let odd_class = if parity_model {
            let parity = patch
                .parity
                .as_ref()
                .ok_or_else(|| GibbsError::InvalidConfig("parity model on a non-bipartite patch".into()))?;
            let anchor = (0..n).find(|&v| fixed[v]).unwrap();
            Some(parity[anchor].flip())
        } else {
            None
        };
        let mut cfg = HeightConfig { heights: vec![0; n], fixed, odd_class };
        for v in 0..n {
            if cfg.fixed[v] && cfg.requires_odd(patch, v) {
                cfg.heights[v] = 1;
            }
        }
        Ok(cfg)
    }

    /// Explicit fixed values; every other vertex is free and starts at 0.
    pub fn with_fixed(patch: &PlanarPatch, values: &[(VertexId, i64)], odd_class: Option<Parity>) -> Self {
        let n = patch.n_vertices();
        let mut cfg = HeightConfig { heights: vec![0; n], fixed: vec![false; n], odd_class };
        for &(v, h) in values {
            cfg.heights[v] = h;
            cfg.fixed[v] = true;
        }
        cfg
    }

    pub fn requires_odd(&self, patch: &PlanarPatch, v: VertexId) -> bool {
        match (self.odd_class, patch.parity_of(v)) {
            (Some(c), Some(p)) => p == c,
            _ => false,
        }
    }

    pub fn parity_ok(&self, patch: &PlanarPatch) -> bool {
        match self.odd_class {
            None => true,
            Some(_) => {
                (0..self.heights.len()).all(|v| (self.heights[v].rem_euclid(2) == 1) == self.requires_odd(patch, v))
            }
        }
    }

    /// Finite energy on every edge.
    pub fn is_admissible(&self, patch: &PlanarPatch, potentials: &EdgePotentials) -> bool {
        patch
            .edges
            .iter()
            .enumerate()
            .all(|(i, e)| potentials.get(i).evaluate(self.heights[e.v] - self.heights[e.u]).is_finite())
            && self.parity_ok(patch)
    }

    pub fn negated(&self) -> Self {
        HeightConfig {
            heights: self.heights.iter().map(|h| -h).collect(),
            fixed: self.fixed.clone(),
            odd_class: self.odd_class,
        }
    }

    pub fn free_vertices(&self) -> Vec<VertexId> {
        (0..self.heights.len()).filter(|&v| !self.fixed[v]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairTerm {
    pub u: VertexId,
    pub v: VertexId,
    pub potential: usize,
}

/// Energy `Σ V_k(φ(v) - φ(u)) + Σ V_*(φ(y) - a)` over a set of free vertices.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    n_vertices: usize,
    free: Vec<VertexId>,
    free_mask: Vec<bool>,
    potentials: Vec<Potential>,
    tables: Vec<WeightTable>,
    pairs: Vec<PairTerm>,
    anchors: Vec<(VertexId, HalfInt)>,
    /// For each vertex: (other endpoint, potential, sign) with gradient
    /// `sign * (φ(x) - φ(other))`.
    site_pairs: Vec<Vec<(VertexId, usize, i64)>>,
    site_anchors: Vec<Vec<HalfInt>>,
}

impl EnergyModel {
    pub fn new(
        n_vertices: usize,
        free: Vec<VertexId>,
        potentials: Vec<Potential>,
        pairs: Vec<PairTerm>,
        anchors: Vec<(VertexId, HalfInt)>,
    ) -> Self {
        let mut free = free;
        free.sort_unstable();
        free.dedup();
        let mut free_mask = vec![false; n_vertices];
        for &v in &free {
            free_mask[v] = true;
        }
        let mut site_pairs = vec![Vec::new(); n_vertices];
        for t in &pairs {
            site_pairs[t.v].push((t.u, t.potential, 1));
            site_pairs[t.u].push((t.v, t.potential, -1));
        }
        let mut site_anchors = vec![Vec::new(); n_vertices];
        for &(y, a) in &anchors {
            site_anchors[y].push(a);
        }
        let tables = potentials.iter().map(|p| p.weight_table(64)).collect();
        EnergyModel { n_vertices, free, free_mask, potentials, tables, pairs, anchors, site_pairs, site_anchors }
    }

    /// The specification on a patch: free = non-fixed vertices of `config`,
    /// one pair term per edge touching a free vertex.
    pub fn from_patch(patch: &PlanarPatch, potentials: &EdgePotentials, config: &HeightConfig) -> Self {
        let free = config.free_vertices();
        let pairs = patch
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| !config.fixed[e.u] || !config.fixed[e.v])
            .map(|(i, e)| PairTerm { u: e.u, v: e.v, potential: potentials.assignment[i] })
            .collect();
        EnergyModel::new(patch.n_vertices(), free, potentials.potentials.clone(), pairs, Vec::new())
    }

    pub fn free(&self) -> &[VertexId] {
        &self.free
    }

    pub fn is_free(&self, v: VertexId) -> bool {
        self.free_mask[v]
    }

    pub fn potentials(&self) -> &[Potential] {
        &self.potentials
    }

    pub fn pairs(&self) -> &[PairTerm] {
        &self.pairs
    }

    pub fn anchors(&self) -> &[(VertexId, HalfInt)] {
        &self.anchors
    }

    pub fn energy(&self, heights: &[i64]) -> f64 {
        let mut e = 0.0;
        for t in &self.pairs {
            e += self.potentials[t.potential].evaluate(heights[t.v] - heights[t.u]);
        }
        for &(y, a) in &self.anchors {
            if (2 * heights[y] - a.x2()).abs() != 1 {
                return f64::INFINITY;
            }
        }
        e
    }

    /// Unnormalised single-site weight of height `h` at `x`.
    #[inline]
    fn site_weight(&self, x: VertexId, h: i64, heights: &[i64]) -> f64 {
        let mut w = 1.0;
        for &a in &self.site_anchors[x] {
            if (2 * h - a.x2()).abs() != 1 {
                return 0.0;
            }
        }
        for &(y, k, sign) in &self.site_pairs[x] {
            w *= self.tables[k].get(sign * (h - heights[y]));
            if w == 0.0 {
                return 0.0;
            }
        }
        w
    }

    /// Rounded mean of the heights (and anchors) seen by `x`.
    fn site_centre(&self, x: VertexId, heights: &[i64]) -> Option<i64> {
        let mut sum2 = 0i64;
        let mut count = 0i64;
        for &(y, _, _) in &self.site_pairs[x] {
            sum2 += 2 * heights[y];
            count += 1;
        }
        for a in &self.site_anchors[x] {
            sum2 += a.x2();
            count += 1;
        }
        (count > 0).then(|| (sum2 as f64 / (2 * count) as f64).round() as i64)
    }

    /// Starting point for dynamics: the Lipschitz extension of the fixed
    /// heights, `min_b (ψ(b) + d(x, b))`, reduced mod 2 when that is
    /// admissible and taken as is otherwise. Errors if neither is admissible.
    pub fn initial_heights(&self, config: &HeightConfig) -> Result<Vec<i64>, GibbsError> {
        let mut heights = config.heights.clone();
        let mut best: Vec<Option<i64>> =
            (0..self.n_vertices).map(|v| (!self.free_mask[v]).then_some(config.heights[v])).collect();
        // Unit-weight Dijkstra with buckets keyed by tentative value.
        let mut buckets: BTreeMap<i64, Vec<VertexId>> = BTreeMap::new();
        for v in (0..self.n_vertices).filter(|&v| best[v].is_some()) {
            buckets.entry(best[v].unwrap()).or_default().push(v);
        }
        while let Some((&val, _)) = buckets.iter().next() {
            let vs = buckets.remove(&val).unwrap();
            for x in vs {
                if best[x] != Some(val) {
                    continue;
                }
                for &(y, _, _) in &self.site_pairs[x] {
                    if self.free_mask[y] && best[y].is_none_or(|b| b > val + 1) {
                        best[y] = Some(val + 1);
                        buckets.entry(val + 1).or_default().push(y);
                    }
                }
            }
        }
        for &v in &self.free {
            heights[v] = best[v].ok_or_else(|| {
                GibbsError::InvalidConfig(format!("free vertex {v} is not connected to a fixed vertex"))
            })?;
        }
        // The extension folded into {0, 1} keeps its parity and is flat, so it
        // is preferred whenever the boundary allows it.
        let mut folded = heights.clone();
        for &v in &self.free {
            folded[v] = heights[v].rem_euclid(2);
        }
        for h in [&mut folded, &mut heights] {
            // Anchored vertices must sit at a ± 1/2.
            for &(y, a) in &self.anchors {
                if self.free_mask[y] && (2 * h[y] - a.x2()).abs() != 1 {
                    h[y] = (a.x2() + 1).div_euclid(2);
                }
            }
        }
        if self.energy(&folded).is_finite() {
            Ok(folded)
        } else if self.energy(&heights).is_finite() {
            Ok(heights)
        } else {
            Err(GibbsError::Infeasible)
        }
    }
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Inclusive height range used for enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightRange {
    pub lo: i64,
    pub hi: i64,
}

impl HeightRange {
    pub fn symmetric(half_width: i64) -> Self {
        HeightRange { lo: -half_width, hi: half_width }
    }
}

/// Exact law of the free heights.
#[derive(Clone, Debug)]
pub struct JointDistribution {
    pub free: Vec<VertexId>,
    pub support: Vec<Vec<i64>>,
    pub probabilities: Vec<f64>,
    /// `log Σ e^{-H}` over the support.
    pub log_z: f64,
}

impl JointDistribution {
    fn position(&self, v: VertexId) -> usize {
        self.free.iter().position(|&f| f == v).unwrap_or_else(|| panic!("vertex {v} is not free"))
    }

    pub fn marginal(&self, v: VertexId) -> BTreeMap<i64, f64> {
        let i = self.position(v);
        let mut acc: BTreeMap<i64, CompensatedSum> = BTreeMap::new();
        for (cfg, &p) in self.support.iter().zip(&self.probabilities) {
            acc.entry(cfg[i]).or_default().add(p);
        }
        acc.into_iter().map(|(k, s)| (k, s.value())).collect()
    }

    pub fn expectation(&self, f: impl Fn(&[i64]) -> f64) -> f64 {
        self.support.iter().zip(&self.probabilities).map(|(c, &p)| p * f(c)).collect::<CompensatedSum>().value()
    }

    pub fn mean(&self, v: VertexId) -> f64 {
        let i = self.position(v);
        self.expectation(|c| c[i] as f64)
    }

    pub fn variance(&self, v: VertexId) -> f64 {
        let i = self.position(v);
        let m = self.mean(v);
        self.expectation(|c| (c[i] as f64 - m).powi(2))
    }

    pub fn total_probability(&self) -> f64 {
        self.probabilities.iter().copied().collect::<CompensatedSum>().value()
    }

    pub fn to_map(&self) -> HashMap<Vec<i64>, f64> {
        self.support.iter().cloned().zip(self.probabilities.iter().copied()).collect()
    }

    /// Largest `p(φ)p(ψ) - p(φ∨ψ)p(φ∧ψ)` over all support pairs; a value
    /// `<= 0` means the FKG lattice condition holds exactly.
    pub fn fkg_violation(&self) -> f64 {
        let map = self.to_map();
        let mut worst = f64::NEG_INFINITY;
        let mut max = vec![0i64; self.free.len()];
        let mut min = vec![0i64; self.free.len()];
        for (i, (a, &pa)) in self.support.iter().zip(&self.probabilities).enumerate() {
            for (b, &pb) in self.support[i..].iter().zip(&self.probabilities[i..]) {
                for k in 0..a.len() {
                    max[k] = a[k].max(b[k]);
                    min[k] = a[k].min(b[k]);
                }
                let lhs = map.get(&max).copied().unwrap_or(0.0) * map.get(&min).copied().unwrap_or(0.0);
                worst = worst.max(pa * pb - lhs);
            }
        }
        worst
    }

    /// When the support is a full box with positive mass everywhere, the
    /// largest `p(ξ+e_i)p(ξ+e_j) - p(ξ+e_i+e_j)p(ξ)` over all `ξ` and
    /// `i < j`. For positive laws on a product of chains, this two-site
    /// condition is equivalent to the full lattice condition. `None` when
    /// the support is not such a box.
    pub fn fkg_local_violation(&self) -> Option<f64> {
        let k = self.free.len();
        let first = self.support.first()?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for s in &self.support {
            for c in 0..k {
                lo[c] = lo[c].min(s[c]);
                hi[c] = hi[c].max(s[c]);
            }
        }
        let sides: Vec<usize> = (0..k).map(|c| (hi[c] - lo[c] + 1) as usize).collect();
        let volume = sides.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s))?;
        if volume != self.support.len() || self.probabilities.iter().any(|&p| p <= 0.0) {
            return None;
        }
        let mut stride = vec![1usize; k];
        for c in 1..k {
            stride[c] = stride[c - 1] * sides[c - 1];
        }
        let mut dense = vec![0.0; volume];
        for (s, &p) in self.support.iter().zip(&self.probabilities) {
            let idx: usize = (0..k).map(|c| (s[c] - lo[c]) as usize * stride[c]).sum();
            dense[idx] = p;
        }
        let mut worst = f64::NEG_INFINITY;
        for s in &self.support {
            let idx: usize = (0..k).map(|c| (s[c] - lo[c]) as usize * stride[c]).sum();
            for i in (0..k).filter(|&i| s[i] < hi[i]) {
                for j in (i + 1..k).filter(|&j| s[j] < hi[j]) {
                    let up_i = dense[idx + stride[i]];
                    let up_j = dense[idx + stride[j]];
                    let both = dense[idx + stride[i] + stride[j]];
                    worst = worst.max(up_i * up_j - both * dense[idx]);
                }
            }
        }
        Some(worst)
    }
}

/// Largest `π(k-s)π(k+s) - π(k)²` over the support hull with step `s`;
/// `<= 0` means log-concave.
pub fn log_concavity_violation(marginal: &BTreeMap<i64, f64>, step: i64) -> f64 {
    let (Some(&lo), Some(&hi)) = (marginal.keys().next(), marginal.keys().next_back()) else {
        return 0.0;
    };
    let p = |k: i64| marginal.get(&k).copied().unwrap_or(0.0);
    let mut worst = f64::NEG_INFINITY;
    let mut k = lo;
    while k <= hi {
        worst = worst.max(p(k - step) * p(k + step) - p(k) * p(k));
        k += step;
    }
    worst
}

/// Exhaustive enumeration of the law of the free heights on `range`.
pub fn exact_distribution_model(
    model: &EnergyModel,
    config: &HeightConfig,
    range: HeightRange,
    cap: usize,
) -> Result<JointDistribution, GibbsError> {
    let free = model.free.clone();
    let k = free.len();
    if k > cap {
        return Err(GibbsError::TooLarge { n: k, cap });
    }
    if range.lo > range.hi {
        return Err(GibbsError::InvalidConfig("empty height range".into()));
    }
    let pos: HashMap<VertexId, usize> = free.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    // Terms become evaluable when the later of their free endpoints is set.
    let mut terms_at: Vec<Vec<(VertexId, usize, i64)>> = vec![Vec::new(); k];
    for (i, &x) in free.iter().enumerate() {
        for &(y, p, sign) in &model.site_pairs[x] {
            match pos.get(&y) {
                Some(&j) if j >= i => {}
                _ => terms_at[i].push((y, p, sign)),
            }
        }
    }
    let candidates: Vec<Vec<i64>> = free
        .iter()
        .map(|&v| {
            (range.lo..=range.hi)
                .filter(|&h| model.site_anchors[v].iter().all(|a| (2 * h - a.x2()).abs() == 1))
                .collect()
        })
        .collect();
    let mut heights = config.heights.clone();
    let mut support = Vec::new();
    let mut energies = Vec::new();
    if k == 0 {
        let e = model.energy(&heights);
        if !e.is_finite() {
            return Err(GibbsError::Infeasible);
        }
        return Ok(JointDistribution { free, support: vec![Vec::new()], probabilities: vec![1.0], log_z: -e });
    }
    let mut idx = vec![0usize; k];
    let mut partial = vec![0.0f64; k + 1];
    let mut depth = 0usize;
    loop {
        if idx[depth] == candidates[depth].len() {
            if depth == 0 {
                break;
            }
            idx[depth] = 0;
            depth -= 1;
            idx[depth] += 1;
            continue;
        }
        let x = free[depth];
        let h = candidates[depth][idx[depth]];
        heights[x] = h;
        let mut e = partial[depth];
        for &(y, p, sign) in &terms_at[depth] {
            e += model.potentials[p].evaluate(sign * (h - heights[y]));
        }
        if !e.is_finite() {
            idx[depth] += 1;
            continue;
        }
        if depth + 1 == k {
            support.push(free.iter().map(|&v| heights[v]).collect::<Vec<i64>>());
            energies.push(e);
            idx[depth] += 1;
        } else {
            partial[depth + 1] = e;
            depth += 1;
        }
    }
    if support.is_empty() {
        return Err(GibbsError::Infeasible);
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let rel: Vec<f64> = energies.iter().map(|e| (-(e - e_min)).exp()).collect();
    let z_rel = rel.iter().copied().collect::<CompensatedSum>().value();
    let probabilities = rel.iter().map(|w| w / z_rel).collect();
    Ok(JointDistribution { free, support, probabilities, log_z: z_rel.ln() - e_min })
}

/// The specification γ_Λ(·, ψ) on a patch, enumerated exactly. `config`
/// supplies the fixed heights ψ and designates Λ as its free vertices.
pub fn exact_distribution(
    patch: &PlanarPatch,
    potentials: &EdgePotentials,
    config: &HeightConfig,
    range: HeightRange,
) -> Result<JointDistribution, GibbsError> {
    let model = EnergyModel::from_patch(patch, potentials, config);
    let dist = exact_distribution_model(&model, config, range, DEFAULT_ENUMERATION_CAP)?;
    if config.odd_class.is_some() {
        // Parity potentials already enforce the constraint relative to the
        // boundary; keep only configurations with the declared parities.
        let keep: Vec<bool> = dist
            .support
            .iter()
            .map(|c| dist.free.iter().zip(c).all(|(&v, &h)| (h.rem_euclid(2) == 1) == config.requires_odd(patch, v)))
            .collect();
        if keep.iter().all(|&k| k) {
            return Ok(dist);
        }
        return renormalise(dist, &keep);
    }
    Ok(dist)
}

fn renormalise(dist: JointDistribution, keep: &[bool]) -> Result<JointDistribution, GibbsError> {
    let mut support = Vec::new();
    let mut probs = Vec::new();
    for ((c, p), &k) in dist.support.into_iter().zip(dist.probabilities).zip(keep) {
        if k {
            support.push(c);
            probs.push(p);
        }
    }
    let z = probs.iter().copied().collect::<CompensatedSum>().value();
    if support.is_empty() || z == 0.0 {
        return Err(GibbsError::Infeasible);
    }
    Ok(JointDistribution {
        free: dist.free,
        support,
        probabilities: probs.iter().map(|p| p / z).collect(),
        log_z: dist.log_z + z.ln(),
    })
}

/// Heat-bath sampler parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sweeps: u64,
    #[serde(default)]
    pub burn_in: u64,
    #[serde(default = "one")]
    pub thinning: u64,
    #[serde(default)]
    pub seed: u64,
    /// Half-width of the per-site candidate window; chosen automatically
    /// when absent.
    #[serde(default)]
    pub height_window: Option<i64>,
}

fn one() -> u64 {
    1
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { sweeps: 10_000, burn_in: 1_000, thinning: 1, seed: 0, height_window: None }
    }
}

impl SamplerConfig {
    /// Smallest half-width whose neglected single-edge tail mass is below
    /// [`WINDOW_TAIL_TOLERANCE`] for every potential.
    pub fn auto_window(potentials: &[Potential]) -> i64 {
        potentials
            .iter()
            .map(|p| (2..=p.window()).find(|&w| p.tail_fraction(w - 1) < WINDOW_TAIL_TOLERANCE).unwrap_or(p.window()))
            .max()
            .unwrap_or(2)
    }

    /// Resolves and validates the height window against `potentials`.
    pub fn resolve_window(&self, potentials: &[Potential]) -> Result<i64, GibbsError> {
        if self.sweeps == 0 || self.thinning == 0 {
            return Err(GibbsError::InvalidConfig("sweeps and thinning must be positive".into()));
        }
        match self.height_window {
            None => Ok(Self::auto_window(potentials)),
            Some(w) => {
                let tail = potentials.iter().map(|p| p.tail_fraction((w - 1).max(1))).fold(0.0, f64::max);
                if w < 1 || tail >= WINDOW_TAIL_TOLERANCE {
                    Err(GibbsError::WindowTooSmall { window: w, tail, limit: WINDOW_TAIL_TOLERANCE })
                } else {
                    Ok(w)
                }
            }
        }
    }
}

/// Sequential-scan heat bath over the free vertices of a model.
pub struct HeatBath<'a> {
    model: &'a EnergyModel,
    half_width: i64,
    weights: Vec<f64>,
}

impl<'a> HeatBath<'a> {
    pub fn new(model: &'a EnergyModel, half_width: i64) -> Self {
        HeatBath { model, half_width, weights: vec![0.0; (2 * half_width + 1) as usize] }
    }

    /// Normalised single-site conditional at `x` over the window.
    pub fn site_conditional(&self, x: VertexId, heights: &[i64]) -> Result<Vec<(i64, f64)>, GibbsError> {
        let c = self.model.site_centre(x, heights).ok_or(GibbsError::StuckSite(x))?;
        let w: Vec<(i64, f64)> =
            (c - self.half_width..=c + self.half_width).map(|h| (h, self.model.site_weight(x, h, heights))).collect();
        let total: f64 = w.iter().map(|p| p.1).sum();
        if total <= 0.0 {
            return Err(GibbsError::StuckSite(x));
        }
        Ok(w.into_iter().filter(|p| p.1 > 0.0).map(|(h, p)| (h, p / total)).collect())
    }

    #[inline]
    pub fn resample_site<R: Rng>(&mut self, x: VertexId, heights: &mut [i64], rng: &mut R) -> Result<(), GibbsError> {
        let c = self.model.site_centre(x, heights).ok_or(GibbsError::StuckSite(x))?;
        let lo = c - self.half_width;
        let mut total = 0.0;
        for (i, slot) in self.weights.iter_mut().enumerate() {
            let w = self.model.site_weight(x, lo + i as i64, heights);
            *slot = w;
            total += w;
        }
        if total <= 0.0 {
            return Err(GibbsError::StuckSite(x));
        }
        let mut u = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if u < w {
                    break;
                }
                u -= w;
            }
        }
        heights[x] = lo + pick.unwrap() as i64;
        Ok(())
    }

    /// One pass over the free vertices in increasing id order.
    pub fn sweep<R: Rng>(&mut self, heights: &mut [i64], rng: &mut R) -> Result<(), GibbsError> {
        let model = self.model;
        for &x in &model.free {
            self.resample_site(x, heights, rng)?;
        }
        Ok(())
    }
}

/// One heat-bath sweep of `config` on a patch.
pub fn heat_bath_sweep<R: Rng>(
    config: &HeightConfig,
    patch: &PlanarPatch,
    potentials: &EdgePotentials,
    half_width: i64,
    rng: &mut R,
) -> Result<HeightConfig, GibbsError> {
    let model = EnergyModel::from_patch(patch, potentials, config);
    let mut out = config.clone();
    HeatBath::new(&model, half_width).sweep(&mut out.heights, rng)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelDirection {
    Geq,
    Leq,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Height { vertex: VertexId },
    MeanHeight { vertices: Vec<VertexId> },
    LevelIndicator { vertex: VertexId, level: i64, direction: LevelDirection },
}

impl Observable {
    pub fn id(&self) -> String {
        match self {
            Observable::Height { vertex } => format!("height:{vertex}"),
            Observable::MeanHeight { vertices } => format!("mean_height:{}", vertices.len()),
            Observable::LevelIndicator { vertex, level, direction } => {
                let d = match direction {
                    LevelDirection::Geq => "geq",
                    LevelDirection::Leq => "leq",
                };
                format!("level:{vertex}:{d}:{level}")
            }
        }
    }

    pub fn evaluate(&self, heights: &[i64]) -> f64 {
        match self {
            Observable::Height { vertex } => heights[*vertex] as f64,
            Observable::MeanHeight { vertices } => {
                vertices.iter().map(|&v| heights[v] as f64).sum::<f64>() / vertices.len().max(1) as f64
            }
            Observable::LevelIndicator { vertex, level, direction } => {
                let h = heights[*vertex];
                let hit = match direction {
                    LevelDirection::Geq => h >= *level,
                    LevelDirection::Leq => h <= *level,
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Summary of one observable; stderrs by batch means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub observable: String,
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub variance_stderr: f64,
}

fn batch_means(values: &[f64], batches: usize) -> Vec<f64> {
    let nb = batches.min(values.len()).max(1);
    let size = values.len() / nb;
    if size == 0 {
        return Vec::new();
    }
    // Leading remainder samples are dropped so batches are equal sized.
    let skip = values.len() - nb * size;
    values[skip..]
        .chunks(size)
        .map(|c| c.iter().copied().collect::<CompensatedSum>().value() / c.len() as f64)
        .collect()
}

fn stderr_of(means: &[f64]) -> f64 {
    let k = means.len();
    if k < 2 {
        return f64::NAN;
    }
    let m = means.iter().sum::<f64>() / k as f64;
    let v = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (v / k as f64).sqrt()
}

impl Summary {
    /// Pools several independent chains: each contributes [`BATCHES`]
    /// batches, and the stderr comes from the spread of all batch means.
    pub fn from_chains(observable: String, seed: u64, chains: &[&[f64]]) -> Summary {
        let n: usize = chains.iter().map(|c| c.len()).sum();
        let mean = chains.iter().flat_map(|c| c.iter().copied()).collect::<CompensatedSum>().value() / n.max(1) as f64;
        let sq: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| (x - mean).powi(2)).collect()).collect();
        let variance = sq.iter().flatten().copied().collect::<CompensatedSum>().value() / n.max(1) as f64;
        let means: Vec<f64> = chains.iter().flat_map(|c| batch_means(c, BATCHES)).collect();
        let sq_means: Vec<f64> = sq.iter().flat_map(|c| batch_means(c, BATCHES)).collect();
        Summary {
            observable,
            mean,
            stderr: stderr_of(&means),
            variance,
            n_samples: n,
            seed,
            variance_stderr: stderr_of(&sq_means),
        }
    }
}

/// Thinned time series of every observable for one chain.
#[derive(Clone, Debug)]
pub struct ObservableSeries {
    pub observables: Vec<Observable>,
    pub sweeps: Vec<u64>,
    pub values: Vec<Vec<f64>>,
    pub summaries: Vec<Summary>,
    pub seed: u64,
    pub final_heights: Vec<i64>,
}

impl ObservableSeries {
    /// CSV rows `sweep,observable_id,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sweep,observable_id,value")?;
        for (t, &s) in self.sweeps.iter().enumerate() {
            for (o, obs) in self.observables.iter().enumerate() {
                writeln!(out, "{},{},{:.16e}", s, obs.id(), self.values[o][t])?;
            }
        }
        Ok(())
    }
}

/// Seed derivation for independent streams: SHA-256 of the master seed, a
/// label and a list of indices.
pub fn derive_seed(master: u64, label: &str, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Runs one heat-bath chain from the Lipschitz-extension start (or from
/// `config`'s free heights when they are already admissible).
pub fn run_chain(
    model: &EnergyModel,
    config: &HeightConfig,
    sampler: &SamplerConfig,
    observables: &[Observable],
) -> Result<ObservableSeries, GibbsError> {
    let half_width = sampler.resolve_window(model.potentials())?;
    let mut heights = if model.energy(&config.heights).is_finite() {
        config.heights.clone()
    } else {
        model.initial_heights(config)?
    };
    let mut rng = ChainRng::seed_from_u64(sampler.seed);
    let mut bath = HeatBath::new(model, half_width);
    for _ in 0..sampler.burn_in {
        bath.sweep(&mut heights, &mut rng)?;
    }
    let mut sweeps = Vec::new();
    let mut values = vec![Vec::new(); observables.len()];
    for s in 1..=sampler.sweeps {
        bath.sweep(&mut heights, &mut rng)?;
        if s % sampler.thinning == 0 {
            sweeps.push(s);
            for (o, obs) in observables.iter().enumerate() {
                values[o].push(obs.evaluate(&heights));
            }
        }
    }
    let summaries =
        observables.iter().zip(&values).map(|(o, v)| Summary::from_chains(o.id(), sampler.seed, &[v])).collect();
    Ok(ObservableSeries {
        observables: observables.to_vec(),
        sweeps,
        values,
        summaries,
        seed: sampler.seed,
        final_heights: heights,
    })
}

/// Independent chains with seeds derived from `(sampler.seed, label, chain)`,
/// run in parallel and returned in chain order.
pub fn run_chains(
    model: &EnergyModel,
    config: &HeightConfig,
    sampler: &SamplerConfig,
    observables: &[Observable],
    n_chains: usize,
    label: &str,
) -> Result<Vec<ObservableSeries>, GibbsError> {
    (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let s = SamplerConfig { seed: derive_seed(sampler.seed, label, &[c as u64]), ..sampler.clone() };
            run_chain(model, config, &s, observables)
        })
        .collect()
}

/// Pooled summaries over chains, one per observable.
pub fn pooled_summaries(chains: &[ObservableSeries], seed: u64) -> Vec<Summary> {
    let Some(first) = chains.first() else {
        return Vec::new();
    };
    (0..first.observables.len())
        .map(|o| {
            let series: Vec<&[f64]> = chains.iter().map(|c| c.values[o].as_slice()).collect();
            Summary::from_chains(first.observables[o].id(), seed, &series)
        })
        .collect()
}

/// φ ∨ ψ_n with ψ_n = m_n + d(·, ∂Λ_n) on Λ_{n+1} and -∞ elsewhere, where
/// m_n is the minimum of φ on ∂Λ_n and balls are taken around the root.
pub fn pushup(config: &HeightConfig, patch: &PlanarPatch, n: usize) -> Result<HeightConfig, GibbsError> {
    let from_root = patch.distances_from(&[patch.root]);
    let within = |v: VertexId, r: usize| from_root[v].is_some_and(|d| d <= r);
    if (0..patch.n_vertices()).any(|v| within(v, n) && !patch.is_interior(v)) {
        return Err(GibbsError::RadiusTooLarge { n });
    }
    let shell: Vec<VertexId> = (0..patch.n_vertices()).filter(|&v| from_root[v] == Some(n + 1)).collect();
    let Some(m) = shell.iter().map(|&v| config.heights[v]).min() else {
        return Err(GibbsError::RadiusTooLarge { n });
    };
    let to_shell = patch.distances_from(&shell);
    let mut out = config.clone();
    for v in 0..patch.n_vertices() {
        if within(v, n + 1) {
            let psi = m + to_shell[v].expect("shell reachable inside the ball") as i64;
            out.heights[v] = out.heights[v].max(psi);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_ball, LatticeSpec};
    use std::f64::consts::LN_2;

    /// One free vertex with three pinned neighbours.
    fn star(neighbours: [i64; 3]) -> (PlanarPatch, HeightConfig) {
        let pos = vec![[0.0, 0.0], [1.0, 0.0], [-0.5, 0.8], [-0.5, -0.8]];
        let p = PlanarPatch::from_edges(pos, &[(0, 1), (0, 2), (0, 3)], &[0], 0).unwrap();
        let cfg = HeightConfig::with_fixed(&p, &[(1, neighbours[0]), (2, neighbours[1]), (3, neighbours[2])], None);
        (p, cfg)
    }

    #[test]
    fn homomorphism_forced_value() {
        let (p, cfg) = star([0, 0, 2]);
        let pots = EdgePotentials::uniform(&p, Potential::homomorphism());
        let d = exact_distribution(&p, &pots, &cfg, HeightRange::symmetric(3)).unwrap();
        assert_eq!(d.marginal(0), BTreeMap::from([(1, 1.0)]));
    }

    #[test]
    fn homomorphism_symmetric_value() {
        let (p, cfg) = star([0, 0, 0]);
        let pots = EdgePotentials::uniform(&p, Potential::homomorphism());
        let d = exact_distribution(&p, &pots, &cfg, HeightRange::symmetric(3)).unwrap();
        assert_eq!(d.marginal(0), BTreeMap::from([(-1, 0.5), (1, 0.5)]));
    }

    #[test]
    fn discrete_gaussian_single_site() {
        let (p, cfg) = star([0, 0, 0]);
        let pots = EdgePotentials::uniform(&p, Potential::discrete_gaussian(LN_2).unwrap());
        let d = exact_distribution(&p, &pots, &cfg, HeightRange::symmetric(3)).unwrap();
        // Direct sum of 2^{-3x^2} over |x| <= 3.
        let z: f64 = (-3i32..=3).map(|x| 2f64.powi(-3 * x * x)).sum();
        assert!((d.marginal(0)[&0] - 1.0 / z).abs() < 1e-15);
        assert!((d.marginal(0)[&0] - 0.7996).abs() < 1e-4);
    }

    #[test]
    fn infeasible_boundary() {
        let (p, cfg) = star([0, 0, 4]);
        let pots = EdgePotentials::uniform(&p, Potential::homomorphism());
        assert_eq!(exact_distribution(&p, &pots, &cfg, HeightRange::symmetric(5)).unwrap_err(), GibbsError::Infeasible);
    }

    #[test]
    fn enumeration_cap() {
        let patch = build_ball(&LatticeSpec::honeycomb(), 3, 0).unwrap();
        let cfg = HeightConfig::zero_boundary(&patch, true).unwrap();
        let pots = EdgePotentials::uniform(&patch, Potential::homomorphism());
        assert!(matches!(
            exact_distribution(&patch, &pots, &cfg, HeightRange::symmetric(3)),
            Err(GibbsError::TooLarge { .. })
        ));
    }

    #[test]
    fn heat_bath_is_reproducible() {
        let patch = build_ball(&LatticeSpec::honeycomb(), 3, 0).unwrap();
        let cfg = HeightConfig::zero_boundary(&patch, true).unwrap();
        let pots = EdgePotentials::uniform(&patch, Potential::homomorphism());
        let model = EnergyModel::from_patch(&patch, &pots, &cfg);
        let start = HeightConfig { heights: model.initial_heights(&cfg).unwrap(), ..cfg };
        let a = heat_bath_sweep(&start, &patch, &pots, 3, &mut ChainRng::seed_from_u64(9)).unwrap();
        let b = heat_bath_sweep(&start, &patch, &pots, 3, &mut ChainRng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.is_admissible(&patch, &pots));
    }

    #[test]
    fn window_validation() {
        let dg = vec![Potential::discrete_gaussian(LN_2).unwrap()];
        let s = SamplerConfig { height_window: Some(3), ..Default::default() };
        assert!(matches!(s.resolve_window(&dg), Err(GibbsError::WindowTooSmall { .. })));
        assert_eq!(SamplerConfig::auto_window(&[Potential::homomorphism()]), 3);
        let w = SamplerConfig::auto_window(&dg);
        assert!(dg[0].tail_fraction(w - 1) < WINDOW_TAIL_TOLERANCE);
    }

    #[test]
    fn pushup_on_path_by_hand() {
        // v0 - v1 - v2 - v3 - v4 with root v2 and Λ_1 = {v1, v2, v3}.
        let pos = (0..5).map(|i| [i as f64, 0.0]).collect();
        let p = PlanarPatch::from_edges(pos, &[(0, 1), (1, 2), (2, 3), (3, 4)], &[1, 2, 3], 2).unwrap();
        let cfg = HeightConfig {
            heights: vec![1, -1, -3, -1, 1],
            fixed: vec![true, false, false, false, true],
            odd_class: None,
        };
        // m_1 = min(1, 1) = 1; distances to {v0, v4} are (0, 1, 2, 1, 0).
        let out = pushup(&cfg, &p, 1).unwrap();
        assert_eq!(out.heights, vec![1, 2, 3, 2, 1]);
    }

    #[test]
    fn pushup_leaves_dominating_config() {
        let pos = (0..5).map(|i| [i as f64, 0.0]).collect();
        let p = PlanarPatch::from_edges(pos, &[(0, 1), (1, 2), (2, 3), (3, 4)], &[1, 2, 3], 2).unwrap();
        let cfg = HeightConfig {
            heights: vec![0, 1, 2, 1, 0],
            fixed: vec![true, false, false, false, true],
            odd_class: None,
        };
        assert_eq!(pushup(&cfg, &p, 1).unwrap(), cfg);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn batch_means_summary_shape() {
        let v: Vec<f64> = (0..300).map(|i| (i % 2) as f64).collect();
        let s = Summary::from_chains("x".into(), 0, &[&v]);
        assert_eq!(s.n_samples, 300);
        assert!((s.mean - 0.5).abs() < 1e-15);
        assert!((s.variance - 0.25).abs() < 1e-15);
        assert!(s.stderr < 1e-12);
    }

    #[test]
    fn local_fkg_agrees_with_pairwise() {
        let law = |p: [f64; 4]| JointDistribution {
            free: vec![0, 1],
            support: vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            probabilities: p.to_vec(),
            log_z: 0.0,
        };
        let pos = law([0.4, 0.1, 0.1, 0.4]);
        let neg = law([0.1, 0.4, 0.4, 0.1]);
        assert!(pos.fkg_local_violation().unwrap() <= 0.0 && pos.fkg_violation() <= 0.0);
        assert!(neg.fkg_local_violation().unwrap() > 0.1 && neg.fkg_violation() > 0.1);
        let holey = JointDistribution {
            support: pos.support[..3].to_vec(),
            probabilities: vec![0.5, 0.25, 0.25],
            ..pos.clone()
        };
        assert_eq!(holey.fkg_local_violation(), None);

        let (p, cfg) = star([0, 1, -1]);
        let pots = EdgePotentials::uniform(&p, Potential::discrete_gaussian(LN_2).unwrap());
        let d = exact_distribution(&p, &pots, &cfg, HeightRange::symmetric(4)).unwrap();
        assert!(d.fkg_local_violation().unwrap() <= 1e-15);
    }
}
