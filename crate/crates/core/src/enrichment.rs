//! The enriched model: every edge carries an excitation bit and, when
//! excited, a half-integer midpoint height; optionally a fair coin per edge
//! that fixes the midpoint of zero–zero edges.
//!
//! Per edge with gradient `h`, the weight `e^{-V(h)}` is split into
//! `½ Σ_z e^{-V_*(z - φ(x)) - V_*(z - φ(y))}` for the excited state and the
//! remainder `e^{-V(h)} - e^{-V*(h)}` for the plain state. Given the heights,
//! edges are independent, so enrichment is a per-edge draw.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::HeightConfig;
use crate::lattice::{EdgeId, PlanarPatch};
use crate::potentials::{midpoint_potential, star_weight, EdgePotentials, HalfInt, Potential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnrichmentError {
    #[error("edge {0} carries a potential that is not excited")]
    NotExcitedPotential(EdgeId),
    #[error("midpoint undefined for heights {phix} and {phiy}: gap too large")]
    GapTooLarge { phix: i64, phiy: i64 },
    #[error("configuration has infinite energy on edge {0}")]
    Inadmissible(EdgeId),
}

/// Midpoint height of an edge; `Undefined` on edges that are not excited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Midpoint {
    Undefined,
    Defined(HalfInt),
}

impl Midpoint {
    pub fn value(self) -> Option<HalfInt> {
        match self {
            Midpoint::Undefined => None,
            Midpoint::Defined(z) => Some(z),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnrichedConfig {
    pub base: HeightConfig,
    pub excited: Vec<bool>,
    pub midpoint: Vec<Midpoint>,
    pub coins: Option<Vec<HalfInt>>,
}

/// Law of the midpoint given the endpoint heights.
pub fn midpoint_distribution(phix: i64, phiy: i64) -> Result<Vec<(HalfInt, f64)>, EnrichmentError> {
    match (phiy - phix).abs() {
        0 => Ok(vec![(HalfInt::from_x2(2 * phix - 1), 0.5), (HalfInt::from_x2(2 * phix + 1), 0.5)]),
        1 => Ok(vec![(HalfInt::from_x2(phix + phiy), 1.0)]),
        _ => Err(EnrichmentError::GapTooLarge { phix, phiy }),
    }
}

/// Weight of one enriched edge state.
pub fn enriched_edge_weight(v: &Potential, phix: i64, phiy: i64, excited: bool, midpoint: Midpoint) -> f64 {
    let vs = midpoint_potential();
    match (excited, midpoint) {
        (true, Midpoint::Defined(z)) => {
            0.5 * vs.weight(HalfInt::from_x2(z.x2() - 2 * phix)) * vs.weight(HalfInt::from_x2(z.x2() - 2 * phiy))
        }
        (true, Midpoint::Undefined) => 0.0,
        (false, Midpoint::Undefined) => {
            let h = phiy - phix;
            v.weight(h) - star_weight(h)
        }
        (false, Midpoint::Defined(_)) => 0.0,
    }
}

/// Probability that an edge with gradient `h` is excited.
pub fn excitation_probability(v: &Potential, h: i64) -> Option<f64> {
    let w = v.weight(h);
    (w > 0.0).then(|| (star_weight(h) / w).min(1.0))
}

fn check_excited(patch: &PlanarPatch, potentials: &EdgePotentials) -> Result<(), EnrichmentError> {
    let ok: Vec<bool> = potentials.potentials.iter().map(|p| p.classify().excited).collect();
    match (0..patch.n_edges()).find(|&e| !ok[potentials.assignment[e]]) {
        Some(e) => Err(EnrichmentError::NotExcitedPotential(e)),
        None => Ok(()),
    }
}

/// Draws the excitation bits and midpoints of every patch edge given the
/// heights. With `couple_coins`, fair coins are drawn for all edges first and
/// become the midpoint of every excited edge whose endpoints are both zero.
pub fn enrich<R: Rng>(
    config: &HeightConfig,
    patch: &PlanarPatch,
    potentials: &EdgePotentials,
    couple_coins: bool,
    rng: &mut R,
) -> Result<EnrichedConfig, EnrichmentError> {
    check_excited(patch, potentials)?;
    let coins: Option<Vec<HalfInt>> = couple_coins.then(|| {
        (0..patch.n_edges()).map(|_| if rng.gen::<bool>() { HalfInt::PLUS_HALF } else { HalfInt::MINUS_HALF }).collect()
    });
    let m = patch.n_edges();
    let mut excited = vec![false; m];
    let mut midpoint = vec![Midpoint::Undefined; m];
    for (i, e) in patch.edges.iter().enumerate() {
        let (x, y) = (config.heights[e.u], config.heights[e.v]);
        let h = y - x;
        let p = excitation_probability(potentials.get(i), h).ok_or(EnrichmentError::Inadmissible(i))?;
        let eps = p >= 1.0 || (p > 0.0 && rng.gen::<f64>() < p);
        excited[i] = eps;
        if !eps {
            continue;
        }
        midpoint[i] = Midpoint::Defined(match (h, &coins) {
            (0, Some(c)) if x == 0 => c[i],
            (0, _) => HalfInt::from_x2(2 * x + if rng.gen::<bool>() { 1 } else { -1 }),
            _ => HalfInt::from_x2(x + y),
        });
    }
    Ok(EnrichedConfig { base: config.clone(), excited, midpoint, coins })
}

/// Drops the excitation bits, midpoints and coins.
pub fn collapse(e: &EnrichedConfig) -> HeightConfig {
    e.base.clone()
}

/// Counts violations of the forcing rules: zero gradient forces excitation,
/// gradients beyond one forbid it, midpoints exist exactly on excited edges
/// and sit ½ from both endpoints, and coupled zero–zero edges use the coin.
pub fn forcing_violations(e: &EnrichedConfig, patch: &PlanarPatch) -> usize {
    let mut bad = 0;
    for (i, edge) in patch.edges.iter().enumerate() {
        let (x, y) = (e.base.heights[edge.u], e.base.heights[edge.v]);
        let h = y - x;
        if h == 0 && !e.excited[i] {
            bad += 1;
        }
        if h.abs() > 1 && e.excited[i] {
            bad += 1;
        }
        match (e.excited[i], e.midpoint[i]) {
            (true, Midpoint::Defined(z)) => {
                if (z.x2() - 2 * x).abs() != 1 || (z.x2() - 2 * y).abs() != 1 {
                    bad += 1;
                }
                if let Some(c) = &e.coins {
                    if x == 0 && y == 0 && z != c[i] {
                        bad += 1;
                    }
                }
            }
            (false, Midpoint::Undefined) => {}
            _ => bad += 1,
        }
    }
    bad
}

/// Sum of the enriched weights over `(ε, midpoint)` for one edge.
pub fn single_edge_total(v: &Potential, phix: i64, phiy: i64) -> f64 {
    let lo = 2 * phix.min(phiy) - 5;
    let hi = 2 * phix.max(phiy) + 5;
    let excited: f64 = (lo..=hi)
        .filter(|z| z.rem_euclid(2) == 1)
        .map(|z| enriched_edge_weight(v, phix, phiy, true, Midpoint::Defined(HalfInt::from_x2(z))))
        .sum();
    excited + enriched_edge_weight(v, phix, phiy, false, Midpoint::Undefined)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub h: i64,
    pub excited_part: f64,
    pub plain_part: f64,
    pub target: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub excited_potential: bool,
    pub rows: Vec<InvarianceRow>,
    pub max_deviation: f64,
}

/// Checks `½ Σ_z e^{-V_*(z)} e^{-V_*(z-h)} + [e^{-V(h)} - e^{-V*(h)}] = e^{-V(h)}`
/// over half-integers `z`, for every `h` in the range.
pub fn marginal_invariance_check(v: &Potential, h_range: std::ops::RangeInclusive<i64>) -> InvarianceReport {
    let vs = midpoint_potential();
    let mut rows = Vec::new();
    for h in h_range {
        let reach = 2 * h.abs() + 5;
        let excited_part = 0.5
            * (-reach..=reach)
                .filter(|z| z.rem_euclid(2) == 1)
                .map(|z| vs.weight(HalfInt::from_x2(z)) * vs.weight(HalfInt::from_x2(z - 2 * h)))
                .sum::<f64>();
        let target = v.weight(h);
        let plain_part = target - star_weight(h);
        let deviation = (excited_part + plain_part - target).abs();
        rows.push(InvarianceRow { h, excited_part, plain_part, target, deviation });
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    InvarianceReport { excited_potential: v.classify().excited, rows, max_deviation }
}

/// JSON form: the height document plus per-edge states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrichedDocument {
    #[serde(flatten)]
    pub base: HeightConfig,
    pub excited: Vec<(EdgeId, u8)>,
    pub midpoint_x2: Vec<(EdgeId, Option<i64>)>,
    pub coin_x2: Vec<(EdgeId, i64)>,
}

impl EnrichedConfig {
    pub fn to_document(&self) -> EnrichedDocument {
        EnrichedDocument {
            base: self.base.clone(),
            excited: self.excited.iter().enumerate().map(|(i, &b)| (i, b as u8)).collect(),
            midpoint_x2: self.midpoint.iter().enumerate().map(|(i, m)| (i, m.value().map(HalfInt::x2))).collect(),
            coin_x2: self.coins.iter().flatten().enumerate().map(|(i, c)| (i, c.x2())).collect(),
        }
    }

    pub fn from_document(doc: &EnrichedDocument) -> Self {
        let m = doc.excited.len();
        let mut excited = vec![false; m];
        for &(i, b) in &doc.excited {
            excited[i] = b == 1;
        }
        let mut midpoint = vec![Midpoint::Undefined; m];
        for &(i, z) in &doc.midpoint_x2 {
            midpoint[i] = z.map_or(Midpoint::Undefined, |z| Midpoint::Defined(HalfInt::from_x2(z)));
        }
        let coins = (!doc.coin_x2.is_empty()).then(|| {
            let mut c = vec![HalfInt::PLUS_HALF; m];
            for &(i, z) in &doc.coin_x2 {
                c[i] = HalfInt::from_x2(z);
            }
            c
        });
        EnrichedConfig { base: doc.base.clone(), excited, midpoint, coins }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::ChainRng;
    use rand::SeedableRng;
    use std::f64::consts::LN_2;

    fn two_vertices(phix: i64, phiy: i64) -> (PlanarPatch, HeightConfig) {
        let p = PlanarPatch::from_edges(vec![[0.0, 0.0], [1.0, 0.0]], &[(0, 1)], &[0], 0).unwrap();
        let cfg = HeightConfig { heights: vec![phix, phiy], fixed: vec![false, true], odd_class: None };
        (p, cfg)
    }

    #[test]
    fn midpoint_distribution_cases() {
        assert_eq!(midpoint_distribution(0, 0).unwrap(), vec![(HalfInt::MINUS_HALF, 0.5), (HalfInt::PLUS_HALF, 0.5)]);
        assert_eq!(midpoint_distribution(0, 1).unwrap(), vec![(HalfInt::PLUS_HALF, 1.0)]);
        assert_eq!(midpoint_distribution(3, 2).unwrap(), vec![(HalfInt::from_x2(5), 1.0)]);
        assert_eq!(midpoint_distribution(0, 2).unwrap_err(), EnrichmentError::GapTooLarge { phix: 0, phiy: 2 });
    }

    #[test]
    fn excitation_probabilities() {
        for v in [Potential::k_lipschitz(1), Potential::discrete_gaussian(0.3).unwrap()] {
            assert_eq!(excitation_probability(&v, 0), Some(1.0));
        }
        assert_eq!(excitation_probability(&Potential::k_lipschitz(1), 1), Some(0.5));
        assert_eq!(excitation_probability(&Potential::discrete_gaussian(LN_2).unwrap(), 1), Some(1.0));
        assert_eq!(excitation_probability(&Potential::k_lipschitz(3), 2), Some(0.0));
    }

    #[test]
    fn enrich_rejects_unexcited_potential() {
        let (p, cfg) = two_vertices(0, 0);
        let pots = EdgePotentials::uniform(&p, Potential::solid_on_solid(1.0).unwrap());
        let err = enrich(&cfg, &p, &pots, false, &mut ChainRng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, EnrichmentError::NotExcitedPotential(0));
    }

    #[test]
    fn zero_edge_is_always_excited_and_coupled() {
        let (p, cfg) = two_vertices(0, 0);
        let pots = EdgePotentials::uniform(&p, Potential::k_lipschitz(1));
        let mut rng = ChainRng::seed_from_u64(3);
        for _ in 0..200 {
            let e = enrich(&cfg, &p, &pots, true, &mut rng).unwrap();
            assert!(e.excited[0]);
            assert_eq!(e.midpoint[0], Midpoint::Defined(e.coins.as_ref().unwrap()[0]));
            assert_eq!(forcing_violations(&e, &p), 0);
            assert_eq!(collapse(&e), cfg);
        }
    }

    #[test]
    fn unit_gradient_excitation_frequency() {
        let (p, cfg) = two_vertices(0, 1);
        let pots = EdgePotentials::uniform(&p, Potential::k_lipschitz(1));
        let mut rng = ChainRng::seed_from_u64(11);
        let n = 20_000;
        let hits = (0..n).filter(|_| enrich(&cfg, &p, &pots, false, &mut rng).unwrap().excited[0]).count();
        let f = hits as f64 / n as f64;
        // 4 sigma of a fair coin at n = 20000
        assert!((f - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "frequency {f}");
    }

    #[test]
    fn single_edge_sum_reproduces_weight() {
        let v = Potential::k_lipschitz(2);
        for h in -5..=5 {
            assert!((single_edge_total(&v, 0, h) - v.weight(h)).abs() < 1e-15);
        }
    }

    #[test]
    fn invariance_report_examples() {
        let r = marginal_invariance_check(&Potential::k_lipschitz(1), -2..=2);
        assert!(r.max_deviation < 1e-14);
        let zero = r.rows.iter().find(|r| r.h == 0).unwrap();
        assert_eq!((zero.excited_part, zero.plain_part, zero.target), (1.0, 0.0, 1.0));
        let v = Potential::discrete_gaussian(0.5).unwrap();
        let three = &marginal_invariance_check(&v, 3..=3).rows[0];
        assert_eq!(three.excited_part, 0.0);
        assert_eq!(three.plain_part, v.weight(3));
    }

    #[test]
    fn document_round_trip() {
        let (p, cfg) = two_vertices(0, 0);
        let pots = EdgePotentials::uniform(&p, Potential::k_lipschitz(1));
        let e = enrich(&cfg, &p, &pots, true, &mut ChainRng::seed_from_u64(5)).unwrap();
        let json = serde_json::to_string(&e.to_document()).unwrap();
        assert!(json.contains("\"midpoint_x2\""));
        let back: EnrichedDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(EnrichedConfig::from_document(&back), e);
    }
}
