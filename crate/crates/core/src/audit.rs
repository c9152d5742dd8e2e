//! Invariant suites behind `heightlab audit`: Gibbs-measure properties on
//! enumerable fixtures, enrichment identities, and exploration properties.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::{
    collapse, enrich, forcing_violations, marginal_invariance_check, single_edge_total, EnrichedConfig,
    EnrichmentError, Midpoint,
};
use crate::exploration::{
    conditional_hamiltonian, explore_enriched_config, explore_plain, step_bound, Direction, EdgeState,
    ExplorationError, ExplorationResult, SelectionOrder,
};
use crate::gibbs::{
    derive_seed, exact_distribution, exact_distribution_model, log_concavity_violation, ChainRng, EnergyModel,
    GibbsError, HeatBath, HeightConfig, HeightRange, SamplerConfig, DEFAULT_ENUMERATION_CAP,
};
use crate::lattice::{build_ball, LatticeError, LatticeSpec, PlanarPatch, VertexId};
use crate::potentials::{decompose_weight, EdgePotentials, HalfInt, Potential, PotentialError};

pub const SUITES: [&str; 3] = ["fkg", "enrichment", "exploration"];
pub const EXACT_TOLERANCE: f64 = 1e-12;
pub const IDENTITY_TOLERANCE: f64 = 1e-14;
/// χ² critical value, one degree of freedom, significance 10⁻³.
pub const CHI2_1DOF_1E3: f64 = 10.828;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("unknown audit suite or fixture {0:?}")]
    FixtureMissing(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Enrichment(#[from] EnrichmentError),
    #[error(transparent)]
    Exploration(#[from] ExplorationError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl AuditCheck {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        AuditCheck { name: name.into(), passed: measured <= tolerance, measured, tolerance, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    fn new(suite: &str, checks: Vec<AuditCheck>) -> Self {
        AuditReport { suite: suite.to_string(), passed: checks.iter().all(|c| c.passed), checks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryLaw {
    /// 0 on the even-height class and 1 on the odd-height class.
    Zero,
    /// Graph distance `d` to the fixed vertex farthest from the root, folded
    /// to `min(d, 2 + d mod 2)` so that neighbours still differ by one.
    Distance,
}

/// A patch small enough to enumerate, with its fixed heights.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub patch: PlanarPatch,
    pub potentials: EdgePotentials,
    pub config: HeightConfig,
    pub range: HeightRange,
    pub parity: bool,
}

impl Fixture {
    pub fn exact(&self) -> Result<crate::gibbs::JointDistribution, GibbsError> {
        exact_distribution(&self.patch, &self.potentials, &self.config, self.range)
    }

    pub fn nonnegative_boundary(&self) -> bool {
        (0..self.config.heights.len()).all(|v| !self.config.fixed[v] || self.config.heights[v] >= 0)
    }

    pub fn free_count(&self) -> usize {
        self.config.fixed.iter().filter(|&&f| !f).count()
    }
}

/// The `n_free` vertices of a radius-2 ball closest to the root are free;
/// every other vertex is fixed by `law`. Parity models put odd heights on
/// the root's class.
pub fn ball_fixture(
    name: &str,
    spec: &LatticeSpec,
    potential: Potential,
    n_free: usize,
    law: BoundaryLaw,
    half_range: i64,
) -> Result<Fixture, AuditError> {
    let patch = build_ball(spec, 2, 0)?;
    let dist = patch.distances_from(&[patch.root]);
    let mut order = patch.interior.clone();
    order.sort_by_key(|&v| (dist[v], v));
    if n_free > order.len() {
        return Err(AuditError::FixtureMissing(format!("{name}: only {} interior vertices", order.len())));
    }
    let free = &order[..n_free];
    let parity = potential.classify().parity;
    let fixed: Vec<VertexId> = (0..patch.n_vertices()).filter(|v| !free.contains(v)).collect();
    let (values, odd_class): (Vec<(VertexId, i64)>, _) = match law {
        BoundaryLaw::Zero => {
            let odd = if parity { patch.parity_of(patch.root) } else { None };
            let vals = fixed.iter().map(|&v| (v, (parity && patch.parity_of(v) == odd) as i64)).collect();
            (vals, odd)
        }
        BoundaryLaw::Distance => {
            let s = *fixed.iter().max_by_key(|&&v| (dist[v], std::cmp::Reverse(v))).unwrap();
            let ds = patch.distances_from(&[s]);
            let odd = if parity { patch.parity_of(s).map(|p| p.flip()) } else { None };
            let fold = |d: i64| d.min(2 + d % 2);
            (fixed.iter().map(|&v| (v, fold(ds[v].unwrap() as i64))).collect(), odd)
        }
    };
    let config = HeightConfig::with_fixed(&patch, &values, odd_class);
    let potentials = EdgePotentials::uniform(&patch, potential);
    Ok(Fixture { name: name.to_string(), patch, potentials, config, range: HeightRange::symmetric(half_range), parity })
}

/// Fixtures for the Gibbs-measure audits.
pub fn enumerable_fixtures() -> Result<Vec<Fixture>, AuditError> {
    let hc = LatticeSpec::honeycomb();
    let ts = LatticeSpec::truncated_square();
    let hom = Potential::homomorphism;
    let klip = || Potential::k_lipschitz(1);
    let dg = || Potential::discrete_gaussian(LN_2);
    use BoundaryLaw::*;
    Ok(vec![
        ball_fixture("honeycomb/homomorphism/4", &hc, hom(), 4, Zero, 8)?,
        ball_fixture("honeycomb/homomorphism/8", &hc, hom(), 8, Zero, 8)?,
        ball_fixture("honeycomb/k_lipschitz_1/6", &hc, klip(), 6, Zero, 8)?,
        ball_fixture("honeycomb/k_lipschitz_1/8", &hc, klip(), 8, Zero, 8)?,
        ball_fixture("honeycomb/discrete_gaussian_ln2/4", &hc, dg()?, 4, Zero, 3)?,
        ball_fixture("honeycomb/discrete_gaussian_ln2/6", &hc, dg()?, 6, Zero, 4)?,
        ball_fixture("honeycomb/solid_on_solid_1/4", &hc, Potential::solid_on_solid(1.0)?, 4, Zero, 3)?,
        ball_fixture("truncated_square/homomorphism/4", &ts, hom(), 4, Zero, 8)?,
        ball_fixture("truncated_square/k_lipschitz_1/6", &ts, klip(), 6, Zero, 8)?,
        ball_fixture("honeycomb/homomorphism/6/distance", &hc, hom(), 6, Distance, 10)?,
        ball_fixture("honeycomb/k_lipschitz_1/6/distance", &hc, klip(), 6, Distance, 10)?,
        ball_fixture("honeycomb/discrete_gaussian_ln2/4/distance", &hc, dg()?, 4, Distance, 6)?,
    ])
}

/// Largest `|p_ψ(φ) - p_{-ψ}(-φ)|`, or infinity when the supports differ.
pub fn flip_symmetry_deviation(fixture: &Fixture) -> Result<f64, GibbsError> {
    let a = fixture.exact()?;
    let b = exact_distribution(&fixture.patch, &fixture.potentials, &fixture.config.negated(), fixture.range)?;
    if a.support.len() != b.support.len() {
        return Ok(f64::INFINITY);
    }
    let mb = b.to_map();
    let mut worst = 0.0f64;
    for (c, &p) in a.support.iter().zip(&a.probabilities) {
        let neg: Vec<i64> = c.iter().map(|h| -h).collect();
        match mb.get(&neg) {
            Some(&q) => worst = worst.max((p - q).abs()),
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(worst)
}

/// FKG lattice condition (all pairs on supports of at most
/// `fkg_support_limit` configurations, the two-site form on larger positive
/// boxes), root log-concavity, flip symmetry and the sign of the
/// root mean under nonnegative boundaries.
pub fn fkg_audit(fixtures: &[Fixture], fkg_support_limit: usize) -> Result<AuditReport, AuditError> {
    let mut checks = Vec::new();
    for f in fixtures {
        let dist = f.exact()?;
        let n = dist.support.len();
        if n <= fkg_support_limit {
            checks.push(AuditCheck::at_most(
                format!("fkg_lattice/{}", f.name),
                dist.fkg_violation(),
                EXACT_TOLERANCE,
                format!("all pairs of {n} configurations"),
            ));
        } else if let Some(v) = dist.fkg_local_violation() {
            checks.push(AuditCheck::at_most(
                format!("fkg_lattice/{}", f.name),
                v,
                EXACT_TOLERANCE,
                format!("two-site condition on a positive box of {n} configurations"),
            ));
        }
        let step = if f.parity { 2 } else { 1 };
        checks.push(AuditCheck::at_most(
            format!("log_concavity/{}", f.name),
            log_concavity_violation(&dist.marginal(f.patch.root), step),
            EXACT_TOLERANCE,
            format!("root marginal, step {step}"),
        ));
        checks.push(AuditCheck::at_most(
            format!("flip_symmetry/{}", f.name),
            flip_symmetry_deviation(f)?,
            EXACT_TOLERANCE,
            "max |p_psi(phi) - p_-psi(-phi)|",
        ));
        if f.nonnegative_boundary() {
            let mean = dist.mean(f.patch.root);
            checks.push(AuditCheck::at_most(
                format!("monotone_mean/{}", f.name),
                -mean,
                EXACT_TOLERANCE,
                format!("E[phi(r)] = {mean:.6e}"),
            ));
        }
    }
    Ok(AuditReport::new("fkg", checks))
}

/// Excited potentials shipped as named constructors.
pub fn shipped_excited_potentials() -> Vec<(String, Potential)> {
    let mut out = vec![
        ("k_lipschitz_1".to_string(), Potential::k_lipschitz(1)),
        ("k_lipschitz_2".to_string(), Potential::k_lipschitz(2)),
        ("k_lipschitz_3".to_string(), Potential::k_lipschitz(3)),
    ];
    for (name, beta) in [("ln2", LN_2), ("0.5", 0.5), ("0.1", 0.1)] {
        out.push((format!("discrete_gaussian_{name}"), Potential::discrete_gaussian(beta).unwrap()));
        out.push((format!("solid_on_solid_{name}"), Potential::solid_on_solid(beta).unwrap()));
    }
    out.retain(|(_, v)| v.classify().excited);
    out
}

fn relative_error(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Pearson χ² of a 2×2 contingency table for independence.
pub fn chi_square_2x2(t: [[u64; 2]; 2]) -> f64 {
    let n = (t[0][0] + t[0][1] + t[1][0] + t[1][1]) as f64;
    let rows = [(t[0][0] + t[0][1]) as f64, (t[1][0] + t[1][1]) as f64];
    let cols = [(t[0][0] + t[1][0]) as f64, (t[0][1] + t[1][1]) as f64];
    let mut chi = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            if e > 0.0 {
                chi += (t[i][j] as f64 - e).powi(2) / e;
            }
        }
    }
    chi
}

fn sample_chain(
    patch: &PlanarPatch,
    potentials: &EdgePotentials,
    config: &HeightConfig,
    seed: u64,
) -> Result<(EnergyModel, Vec<i64>, i64, ChainRng), AuditError> {
    let model = EnergyModel::from_patch(patch, potentials, config);
    let heights = model.initial_heights(config)?;
    let sampler = SamplerConfig { seed, ..SamplerConfig::default() };
    let w = sampler.resolve_window(model.potentials())?;
    Ok((model, heights, w, ChainRng::seed_from_u64(seed)))
}

/// Weight-decomposition identities for every shipped excited potential,
/// forcing rules and coin statistics on sampled enrichments, and the
/// bitwise invariance of the height chain under enrichment.
pub fn enrichment_audit(samples: usize, seed: u64) -> Result<AuditReport, AuditError> {
    let mut checks = Vec::new();
    for (name, v) in shipped_excited_potentials() {
        let mut decomposition = 0.0f64;
        let mut single = 0.0f64;
        for h in -5..=5 {
            let (e, p) = decompose_weight(&v, h)?;
            decomposition = decomposition.max(relative_error(e + p, v.weight(h)));
            single = single.max(relative_error(single_edge_total(&v, 0, h), v.weight(h)));
        }
        checks.push(AuditCheck::at_most(
            format!("decomposition/{name}"),
            decomposition,
            IDENTITY_TOLERANCE,
            "max relative error over h in [-5, 5]",
        ));
        checks.push(AuditCheck::at_most(
            format!("single_edge_sum/{name}"),
            single,
            IDENTITY_TOLERANCE,
            "exhaustive sum over (excited, midpoint)",
        ));
        checks.push(AuditCheck::at_most(
            format!("marginal_invariance/{name}"),
            marginal_invariance_check(&v, -5..=5).max_deviation,
            IDENTITY_TOLERANCE,
            "half-integer midpoint sum",
        ));
    }

    let patch = build_ball(&LatticeSpec::honeycomb(), 3, 0)?;
    let root_edge = patch.rotation[patch.root][0].1;
    let mut violations = 0usize;
    let mut collapse_mismatch = 0usize;
    let mut coin_table = [[0u64; 2]; 2];
    for (k, v) in [Potential::k_lipschitz(1), Potential::discrete_gaussian(LN_2)?].into_iter().enumerate() {
        let pots = EdgePotentials::uniform(&patch, v);
        let config = HeightConfig::zero_boundary(&patch, false)?;
        let (model, mut heights, w, mut rng) =
            sample_chain(&patch, &pots, &config, derive_seed(seed, "enrich", &[k as u64]))?;
        let mut bath = HeatBath::new(&model, w);
        let mut coin_rng = ChainRng::seed_from_u64(derive_seed(seed, "coins", &[k as u64]));
        let mut current = config.clone();
        for _ in 0..samples {
            bath.sweep(&mut heights, &mut rng)?;
            current.heights.copy_from_slice(&heights);
            let e = enrich(&current, &patch, &pots, true, &mut coin_rng)?;
            violations += forcing_violations(&e, &patch);
            collapse_mismatch += (collapse(&e) != current) as usize;
            let edge = &patch.edges[root_edge];
            let zero = (heights[edge.u] == 0 && heights[edge.v] == 0) as usize;
            let plus = (e.coins.as_ref().unwrap()[root_edge] == HalfInt::PLUS_HALF) as usize;
            coin_table[zero][plus] += 1;
        }
    }
    checks.push(AuditCheck::at_most(
        "forcing_rules",
        violations as f64,
        0.0,
        format!("{} sampled enrichments", 2 * samples),
    ));
    checks.push(AuditCheck::at_most("collapse_identity", collapse_mismatch as f64, 0.0, "collapse(enrich(phi)) = phi"));
    let n = (2 * samples) as f64;
    let plus = (coin_table[0][1] + coin_table[1][1]) as f64;
    checks.push(AuditCheck::at_most(
        "coin_fairness",
        (plus - n / 2.0).powi(2) / (n / 2.0) * 2.0,
        CHI2_1DOF_1E3,
        format!("{plus} of {n} coins are +1/2"),
    ));
    checks.push(AuditCheck::at_most(
        "coin_independence",
        chi_square_2x2(coin_table),
        CHI2_1DOF_1E3,
        format!("table {coin_table:?}"),
    ));

    // The same height stream with and without enrichment in between.
    let fixture = ball_fixture(
        "honeycomb/k_lipschitz_1/6",
        &LatticeSpec::honeycomb(),
        Potential::k_lipschitz(1),
        6,
        BoundaryLaw::Zero,
        8,
    )?;
    let stream_seed = derive_seed(seed, "stream", &[]);
    let plain = height_histogram(&fixture, samples, stream_seed, None)?;
    let enriched = height_histogram(&fixture, samples, stream_seed, Some(derive_seed(seed, "stream-coins", &[])))?;
    checks.push(AuditCheck::at_most(
        "sample_enrich_collapse",
        (plain != enriched) as u8 as f64,
        0.0,
        format!("{} distinct configurations", plain.len()),
    ));
    Ok(AuditReport::new("enrichment", checks))
}

fn height_histogram(
    f: &Fixture,
    samples: usize,
    seed: u64,
    enrich_seed: Option<u64>,
) -> Result<BTreeMap<Vec<i64>, u64>, AuditError> {
    let (model, mut heights, w, mut rng) = sample_chain(&f.patch, &f.potentials, &f.config, seed)?;
    let mut bath = HeatBath::new(&model, w);
    let mut coin_rng = enrich_seed.map(ChainRng::seed_from_u64);
    let mut hist = BTreeMap::new();
    let mut current = f.config.clone();
    for _ in 0..samples {
        bath.sweep(&mut heights, &mut rng)?;
        current.heights.copy_from_slice(&heights);
        let collapsed = match &mut coin_rng {
            Some(r) => collapse(&enrich(&current, &f.patch, &f.potentials, true, r)?),
            None => current.clone(),
        };
        *hist.entry(collapsed.heights).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Shape of the exploration fixture: a ball of radius `outer` sampled with
/// zero boundary, explored from outside `Λ_inner`.
#[derive(Clone, Copy, Debug)]
pub struct ExplorationSetup {
    pub outer: usize,
    pub inner: usize,
    pub samples: usize,
    /// Configurations also checked for order invariance and measurability.
    pub detailed: usize,
    /// Conditional laws enumerated exactly.
    pub exact: usize,
}

impl Default for ExplorationSetup {
    fn default() -> Self {
        ExplorationSetup { outer: 4, inner: 2, samples: 10_000, detailed: 200, exact: 50 }
    }
}

fn same_outcome(a: &ExplorationResult, b: &ExplorationResult) -> bool {
    a.revealed == b.revealed
}

/// Order invariance, termination, boundary-type exhaustiveness,
/// measurability, and the containment bounds of both exploration processes.
pub fn exploration_audit(setup: ExplorationSetup, seed: u64) -> Result<AuditReport, AuditError> {
    let patch = build_ball(&LatticeSpec::honeycomb(), setup.outer, 0)?;
    let region = patch.ball_mask(setup.inner);
    let pots = EdgePotentials::uniform(&patch, Potential::k_lipschitz(1));
    let config = HeightConfig::zero_boundary(&patch, false)?;
    let (model, mut heights, w, mut rng) = sample_chain(&patch, &pots, &config, derive_seed(seed, "explore", &[]))?;
    let mut bath = HeatBath::new(&model, w);
    let mut aux = ChainRng::seed_from_u64(derive_seed(seed, "explore-aux", &[]));
    let bound = step_bound(&patch, &region) as i64;
    let range = HeightRange::symmetric(2 * setup.outer as i64 + 4);

    let mut order_mismatch = 0usize;
    let mut order_checked = 0usize;
    let mut excess_steps = i64::MIN;
    let mut violations = 0usize;
    let mut measurability = 0usize;
    let mut plain_worst = f64::INFINITY;
    let mut plain_checked = 0usize;
    let mut enriched_worst = f64::INFINITY;
    let mut enriched_checked = 0usize;
    let mut current = config.clone();
    for s in 0..setup.samples {
        bath.sweep(&mut heights, &mut rng)?;
        current.heights.copy_from_slice(&heights);
        let e = enrich(&current, &patch, &pots, true, &mut aux)?;
        let enriched = explore_enriched_config(&e, &patch, &region, SelectionOrder::Fifo);
        let below = explore_plain(&current, &patch, &region, 0, Direction::Below, SelectionOrder::Fifo);
        violations += enriched.violations() + below.violations();
        for r in [&enriched, &below] {
            excess_steps = excess_steps.max(r.steps as i64 - bound);
        }
        if s < setup.detailed {
            let above = explore_plain(&current, &patch, &region, 0, Direction::Above, SelectionOrder::Fifo);
            for k in 0..10u64 {
                let order = SelectionOrder::Shuffled(derive_seed(seed, "order", &[s as u64, k]));
                let shuffled = [
                    (explore_enriched_config(&e, &patch, &region, order), &enriched),
                    (explore_plain(&current, &patch, &region, 0, Direction::Below, order), &below),
                    (explore_plain(&current, &patch, &region, 0, Direction::Above, order), &above),
                ];
                for (r, reference) in &shuffled {
                    order_checked += 1;
                    order_mismatch += !same_outcome(r, reference) as usize;
                    excess_steps = excess_steps.max(r.steps as i64 - bound);
                }
            }
            measurability += !replays_identically(&e, &enriched, &patch, &region, &mut aux) as usize;
            let mut scrambled = current.clone();
            for v in below.unrevealed() {
                scrambled.heights[v] = aux.gen_range(-5..=5);
            }
            let again = explore_plain(&scrambled, &patch, &region, 0, Direction::Below, SelectionOrder::Fifo);
            measurability += (again != below) as usize;
        }
        if plain_checked < setup.exact && below.root_unrevealed && below.unrevealed().len() <= DEFAULT_ENUMERATION_CAP {
            let (m, fixed) = conditional_hamiltonian(&below, &patch, &pots, &current)?;
            let d = exact_distribution_model(&m, &fixed, range, DEFAULT_ENUMERATION_CAP)?;
            plain_worst = plain_worst.min(d.mean(patch.root));
            plain_checked += 1;
        }
        let unrevealed = enriched.unrevealed();
        if enriched_checked < setup.exact && !unrevealed.is_empty() && unrevealed.len() <= DEFAULT_ENUMERATION_CAP {
            let (m, fixed) = conditional_hamiltonian(&enriched, &patch, &pots, &current)?;
            let d = exact_distribution_model(&m, &fixed, range, DEFAULT_ENUMERATION_CAP)?;
            for &x in &unrevealed {
                enriched_worst = enriched_worst.min(d.mean(x));
            }
            enriched_checked += 1;
        }
    }
    let checks = vec![
        AuditCheck::at_most(
            "order_invariance",
            order_mismatch as f64,
            0.0,
            format!("{order_checked} shuffled explorations, 10 orders per configuration"),
        ),
        AuditCheck::at_most(
            "termination_bound",
            excess_steps as f64,
            0.0,
            format!("max steps minus |E(region)| = {bound}"),
        ),
        AuditCheck::at_most("boundary_types", violations as f64, 0.0, format!("{} explorations", 2 * setup.samples)),
        AuditCheck::at_most("measurability", measurability as f64, 0.0, "replays with scrambled unrevealed data"),
        AuditCheck::at_most(
            "plain_containment",
            -plain_worst,
            EXACT_TOLERANCE,
            format!("min E[phi(r) | R] = {plain_worst:.6e} over {plain_checked} outcomes"),
        ),
        AuditCheck::at_most(
            "enriched_containment",
            0.5 - enriched_worst,
            EXACT_TOLERANCE,
            format!("min E[phi(x) | R] = {enriched_worst:.6e} over {enriched_checked} outcomes"),
        ),
    ];
    Ok(AuditReport::new("exploration", checks))
}

/// Scrambles every height and edge state the enriched exploration did not
/// look at, then checks that the exploration is unchanged.
fn replays_identically<R: Rng>(
    e: &EnrichedConfig,
    result: &ExplorationResult,
    patch: &PlanarPatch,
    region: &[bool],
    rng: &mut R,
) -> bool {
    let mut s = e.clone();
    for v in result.unrevealed() {
        s.base.heights[v] = rng.gen_range(-5..=5);
    }
    for (i, state) in result.edge_states.iter().enumerate() {
        if *state == EdgeState::Unknown {
            s.excited[i] = rng.gen();
            s.midpoint[i] = if s.excited[i] {
                Midpoint::Defined(HalfInt::from_x2(2 * rng.gen_range(-3..=3) + 1))
            } else {
                Midpoint::Undefined
            };
        }
    }
    explore_enriched_config(&s, patch, region, SelectionOrder::Fifo) == *result
}

/// Runs a named suite with its default sizes.
pub fn run_suite(name: &str, seed: u64) -> Result<AuditReport, AuditError> {
    match name {
        "fkg" => fkg_audit(&enumerable_fixtures()?, 3000),
        "enrichment" => enrichment_audit(100_000, seed),
        "exploration" => exploration_audit(ExplorationSetup::default(), seed),
        other => Err(AuditError::FixtureMissing(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let f =
            ball_fixture("t", &LatticeSpec::honeycomb(), Potential::homomorphism(), 4, BoundaryLaw::Zero, 5).unwrap();
        assert_eq!(f.free_count(), 4);
        assert!(f.nonnegative_boundary());
        assert!(!f.config.fixed[f.patch.root]);
        assert!(f.config.requires_odd(&f.patch, f.patch.root));
        let d = f.exact().unwrap();
        assert!((d.total_probability() - 1.0).abs() < 1e-15);
        assert!(d.marginal(f.patch.root).keys().all(|h| h % 2 != 0));
    }

    #[test]
    fn chi_square_of_balanced_table_is_zero() {
        assert_eq!(chi_square_2x2([[10, 10], [30, 30]]), 0.0);
        assert!(chi_square_2x2([[100, 0], [0, 100]]) > CHI2_1DOF_1E3);
    }

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("nope", 0), Err(AuditError::FixtureMissing(_))));
    }

    #[test]
    fn small_suites_pass() {
        let e = enrichment_audit(2000, 1).unwrap();
        assert!(e.passed, "{e:#?}");
        let x = exploration_audit(
            ExplorationSetup { samples: 300, detailed: 20, exact: 10, ..ExplorationSetup::default() },
            1,
        )
        .unwrap();
        assert!(x.passed, "{x:#?}");
    }
}
