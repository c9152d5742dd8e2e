//! Exploration processes on balls: the plain threshold exploration, the
//! enriched exploration driven by excitation states and midpoints, the
//! Hamiltonian conditional on an exploration outcome, and the blocking
//! connectivity predicate.
//!
//! The driver holds the whole configuration; a process only decides which
//! vertices become revealed, reading heights of revealed vertices and the
//! states of edges it has examined.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::{enrich, EnrichedConfig, EnrichmentError, Midpoint};
use crate::gibbs::{ChainRng, EnergyModel, HeightConfig, PairTerm};
use crate::lattice::{EdgeId, PlanarPatch, VertexId};
use crate::percolation::{Carrier, SpinField};
use crate::potentials::{EdgePotentials, HalfInt};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplorationError {
    #[error("boundary edge {edge} from vertex {vertex} is neither positive nor a +1/2 excited zero edge")]
    InconsistentBoundary { edge: EdgeId, vertex: VertexId },
    #[error(transparent)]
    Enrichment(#[from] EnrichmentError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Below,
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionOrder {
    /// First in, first out by reveal generation, then vertex id.
    Fifo,
    /// Uniformly random eligible edge at every step.
    Shuffled(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeState {
    Unknown,
    Excited,
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryType {
    /// Enriched: `φ(x) > 0` and the edge state was never examined.
    PositiveUnrevealedState,
    /// Enriched: `φ(x) = 0`, excited, midpoint `+½`.
    ZeroExcitedPlusHalf,
    /// Plain: `φ(x)` on the non-triggering side of the threshold.
    Threshold,
    Violation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub from: VertexId,
    pub to: VertexId,
    pub edge: EdgeId,
    pub kind: BoundaryType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplorationResult {
    pub revealed: Vec<bool>,
    pub root: VertexId,
    pub root_unrevealed: bool,
    /// Directed edges from a revealed to an unrevealed vertex.
    pub boundary_edges: Vec<BoundaryEdge>,
    pub edge_states: Vec<EdgeState>,
    pub revealed_midpoints: BTreeMap<EdgeId, HalfInt>,
    /// Vertices in the order they were revealed, excluding the initial set.
    pub reveal_order: Vec<VertexId>,
    /// Number of edges examined.
    pub steps: usize,
    pub enriched: bool,
}

impl ExplorationResult {
    pub fn unrevealed(&self) -> Vec<VertexId> {
        (0..self.revealed.len()).filter(|&v| !self.revealed[v]).collect()
    }

    pub fn violations(&self) -> usize {
        self.boundary_edges.iter().filter(|b| b.kind == BoundaryType::Violation).count()
    }

    pub fn to_document(&self) -> ExplorationDocument {
        ExplorationDocument {
            revealed: self.revealed.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            root_unrevealed: self.root_unrevealed,
            boundary_edges: self.boundary_edges.clone(),
            reveal_order: self.reveal_order.clone(),
            steps: self.steps,
        }
    }
}

/// JSON form; `revealed` is a bitset string indexed by vertex id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationDocument {
    pub revealed: String,
    pub root_unrevealed: bool,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub reveal_order: Vec<VertexId>,
    pub steps: usize,
}

/// Edges with at least one endpoint in `region`: the most an exploration of
/// `region` can examine.
pub fn step_bound(patch: &PlanarPatch, region: &[bool]) -> usize {
    patch.edges.iter().filter(|e| region[e.u] || region[e.v]).count()
}

/// Outcome of examining the edge from revealed `x` to unrevealed `y`.
struct Examined {
    reveal: bool,
    state: EdgeState,
    midpoint: Option<HalfInt>,
}

fn run_process(
    patch: &PlanarPatch,
    region: &[bool],
    order: SelectionOrder,
    triggers: impl Fn(VertexId) -> bool,
    examine: impl Fn(VertexId, EdgeId) -> Examined,
) -> ExplorationResult {
    let n = patch.n_vertices();
    let mut revealed: Vec<bool> = region.iter().map(|&r| !r).collect();
    let mut edge_states = vec![EdgeState::Unknown; patch.n_edges()];
    let mut revealed_midpoints = BTreeMap::new();
    let mut reveal_order = Vec::new();
    let mut queue: VecDeque<(VertexId, VertexId, EdgeId)> = VecDeque::new();
    let push = |x: VertexId, revealed: &[bool], queue: &mut VecDeque<_>| {
        if triggers(x) {
            for &(y, e) in &patch.rotation[x] {
                if !revealed[y] {
                    queue.push_back((x, y, e));
                }
            }
        }
    };
    for x in 0..n {
        if revealed[x] {
            push(x, &revealed, &mut queue);
        }
    }
    let mut rng = match order {
        SelectionOrder::Shuffled(seed) => Some(ChainRng::seed_from_u64(seed)),
        SelectionOrder::Fifo => None,
    };
    let mut steps = 0;
    loop {
        let next = match &mut rng {
            None => queue.pop_front(),
            Some(rng) if !queue.is_empty() => {
                let i = rng.gen_range(0..queue.len());
                queue.swap_remove_back(i)
            }
            Some(_) => None,
        };
        let Some((x, y, e)) = next else { break };
        if revealed[y] {
            continue;
        }
        steps += 1;
        let out = examine(x, e);
        edge_states[e] = out.state;
        if let Some(z) = out.midpoint {
            revealed_midpoints.insert(e, z);
        }
        if out.reveal {
            revealed[y] = true;
            reveal_order.push(y);
            push(y, &revealed, &mut queue);
        }
    }
    ExplorationResult {
        root: patch.root,
        root_unrevealed: !revealed[patch.root],
        revealed,
        boundary_edges: Vec::new(),
        edge_states,
        revealed_midpoints,
        reveal_order,
        steps,
        enriched: false,
    }
}

fn boundary_edges(
    patch: &PlanarPatch,
    revealed: &[bool],
    classify: impl Fn(VertexId, EdgeId) -> BoundaryType,
) -> Vec<BoundaryEdge> {
    let mut out = Vec::new();
    for (i, e) in patch.edges.iter().enumerate() {
        let (x, y) = match (revealed[e.u], revealed[e.v]) {
            (true, false) => (e.u, e.v),
            (false, true) => (e.v, e.u),
            _ => continue,
        };
        out.push(BoundaryEdge { from: x, to: y, edge: i, kind: classify(x, i) });
    }
    out
}

/// Starting from the revealed complement of `region` (usually a ball
/// `Λ_n` strictly inside the patch), reveals every
/// unrevealed neighbour of a revealed vertex with `φ < a` (`Below`) or
/// `φ > a` (`Above`) until none is left.
pub fn explore_plain(
    config: &HeightConfig,
    patch: &PlanarPatch,
    region: &[bool],
    a: i64,
    direction: Direction,
    order: SelectionOrder,
) -> ExplorationResult {
    match direction {
        Direction::Below => explore_below(&config.heights, patch, region, a, order),
        Direction::Above => {
            let negated: Vec<i64> = config.heights.iter().map(|h| -h).collect();
            explore_below(&negated, patch, region, -a, order)
        }
    }
}

fn explore_below(
    heights: &[i64],
    patch: &PlanarPatch,
    region: &[bool],
    a: i64,
    order: SelectionOrder,
) -> ExplorationResult {
    let mut r = run_process(
        patch,
        region,
        order,
        |x| heights[x] < a,
        |_, _| Examined { reveal: true, state: EdgeState::Unknown, midpoint: None },
    );
    r.boundary_edges = boundary_edges(patch, &r.revealed, |x, _| {
        if heights[x] >= a {
            BoundaryType::Threshold
        } else {
            BoundaryType::Violation
        }
    });
    r
}

/// Enriched exploration over a fully drawn enriched configuration. From a
/// revealed `x`: if `φ(x) < 0` reveal `y`; if `φ(x) = 0` examine the edge
/// state, reveal `y` when plain, otherwise examine the midpoint and reveal
/// `y` iff it is `-½`.
pub fn explore_enriched_config(
    e: &EnrichedConfig,
    patch: &PlanarPatch,
    region: &[bool],
    order: SelectionOrder,
) -> ExplorationResult {
    let h = &e.base.heights;
    let mut r = run_process(
        patch,
        region,
        order,
        |x| h[x] <= 0,
        |x, i| {
            if h[x] < 0 {
                return Examined { reveal: true, state: EdgeState::Unknown, midpoint: None };
            }
            match (e.excited[i], e.midpoint[i]) {
                (true, Midpoint::Defined(z)) => {
                    Examined { reveal: z.x2() - 2 * h[x] == -1, state: EdgeState::Excited, midpoint: Some(z) }
                }
                _ => Examined { reveal: true, state: EdgeState::Plain, midpoint: None },
            }
        },
    );
    let states = r.edge_states.clone();
    let mids = r.revealed_midpoints.clone();
    r.boundary_edges = boundary_edges(patch, &r.revealed, |x, i| match (h[x], states[i]) {
        (p, EdgeState::Unknown) if p > 0 => BoundaryType::PositiveUnrevealedState,
        (0, EdgeState::Excited) if mids.get(&i) == Some(&HalfInt::PLUS_HALF) => BoundaryType::ZeroExcitedPlusHalf,
        _ => BoundaryType::Violation,
    });
    r.enriched = true;
    r
}

/// Enriches `config` with coins attached and runs the enriched exploration.
pub fn explore_enriched<R: Rng>(
    config: &HeightConfig,
    patch: &PlanarPatch,
    potentials: &EdgePotentials,
    region: &[bool],
    order: SelectionOrder,
    rng: &mut R,
) -> Result<(EnrichedConfig, ExplorationResult), ExplorationError> {
    let e = enrich(config, patch, potentials, true, rng)?;
    let r = explore_enriched_config(&e, patch, region, order);
    Ok((e, r))
}

/// Energy of the unrevealed heights given an exploration outcome, with the
/// revealed heights of `config` held fixed. Enriched results replace each
/// `+½` boundary edge by the midpoint term `V_*(φ(y) - ½)`.
pub fn conditional_hamiltonian(
    result: &ExplorationResult,
    patch: &PlanarPatch,
    potentials: &EdgePotentials,
    config: &HeightConfig,
) -> Result<(EnergyModel, HeightConfig), ExplorationError> {
    let kinds: BTreeMap<EdgeId, BoundaryType> = result.boundary_edges.iter().map(|b| (b.edge, b.kind)).collect();
    let mut pairs = Vec::new();
    let mut anchors = Vec::new();
    for (i, e) in patch.edges.iter().enumerate() {
        if result.revealed[e.u] && result.revealed[e.v] {
            continue;
        }
        let pair = PairTerm { u: e.u, v: e.v, potential: potentials.assignment[i] };
        match kinds.get(&i) {
            None => pairs.push(pair),
            Some(_) if !result.enriched => pairs.push(pair),
            Some(BoundaryType::PositiveUnrevealedState) => pairs.push(pair),
            Some(BoundaryType::ZeroExcitedPlusHalf) => {
                let y = if result.revealed[e.u] { e.v } else { e.u };
                anchors.push((y, HalfInt::PLUS_HALF));
            }
            Some(_) => {
                let x = if result.revealed[e.u] { e.u } else { e.v };
                return Err(ExplorationError::InconsistentBoundary { edge: i, vertex: x });
            }
        }
    }
    let model =
        EnergyModel::new(patch.n_vertices(), result.unrevealed(), potentials.potentials.clone(), pairs, anchors);
    let fixed_config =
        HeightConfig { heights: config.heights.clone(), fixed: result.revealed.clone(), odd_class: config.odd_class };
    Ok((model, fixed_config))
}

/// Whether `r` reaches `boundary_set` using edges with `σ = -1` together
/// with every edge at `r`.
pub fn blocking_connectivity(sigma: &SpinField, patch: &PlanarPatch, r: VertexId, boundary_set: &[bool]) -> bool {
    assert_eq!(sigma.carrier, Carrier::Edges, "blocking connectivity needs edge spins");
    let mut seen = vec![false; patch.n_vertices()];
    let mut queue = VecDeque::from([r]);
    seen[r] = true;
    while let Some(x) = queue.pop_front() {
        if boundary_set[x] {
            return true;
        }
        for &(y, e) in &patch.rotation[x] {
            if !seen[y] && (x == r || sigma.spins[e] == -1) {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_ball, LatticeSpec};
    use crate::potentials::Potential;

    fn path_patch(heights: &[i64], interior: &[usize]) -> (PlanarPatch, HeightConfig) {
        let n = heights.len();
        let pos = (0..n).map(|i| [i as f64, 0.0]).collect();
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let p = PlanarPatch::from_edges(pos, &edges, interior, interior[0]).unwrap();
        let cfg = HeightConfig {
            heights: heights.to_vec(),
            fixed: (0..n).map(|v| !interior.contains(&v)).collect(),
            odd_class: None,
        };
        (p, cfg)
    }

    #[test]
    fn plain_trivial_cases() {
        let p = build_ball(&LatticeSpec::honeycomb(), 3, 0).unwrap();
        let mut cfg = HeightConfig::zero_boundary(&p, false).unwrap();
        let region = &p.interior_mask;
        let r = explore_plain(&cfg, &p, region, 0, Direction::Below, SelectionOrder::Fifo);
        assert_eq!(r.unrevealed(), p.interior);
        assert!(r.root_unrevealed);
        cfg.heights.iter_mut().for_each(|h| *h = -1);
        let r = explore_plain(&cfg, &p, region, 0, Direction::Below, SelectionOrder::Fifo);
        assert!(r.unrevealed().is_empty());
        assert!(r.steps <= step_bound(&p, region));
    }

    #[test]
    fn plain_path_hand_trace() {
        let (p, cfg) = path_patch(&[-1, 0, -1, 0, 0], &[1, 2, 3]);
        let r = explore_plain(&cfg, &p, &p.interior_mask, 0, Direction::Below, SelectionOrder::Fifo);
        assert_eq!(r.unrevealed(), vec![2, 3]);
        assert_eq!(r.reveal_order, vec![1]);
        assert_eq!(r.violations(), 0);
        // Mirrored: reveal across φ > 0 after negating.
        let r = explore_plain(&cfg.negated(), &p, &p.interior_mask, 0, Direction::Above, SelectionOrder::Fifo);
        assert_eq!(r.unrevealed(), vec![2, 3]);
    }

    #[test]
    fn corridor_stops_at_plus_half() {
        let (p, cfg) = path_patch(&[0, 0], &[1]);
        let e = EnrichedConfig {
            base: cfg,
            excited: vec![true],
            midpoint: vec![Midpoint::Defined(HalfInt::PLUS_HALF)],
            coins: Some(vec![HalfInt::PLUS_HALF]),
        };
        let r = explore_enriched_config(&e, &p, &p.interior_mask, SelectionOrder::Fifo);
        assert_eq!(r.unrevealed(), vec![1]);
        assert_eq!(r.boundary_edges[0].kind, BoundaryType::ZeroExcitedPlusHalf);
        let mut minus = e.clone();
        minus.midpoint[0] = Midpoint::Defined(HalfInt::MINUS_HALF);
        assert!(explore_enriched_config(&minus, &p, &p.interior_mask, SelectionOrder::Fifo).unrevealed().is_empty());
    }

    #[test]
    fn conditional_hamiltonian_of_empty_region() {
        let (p, cfg) = path_patch(&[-1, -1, -1], &[1]);
        let pots = EdgePotentials::uniform(&p, Potential::k_lipschitz(1));
        let r = explore_plain(&cfg, &p, &p.interior_mask, 0, Direction::Below, SelectionOrder::Fifo);
        let (model, fixed) = conditional_hamiltonian(&r, &p, &pots, &cfg).unwrap();
        assert!(model.free().is_empty());
        assert!(model.pairs().is_empty());
        assert_eq!(model.energy(&fixed.heights), 0.0);
    }

    #[test]
    fn blocking_examples() {
        let p = build_ball(&LatticeSpec::honeycomb(), 2, 0).unwrap();
        let boundary: Vec<bool> = (0..p.n_vertices()).map(|v| !p.is_interior(v)).collect();
        let mut sigma =
            SpinField { carrier: Carrier::Edges, elements: (0..p.n_edges()).collect(), spins: vec![1; p.n_edges()] };
        assert!(!blocking_connectivity(&sigma, &p, p.root, &boundary));
        sigma.spins.iter_mut().for_each(|s| *s = -1);
        assert!(blocking_connectivity(&sigma, &p, p.root, &boundary));
    }
}
