//! Level sets, spin fields and cluster statistics.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{HeightConfig, LevelDirection};
use crate::lattice::{class_graph, DerivedGraph, LatticeError, PlanarPatch, VertexId};
use crate::potentials::HalfInt;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercolationError {
    #[error("vertex {vertex} should carry an odd height but has {height}")]
    ParityViolation { vertex: VertexId, height: i64 },
    #[error("odd-vertex spins need a parity model")]
    NotParityModel,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Carrier {
    Vertices,
    OddVertices,
    Edges,
}

impl Carrier {
    pub fn name(self) -> &'static str {
        match self {
            Carrier::Vertices => "vertices",
            Carrier::OddVertices => "odd_vertices",
            Carrier::Edges => "edges",
        }
    }
}

/// ±1 spins; `spins[i]` sits on patch element `elements[i]` (a vertex or an
/// edge, depending on the carrier).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinField {
    pub carrier: Carrier,
    pub elements: Vec<usize>,
    pub spins: Vec<i8>,
}

impl SpinField {
    /// Indicator of `{σ = sign}` indexed like `spins`.
    pub fn subset(&self, sign: i8) -> Vec<bool> {
        self.spins.iter().map(|&s| s == sign).collect()
    }
}

pub fn level_set(config: &HeightConfig, a: i64, direction: LevelDirection) -> Vec<bool> {
    config
        .heights
        .iter()
        .map(|&h| match direction {
            LevelDirection::Geq => h >= a,
            LevelDirection::Leq => h <= a,
        })
        .collect()
}

/// Spins on the class carrying odd heights: `+1` where `φ ≥ 1`.
pub fn odd_spin_field(config: &HeightConfig, patch: &PlanarPatch) -> Result<SpinField, PercolationError> {
    let class = config.odd_class.ok_or(PercolationError::NotParityModel)?;
    let parity = patch.parity.as_ref().ok_or(LatticeError::NotBipartite)?;
    let elements: Vec<VertexId> = (0..patch.n_vertices()).filter(|&v| parity[v] == class).collect();
    let mut spins = Vec::with_capacity(elements.len());
    for &v in &elements {
        let h = config.heights[v];
        if h.rem_euclid(2) != 1 {
            return Err(PercolationError::ParityViolation { vertex: v, height: h });
        }
        spins.push(if h >= 1 { 1 } else { -1 });
    }
    Ok(SpinField { carrier: Carrier::OddVertices, elements, spins })
}

/// Distance-two graph on the class carrying odd heights, with nodes in the
/// same order as [`odd_spin_field`].
pub fn odd_carrier_graph(config: &HeightConfig, patch: &PlanarPatch) -> Result<DerivedGraph, PercolationError> {
    let class = config.odd_class.ok_or(PercolationError::NotParityModel)?;
    Ok(class_graph(patch, class)?)
}

/// `σ(xy) = +1` iff `φ(x) + φ(y) + c(xy) > 0`. The total is a half-integer,
/// so it is never zero.
pub fn edge_spin_field(config: &HeightConfig, patch: &PlanarPatch, coins: &[HalfInt]) -> SpinField {
    assert_eq!(coins.len(), patch.n_edges(), "one coin per edge");
    let spins = patch
        .edges
        .iter()
        .zip(coins)
        .map(|(e, c)| {
            let total_x2 = 2 * config.heights[e.u] + 2 * config.heights[e.v] + c.x2();
            assert_ne!(total_x2, 0, "edge spin total must be a nonzero half-integer");
            if total_x2 > 0 {
                1
            } else {
                -1
            }
        })
        .collect();
    SpinField { carrier: Carrier::Edges, elements: (0..patch.n_edges()).collect(), spins }
}

/// Adjacency with torus windings, as needed by the cluster census.
pub trait ClusterGraph {
    fn n_elements(&self) -> usize;
    /// (neighbour, winding from `i` to the neighbour)
    fn links(&self, i: usize) -> Vec<(usize, [i64; 2])>;
    fn touches_boundary(&self, i: usize) -> bool;
    fn is_torus(&self) -> bool;
}

impl ClusterGraph for PlanarPatch {
    fn n_elements(&self) -> usize {
        self.n_vertices()
    }

    fn links(&self, i: usize) -> Vec<(usize, [i64; 2])> {
        self.rotation[i]
            .iter()
            .map(|&(j, e)| {
                let w = self.edges[e].winding;
                (j, if self.edges[e].u == i { w } else { [-w[0], -w[1]] })
            })
            .collect()
    }

    fn touches_boundary(&self, i: usize) -> bool {
        !self.is_interior(i)
    }

    fn is_torus(&self) -> bool {
        PlanarPatch::is_torus(self)
    }
}

impl ClusterGraph for DerivedGraph {
    fn n_elements(&self) -> usize {
        self.n_nodes()
    }

    fn links(&self, i: usize) -> Vec<(usize, [i64; 2])> {
        self.neighbours(i)
            .iter()
            .map(|&(j, k)| {
                let w = self.windings[k];
                (j, if self.adjacency[k].0 == i { w } else { [-w[0], -w[1]] })
            })
            .collect()
    }

    fn touches_boundary(&self, i: usize) -> bool {
        self.node_touches_boundary(i)
    }

    fn is_torus(&self) -> bool {
        self.torus
    }
}

/// Union-find whose elements remember their winding relative to the root.
struct WindingUnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    offset: Vec<[i64; 2]>,
    wraps: Vec<[bool; 2]>,
}

impl WindingUnionFind {
    fn new(n: usize) -> Self {
        WindingUnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            offset: vec![[0, 0]; n],
            wraps: vec![[false; 2]; n],
        }
    }

    fn find(&mut self, i: usize) -> (usize, [i64; 2]) {
        let mut path = Vec::new();
        let mut r = i;
        while self.parent[r] != r {
            path.push(r);
            r = self.parent[r];
        }
        // Fold offsets from the top of the path down.
        let mut acc = [0, 0];
        for &x in path.iter().rev() {
            acc = [acc[0] + self.offset[x][0], acc[1] + self.offset[x][1]];
            self.offset[x] = acc;
            self.parent[x] = r;
        }
        (r, if i == r { [0, 0] } else { self.offset[i] })
    }

    /// Joins `a` and `b`, where `w` is the winding from `a` to `b`.
    fn union(&mut self, a: usize, b: usize, w: [i64; 2]) {
        let (ra, oa) = self.find(a);
        let (rb, ob) = self.find(b);
        let rel = [oa[0] + w[0] - ob[0], oa[1] + w[1] - ob[1]];
        if ra == rb {
            for d in 0..2 {
                self.wraps[ra][d] |= rel[d] != 0;
            }
            return;
        }
        let (big, small, rel) =
            if self.size[ra] >= self.size[rb] { (ra, rb, rel) } else { (rb, ra, [-rel[0], -rel[1]]) };
        self.parent[small] = big;
        self.offset[small] = rel;
        self.size[big] += self.size[small];
        for d in 0..2 {
            self.wraps[big][d] |= self.wraps[small][d];
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationReport {
    pub cluster_count: usize,
    /// Descending; the per-cluster flags below follow the same order.
    pub cluster_sizes: Vec<usize>,
    pub largest_fraction: f64,
    pub wrap_flags: Option<Vec<(bool, bool)>>,
    pub boundary_touching: Option<Vec<bool>>,
    pub trifurcation_boxes: Option<usize>,
    /// Smallest element of each cluster.
    pub representatives: Vec<usize>,
}

impl PercolationReport {
    pub fn wraps(&self) -> (bool, bool) {
        self.wrap_flags.iter().flatten().fold((false, false), |(h, v), &(a, b)| (h || a, v || b))
    }

    pub fn any_wrap(&self) -> bool {
        let (h, v) = self.wraps();
        h || v
    }

    pub fn any_boundary_touching(&self) -> bool {
        self.boundary_touching.iter().flatten().any(|&b| b)
    }
}

/// Connected components of the subgraph induced by `subset`.
pub fn clusters<G: ClusterGraph + ?Sized>(graph: &G, subset: &[bool]) -> PercolationReport {
    let n = graph.n_elements();
    assert_eq!(subset.len(), n, "subset must cover the carrier");
    let mut uf = WindingUnionFind::new(n);
    for i in (0..n).filter(|&i| subset[i]) {
        for (j, w) in graph.links(i) {
            // Each link is seen from both ends; the second pass is a no-op
            // except for cycle detection, which is idempotent.
            if subset[j] {
                uf.union(i, j, w);
            }
        }
    }
    let mut roots: Vec<(usize, usize)> = Vec::new();
    let mut index_of = vec![usize::MAX; n];
    let mut touching = Vec::new();
    for i in (0..n).filter(|&i| subset[i]) {
        let (r, _) = uf.find(i);
        if index_of[r] == usize::MAX {
            index_of[r] = roots.len();
            roots.push((r, i));
            touching.push(false);
        }
        if graph.touches_boundary(i) {
            touching[index_of[r]] = true;
        }
    }
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(uf.size[roots[k].0]), roots[k].1));
    let cluster_sizes: Vec<usize> = order.iter().map(|&k| uf.size[roots[k].0]).collect();
    let torus = graph.is_torus();
    PercolationReport {
        cluster_count: roots.len(),
        largest_fraction: match (cluster_sizes.first(), n) {
            (Some(&s), n) if n > 0 => s as f64 / n as f64,
            _ => 0.0,
        },
        cluster_sizes,
        wrap_flags: torus.then(|| {
            order
                .iter()
                .map(|&k| {
                    let w = uf.wraps[roots[k].0];
                    (w[0], w[1])
                })
                .collect()
        }),
        boundary_touching: (!torus).then(|| order.iter().map(|&k| touching[k]).collect()),
        trifurcation_boxes: None,
        representatives: order.iter().map(|&k| roots[k].1).collect(),
    }
}

/// Size threshold for a "large" component on a torus: the largest
/// eccentricity among the vertices of the root's cell.
pub fn torus_size_threshold(patch: &PlanarPatch) -> usize {
    let cell = patch.sites[patch.root].0;
    (0..patch.n_vertices())
        .filter(|&v| patch.sites[v].0 == cell)
        .map(|v| patch.distances_from(&[v]).into_iter().flatten().max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Number of boxes (graph balls of `box_radius` around lattice translates of
/// the root) whose removal splits some cluster of `subset` into at least
/// three large pieces. Large means touching the patch boundary on a ball and
/// having at least [`torus_size_threshold`] vertices on a torus. On a ball
/// only boxes inside the interior are considered.
pub fn trifurcation_count(subset: &[bool], patch: &PlanarPatch, box_radius: usize) -> usize {
    let n = patch.n_vertices();
    let torus = patch.is_torus();
    let threshold = if torus { torus_size_threshold(patch) } else { 0 };
    let root_local = patch.sites[patch.root].1;
    let mut count = 0;
    let mut in_box = vec![false; n];
    let mut seen = vec![false; n];
    let mut piece_seen = vec![false; n];
    for centre in (0..n).filter(|&v| patch.sites[v].1 == root_local) {
        let dist = patch.distances_from(&[centre]);
        let members: Vec<VertexId> = (0..n).filter(|&v| dist[v].is_some_and(|d| d <= box_radius)).collect();
        if !torus && members.iter().any(|&v| !patch.is_interior(v)) {
            continue;
        }
        for &v in &members {
            in_box[v] = true;
        }
        seen.iter_mut().for_each(|s| *s = false);
        // Pieces of subset \ box, grouped by the cluster of subset they
        // belong to: walk each original cluster meeting the box.
        let mut trifurcates = false;
        for &b in members.iter().filter(|&&b| subset[b]) {
            if seen[b] {
                continue;
            }
            // Explore the original cluster of b, collecting its pieces.
            let mut large = 0;
            let mut stack = vec![b];
            seen[b] = true;
            let mut cluster = Vec::new();
            while let Some(x) = stack.pop() {
                cluster.push(x);
                for y in patch.neighbours(x) {
                    if subset[y] && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            for &start in cluster.iter().filter(|&&x| !in_box[x]) {
                if piece_seen[start] {
                    continue;
                }
                piece_seen[start] = true;
                let mut q = VecDeque::from([start]);
                let mut size = 0;
                let mut touches = false;
                while let Some(x) = q.pop_front() {
                    size += 1;
                    touches |= !patch.is_interior(x);
                    for y in patch.neighbours(x) {
                        if subset[y] && !in_box[y] && !piece_seen[y] {
                            piece_seen[y] = true;
                            q.push_back(y);
                        }
                    }
                }
                let is_large = if torus { size >= threshold } else { touches };
                large += is_large as usize;
            }
            for &x in &cluster {
                piece_seen[x] = false;
            }
            if large >= 3 {
                trifurcates = true;
                break;
            }
        }
        count += trifurcates as usize;
        for &v in &members {
            in_box[v] = false;
        }
    }
    count
}

/// One row of a percolation scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub sample: usize,
    pub level: i64,
    pub direction: LevelDirection,
    pub carrier: Carrier,
    pub clusters: usize,
    pub largest_fraction: f64,
    pub wraps_h: bool,
    pub wraps_v: bool,
    pub trifurcations: Option<usize>,
}

impl ScanRow {
    pub const HEADER: &'static str =
        "sample,level,direction,carrier,clusters,largest_fraction,wraps_h,wraps_v,trifurcations";

    pub fn new(sample: usize, level: i64, direction: LevelDirection, carrier: Carrier, r: &PercolationReport) -> Self {
        let (wraps_h, wraps_v) = r.wraps();
        ScanRow {
            sample,
            level,
            direction,
            carrier,
            clusters: r.cluster_count,
            largest_fraction: r.largest_fraction,
            wraps_h,
            wraps_v,
            trifurcations: r.trifurcation_boxes,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let dir = match self.direction {
            LevelDirection::Geq => "geq",
            LevelDirection::Leq => "leq",
        };
        write!(
            s,
            "{},{},{},{},{},{:.16e},{},{},",
            self.sample,
            self.level,
            dir,
            self.carrier.name(),
            self.clusters,
            self.largest_fraction,
            self.wraps_h as u8,
            self.wraps_v as u8
        )
        .unwrap();
        if let Some(t) = self.trifurcations {
            write!(s, "{t}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_ball, build_torus, odd_vertex_graph, LatticeSpec, Parity};

    fn path_patch(n: usize) -> PlanarPatch {
        let pos: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 0.0]).collect();
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let interior: Vec<usize> = (1..n - 1).collect();
        PlanarPatch::from_edges(pos, &edges, &interior, 1).unwrap()
    }

    #[test]
    fn level_set_of_alternating_config() {
        let p = build_ball(&LatticeSpec::honeycomb(), 3, 0).unwrap();
        let cfg = HeightConfig::zero_boundary(&p, true).unwrap();
        let ones = level_set(&cfg, 1, LevelDirection::Geq);
        for v in 0..p.n_vertices() {
            assert_eq!(ones[v], cfg.requires_odd(&p, v) && cfg.fixed[v]);
        }
        assert!(level_set(&cfg, -100, LevelDirection::Geq).iter().all(|&b| b));
    }

    #[test]
    fn odd_spins() {
        let p = build_ball(&LatticeSpec::honeycomb(), 2, 0).unwrap();
        let mut cfg = HeightConfig::zero_boundary(&p, true).unwrap();
        for v in 0..p.n_vertices() {
            if cfg.requires_odd(&p, v) {
                cfg.heights[v] = 1;
            }
        }
        let s = odd_spin_field(&cfg, &p).unwrap();
        assert!(s.spins.iter().all(|&x| x == 1));
        for &v in &s.elements {
            cfg.heights[v] = -1;
        }
        assert!(odd_spin_field(&cfg, &p).unwrap().spins.iter().all(|&x| x == -1));
        cfg.heights[s.elements[0]] = 2;
        assert!(matches!(odd_spin_field(&cfg, &p), Err(PercolationError::ParityViolation { .. })));
        let g = odd_carrier_graph(&cfg, &p).unwrap();
        assert_eq!(g.nodes, s.elements);
    }

    #[test]
    fn edge_spin_examples() {
        let p = path_patch(2);
        let cases =
            [((0, 0), HalfInt::PLUS_HALF, 1), ((1, 0), HalfInt::MINUS_HALF, 1), ((-1, 0), HalfInt::PLUS_HALF, -1)];
        for ((x, y), c, want) in cases {
            let cfg = HeightConfig { heights: vec![x, y], fixed: vec![true, true], odd_class: None };
            assert_eq!(edge_spin_field(&cfg, &p, &[c]).spins, vec![want]);
        }
    }

    #[test]
    fn census_basics() {
        let p = build_ball(&LatticeSpec::honeycomb(), 3, 0).unwrap();
        let n = p.n_vertices();
        let empty = clusters(&p, &vec![false; n]);
        assert_eq!((empty.cluster_count, empty.largest_fraction), (0, 0.0));
        let all = clusters(&p, &vec![true; n]);
        assert_eq!((all.cluster_count, all.largest_fraction), (1, 1.0));
        assert_eq!(all.boundary_touching, Some(vec![true]));
        let odd: Vec<bool> = (0..n).map(|v| p.parity_of(v) == Some(Parity::Odd)).collect();
        let r = clusters(&p, &odd);
        assert_eq!(r.cluster_count, odd.iter().filter(|&&b| b).count());
        assert!(r.cluster_sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn torus_wraps() {
        let p = build_torus(&LatticeSpec::honeycomb(), 4, 4).unwrap();
        let all = clusters(&p, &vec![true; p.n_vertices()]);
        assert_eq!(all.wraps(), (true, true));
        // Zigzag through A sites of row 0 and B sites of row 3: wraps along
        // the first period only.
        let row: Vec<bool> = (0..p.n_vertices()).map(|v| matches!(p.sites[v], ([_, 0], 0) | ([_, 3], 1))).collect();
        let r = clusters(&p, &row);
        assert_eq!(r.wraps(), (true, false));
        let g = odd_vertex_graph(&p).unwrap();
        let r = clusters(&g, &vec![true; g.n_nodes()]);
        assert_eq!((r.cluster_count, r.wraps()), (1, (true, true)));
    }

    #[test]
    fn trifurcation_examples() {
        let p = path_patch(9);
        assert_eq!(trifurcation_count(&[true; 9], &p, 0), 0);
        assert_eq!(trifurcation_count(&[false; 9], &p, 0), 0);
        // Y-shaped tree: centre 0 with three arms of length 3.
        let mut pos = vec![[0.0, 0.0]];
        let mut edges = Vec::new();
        for arm in 0..3 {
            let angle = arm as f64 * 2.0 * std::f64::consts::PI / 3.0;
            for step in 1..=3 {
                pos.push([step as f64 * angle.cos(), step as f64 * angle.sin()]);
                let id = pos.len() - 1;
                edges.push((if step == 1 { 0 } else { id - 1 }, id));
            }
        }
        let interior: Vec<usize> = (0..pos.len()).filter(|&v| v == 0 || (v - 1) % 3 != 2).collect();
        let y = PlanarPatch::from_edges(pos, &edges, &interior, 0).unwrap();
        let all = vec![true; y.n_vertices()];
        // Custom patches have a single box, at the root.
        assert_eq!(trifurcation_count(&all, &y, 0), 1);
    }
}
