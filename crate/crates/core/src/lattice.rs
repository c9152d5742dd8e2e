//! Finite patches of cubic shift-invariant planar lattices.
//!
//! A lattice is described by a [`LatticeSpec`]: two basis vectors, a list of
//! vertex offsets inside one fundamental cell and an edge stencil. From a spec
//! we cut out either a graph-distance ball around a root vertex or a periodic
//! torus quotient. Every patch carries its planar embedding as a rotation
//! system, from which faces are traced exactly.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = usize;
pub type EdgeId = usize;

/// Lattice cell coordinates plus the index of the vertex inside the cell.
pub type Site = ([i64; 2], usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("torus quotient {w}x{h} is too small: {reason}")]
    QuotientTooSmall { w: usize, h: usize, reason: String },
    #[error("torus quotient {w}x{h} breaks the bipartition of a bipartite lattice")]
    QuotientNotBipartite { w: usize, h: usize },
    #[error("derived edge between nodes {a} and {b} has no common face")]
    NoWitnessFace { a: usize, b: usize },
    #[error("patch is not bipartite")]
    NotBipartite,
    #[error("invalid stencil: {0}")]
    InvalidStencil(String),
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LatticeFamily {
    Honeycomb,
    TruncatedSquare,
    SeriesExpanded { base: Box<LatticeFamily>, n_series: u32 },
}

impl LatticeFamily {
    pub fn bipartite(&self) -> bool {
        match self {
            LatticeFamily::Honeycomb | LatticeFamily::TruncatedSquare => true,
            LatticeFamily::SeriesExpanded { base, n_series } => n_series % 2 == 0 || base.bipartite(),
        }
    }

    pub fn spec(&self) -> Result<LatticeSpec, LatticeError> {
        match self {
            LatticeFamily::Honeycomb => Ok(LatticeSpec::honeycomb()),
            LatticeFamily::TruncatedSquare => Ok(LatticeSpec::truncated_square()),
            LatticeFamily::SeriesExpanded { base, n_series } => LatticeSpec::series_expanded(&base.spec()?, *n_series),
        }
    }
}

/// One edge of the stencil: joins local vertex `from` in cell `c` to local
/// vertex `to` in cell `c + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StencilEdge {
    pub from: usize,
    pub to: usize,
    pub shift: [i64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub family: LatticeFamily,
    pub basis: [[f64; 2]; 2],
    pub offsets: Vec<[f64; 2]>,
    pub stencil: Vec<StencilEdge>,
    /// Per local vertex: (neighbour local index, cell shift, stencil index).
    local_adjacency: Vec<Vec<(usize, [i64; 2], usize)>>,
}

impl LatticeSpec {
    pub fn new(
        family: LatticeFamily,
        basis: [[f64; 2]; 2],
        offsets: Vec<[f64; 2]>,
        stencil: Vec<StencilEdge>,
    ) -> Result<Self, LatticeError> {
        let k = offsets.len();
        if k == 0 {
            return Err(LatticeError::InvalidStencil("empty fundamental domain".into()));
        }
        let mut local_adjacency = vec![Vec::new(); k];
        for (idx, e) in stencil.iter().enumerate() {
            if e.from >= k || e.to >= k {
                return Err(LatticeError::InvalidStencil(format!("stencil edge {idx} references a missing vertex")));
            }
            if e.from == e.to && e.shift == [0, 0] {
                return Err(LatticeError::InvalidStencil(format!("stencil edge {idx} is a loop")));
            }
            local_adjacency[e.from].push((e.to, e.shift, idx));
            local_adjacency[e.to].push((e.from, [-e.shift[0], -e.shift[1]], idx));
        }
        for (v, adj) in local_adjacency.iter().enumerate() {
            if adj.len() > 3 {
                return Err(LatticeError::InvalidStencil(format!("local vertex {v} has degree {}", adj.len())));
            }
            let distinct: HashSet<_> = adj.iter().map(|&(w, s, _)| (w, s)).collect();
            if distinct.len() != adj.len() {
                return Err(LatticeError::InvalidStencil(format!("local vertex {v} has parallel edges")));
            }
        }
        let spec = LatticeSpec { family, basis, offsets, stencil, local_adjacency };
        if !spec.stencil_connected() {
            return Err(LatticeError::InvalidStencil("generated graph is disconnected".into()));
        }
        Ok(spec)
    }

    /// Brick-wall honeycomb with unit edge length: A at the cell origin, B one
    /// unit above it.
    pub fn honeycomb() -> Self {
        let s3 = 3f64.sqrt();
        let stencil = vec![
            StencilEdge { from: 0, to: 1, shift: [0, 0] },
            StencilEdge { from: 0, to: 1, shift: [0, -1] },
            StencilEdge { from: 0, to: 1, shift: [1, -1] },
        ];
        LatticeSpec::new(LatticeFamily::Honeycomb, [[s3, 0.0], [s3 / 2.0, 1.5]], vec![[0.0, 0.0], [0.0, 1.0]], stencil)
            .expect("honeycomb stencil is valid")
    }

    /// Truncated square (4.8.8) tiling: a small square per unit cell with its
    /// corners E, N, W, S, and octagons around the cell corners.
    pub fn truncated_square() -> Self {
        let t = 1.0 / (2.0 + SQRT_2);
        let stencil = vec![
            StencilEdge { from: 0, to: 1, shift: [0, 0] },
            StencilEdge { from: 1, to: 2, shift: [0, 0] },
            StencilEdge { from: 2, to: 3, shift: [0, 0] },
            StencilEdge { from: 3, to: 0, shift: [0, 0] },
            StencilEdge { from: 0, to: 2, shift: [1, 0] },
            StencilEdge { from: 1, to: 3, shift: [0, 1] },
        ];
        LatticeSpec::new(
            LatticeFamily::TruncatedSquare,
            [[1.0, 0.0], [0.0, 1.0]],
            vec![[t, 0.0], [0.0, t], [-t, 0.0], [0.0, -t]],
            stencil,
        )
        .expect("truncated square stencil is valid")
    }

    /// Replaces every edge of `base` by a path of `n_series` edges. The
    /// `n_series - 1` new vertices of a stencil edge live in the cell of its
    /// `from` endpoint and sit evenly spaced along the segment.
    pub fn series_expanded(base: &LatticeSpec, n_series: u32) -> Result<Self, LatticeError> {
        if n_series == 0 {
            return Err(LatticeError::InvalidStencil("n_series must be positive".into()));
        }
        let n = n_series as usize;
        let mut offsets = base.offsets.clone();
        let mut stencil = Vec::with_capacity(base.stencil.len() * n);
        for e in &base.stencil {
            let p = base.offsets[e.from];
            let q = base.position(e.shift, e.to);
            let mut prev = e.from;
            for k in 1..n {
                let t = k as f64 / n as f64;
                offsets.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                let id = offsets.len() - 1;
                stencil.push(StencilEdge { from: prev, to: id, shift: [0, 0] });
                prev = id;
            }
            stencil.push(StencilEdge { from: prev, to: e.to, shift: e.shift });
        }
        LatticeSpec::new(
            LatticeFamily::SeriesExpanded { base: Box::new(base.family.clone()), n_series },
            base.basis,
            offsets,
            stencil,
        )
    }

    pub fn from_family(family: &LatticeFamily) -> Result<Self, LatticeError> {
        family.spec()
    }

    pub fn bipartite(&self) -> bool {
        self.family.bipartite()
    }

    pub fn cell_size(&self) -> usize {
        self.offsets.len()
    }

    pub fn position(&self, cell: [i64; 2], local: usize) -> [f64; 2] {
        let [a, b] = self.basis;
        let o = self.offsets[local];
        [cell[0] as f64 * a[0] + cell[1] as f64 * b[0] + o[0], cell[0] as f64 * a[1] + cell[1] as f64 * b[1] + o[1]]
    }

    /// Neighbours of a site of the infinite lattice, with the stencil index of
    /// the connecting edge.
    pub fn neighbours(&self, site: Site) -> impl Iterator<Item = (Site, usize)> + '_ {
        let (cell, local) = site;
        self.local_adjacency[local].iter().map(move |&(w, s, idx)| (([cell[0] + s[0], cell[1] + s[1]], w), idx))
    }

    fn stencil_connected(&self) -> bool {
        // Every local vertex must be reachable from local vertex 0 in the
        // infinite graph; reaching one copy suffices by periodicity.
        let mut seen = vec![false; self.cell_size()];
        let mut queue = VecDeque::from([([0i64, 0i64], 0usize)]);
        let mut visited = HashSet::new();
        visited.insert(([0i64, 0i64], 0usize));
        while let Some(site) = queue.pop_front() {
            seen[site.1] = true;
            if seen.iter().all(|&s| s) {
                return true;
            }
            for (nb, _) in self.neighbours(site) {
                if nb.0[0].abs() <= 4 && nb.0[1].abs() <= 4 && visited.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Ball { radius: usize },
    Torus { w: usize, h: usize },
    Custom,
}

/// Undirected edge. `winding` counts the torus periods crossed going from `u`
/// to `v` (always zero off the torus); `orbit` is the stencil index, i.e. the
/// lattice orbit of the edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub u: VertexId,
    pub v: VertexId,
    pub orbit: usize,
    pub winding: [i64; 2],
}

impl Edge {
    pub fn other(&self, x: VertexId) -> VertexId {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    /// Half-edge ids `2 * edge + dir` in traversal order, `dir = 0` for u -> v.
    pub half_edges: Vec<usize>,
    pub vertices: Vec<VertexId>,
    pub signed_area: f64,
    pub outer: bool,
}

#[derive(Clone, Debug)]
pub struct PlanarPatch {
    pub topology: Topology,
    pub family: Option<LatticeFamily>,
    pub positions: Vec<[f64; 2]>,
    pub sites: Vec<Site>,
    pub parity: Option<Vec<Parity>>,
    pub edges: Vec<Edge>,
    /// Counterclockwise rotation system: (neighbour, edge) around each vertex.
    pub rotation: Vec<Vec<(VertexId, EdgeId)>>,
    pub interior_mask: Vec<bool>,
    pub interior: Vec<VertexId>,
    pub boundary: Vec<VertexId>,
    pub root: VertexId,
    pub faces: Vec<Face>,
    /// Face id for each half-edge.
    pub half_edge_face: Vec<usize>,
    /// Unwrapped displacement of each edge from `u` to `v`.
    displacement: Vec<[f64; 2]>,
    /// Torus periods in plane coordinates (zero vectors off the torus).
    periods: [[f64; 2]; 2],
}

impl PlanarPatch {
    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.rotation[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.rotation.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn neighbours(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.rotation[v].iter().map(|&(w, _)| w)
    }

    pub fn is_interior(&self, v: VertexId) -> bool {
        self.interior_mask[v]
    }

    pub fn is_bipartite(&self) -> bool {
        self.parity.is_some()
    }

    pub fn parity_of(&self, v: VertexId) -> Option<Parity> {
        self.parity.as_ref().map(|p| p[v])
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.topology, Topology::Torus { .. })
    }

    pub fn edge_displacement(&self, e: EdgeId) -> [f64; 2] {
        self.displacement[e]
    }

    pub fn torus_periods(&self) -> [[f64; 2]; 2] {
        self.periods
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.faces.len() as i64
    }

    pub fn outer_face(&self) -> Option<usize> {
        self.faces.iter().position(|f| f.outer)
    }

    /// Edges with at least one interior endpoint.
    pub fn interior_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| self.interior_mask[e.u] || self.interior_mask[e.v])
            .map(|(i, _)| i)
    }

    pub fn edge_between(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.rotation[a].iter().find(|&&(w, _)| w == b).map(|&(_, e)| e)
    }

    /// Graph distances from a set of sources (BFS); `None` if unreachable.
    pub fn distances_from(&self, sources: &[VertexId]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(x) = queue.pop_front() {
            let d = dist[x].unwrap();
            for y in self.neighbours(x) {
                if dist[y].is_none() {
                    dist[y] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    /// The ball of radius `n` around the root in the patch graph.
    pub fn ball_mask(&self, n: usize) -> Vec<bool> {
        self.distances_from(&[self.root]).into_iter().map(|d| d.is_some_and(|d| d <= n)).collect()
    }

    pub fn half_edge_origin(&self, h: usize) -> VertexId {
        let e = &self.edges[h / 2];
        if h.is_multiple_of(2) {
            e.u
        } else {
            e.v
        }
    }

    pub fn half_edge_target(&self, h: usize) -> VertexId {
        let e = &self.edges[h / 2];
        if h.is_multiple_of(2) {
            e.v
        } else {
            e.u
        }
    }

    /// Faces incident to vertex `v`, without repetition.
    pub fn faces_at(&self, v: VertexId) -> Vec<usize> {
        let mut out = Vec::with_capacity(3);
        for &(_, e) in &self.rotation[v] {
            let h = if self.edges[e].u == v { 2 * e } else { 2 * e + 1 };
            let f = self.half_edge_face[h];
            if !out.contains(&f) {
                out.push(f);
            }
        }
        out
    }

    /// Builds a patch from an explicit embedded graph. Used for hand-made
    /// fixtures; vertices outside `interior` that touch it form the boundary.
    pub fn from_edges(
        positions: Vec<[f64; 2]>,
        edges: &[(VertexId, VertexId)],
        interior: &[VertexId],
        root: VertexId,
    ) -> Result<Self, LatticeError> {
        let n = positions.len();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(LatticeError::InvalidPatch(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                return Err(LatticeError::InvalidPatch(format!("self-loop at {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(LatticeError::InvalidPatch(format!("parallel edge ({a},{b})")));
            }
            out.push(Edge { u: a, v: b, orbit: 0, winding: [0, 0] });
        }
        if root >= n {
            return Err(LatticeError::InvalidPatch("root out of range".into()));
        }
        let mut mask = vec![false; n];
        for &v in interior {
            if v >= n {
                return Err(LatticeError::InvalidPatch(format!("interior vertex {v} out of range")));
            }
            mask[v] = true;
        }
        let sites = (0..n).map(|i| ([0, 0], i)).collect();
        assemble(Topology::Custom, None, positions, sites, out, mask, root, [[0.0; 2]; 2], None)
    }

    pub fn to_json(&self) -> PatchDocument {
        PatchDocument {
            vertices: (0..self.n_vertices())
                .map(|id| VertexRecord {
                    id,
                    x: self.positions[id][0],
                    y: self.positions[id][1],
                    parity: self.parity_of(id),
                })
                .collect(),
            edges: self.edges.iter().map(|e| [e.u, e.v]).collect(),
            interior: self.interior.clone(),
            boundary: self.boundary.clone(),
            root: self.root,
            topology: self.topology,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: VertexId,
    pub x: f64,
    pub y: f64,
    pub parity: Option<Parity>,
}

/// Serialised patch; field order is part of the format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchDocument {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<[VertexId; 2]>,
    pub interior: Vec<VertexId>,
    pub boundary: Vec<VertexId>,
    pub root: VertexId,
    pub topology: Topology,
}

/// Graph-distance ball of radius `n` around the vertex `root_local` of cell
/// (0, 0). The patch holds Λ_n as interior and the vertices at distance
/// `n + 1` as boundary, with all edges of the lattice among them.
pub fn build_ball(spec: &LatticeSpec, n: usize, root_local: usize) -> Result<PlanarPatch, LatticeError> {
    if root_local >= spec.cell_size() {
        return Err(LatticeError::InvalidStencil(format!("root offset {root_local} outside the fundamental domain")));
    }
    let root_site: Site = ([0, 0], root_local);
    let mut dist: HashMap<Site, usize> = HashMap::new();
    dist.insert(root_site, 0);
    let mut queue = VecDeque::from([root_site]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        if d == n + 1 {
            continue;
        }
        for (t, _) in spec.neighbours(s) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(t) {
                e.insert(d + 1);
                queue.push_back(t);
            }
        }
    }
    let mut sites: Vec<Site> = dist.keys().copied().collect();
    sites.sort();
    let index: HashMap<Site, VertexId> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let positions = sites.iter().map(|&(c, l)| spec.position(c, l)).collect();
    let mut edges = Vec::new();
    for (i, &(cell, local)) in sites.iter().enumerate() {
        for (idx, e) in spec.stencil.iter().enumerate() {
            if e.from != local {
                continue;
            }
            let t = ([cell[0] + e.shift[0], cell[1] + e.shift[1]], e.to);
            if let Some(&j) = index.get(&t) {
                edges.push(Edge { u: i, v: j, orbit: idx, winding: [0, 0] });
            }
        }
    }
    let mask = sites.iter().map(|s| dist[s] <= n).collect();
    let root = index[&root_site];
    assemble(
        Topology::Ball { radius: n },
        Some(spec.family.clone()),
        positions,
        sites,
        edges,
        mask,
        root,
        [[0.0; 2]; 2],
        Some(spec),
    )
}

/// Periodic `w x h` quotient of the lattice. All vertices are interior.
pub fn build_torus(spec: &LatticeSpec, w: usize, h: usize) -> Result<PlanarPatch, LatticeError> {
    if w == 0 || h == 0 {
        return Err(LatticeError::QuotientTooSmall { w, h, reason: "dimensions must be positive".into() });
    }
    let k = spec.cell_size();
    let mut sites = Vec::with_capacity(w * h * k);
    for i in 0..w as i64 {
        for j in 0..h as i64 {
            for l in 0..k {
                sites.push(([i, j], l));
            }
        }
    }
    let id_of = |cell: [i64; 2], local: usize| -> VertexId { ((cell[0] as usize) * h + cell[1] as usize) * k + local };
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for &(cell, local) in &sites {
        for (idx, e) in spec.stencil.iter().enumerate() {
            if e.from != local {
                continue;
            }
            let raw = [cell[0] + e.shift[0], cell[1] + e.shift[1]];
            let wrapped = [raw[0].rem_euclid(w as i64), raw[1].rem_euclid(h as i64)];
            let winding = [raw[0].div_euclid(w as i64), raw[1].div_euclid(h as i64)];
            let u = id_of(cell, local);
            let v = id_of(wrapped, e.to);
            if u == v {
                return Err(LatticeError::QuotientTooSmall { w, h, reason: format!("self-loop at vertex {u}") });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(LatticeError::QuotientTooSmall {
                    w,
                    h,
                    reason: format!("parallel edges between {u} and {v}"),
                });
            }
            edges.push(Edge { u, v, orbit: idx, winding });
        }
    }
    let positions = sites.iter().map(|&(c, l)| spec.position(c, l)).collect();
    let [a, b] = spec.basis;
    let periods = [[a[0] * w as f64, a[1] * w as f64], [b[0] * h as f64, b[1] * h as f64]];
    let n = sites.len();
    let patch = assemble(
        Topology::Torus { w, h },
        Some(spec.family.clone()),
        positions,
        sites,
        edges,
        vec![true; n],
        0,
        periods,
        Some(spec),
    )?;
    if spec.bipartite() && patch.parity.is_none() {
        return Err(LatticeError::QuotientNotBipartite { w, h });
    }
    Ok(patch)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    topology: Topology,
    family: Option<LatticeFamily>,
    positions: Vec<[f64; 2]>,
    sites: Vec<Site>,
    edges: Vec<Edge>,
    interior_mask: Vec<bool>,
    root: VertexId,
    periods: [[f64; 2]; 2],
    spec: Option<&LatticeSpec>,
) -> Result<PlanarPatch, LatticeError> {
    let n = positions.len();
    let displacement: Vec<[f64; 2]> = edges
        .iter()
        .map(|e| match spec {
            // Unwrapped stencil geometry, valid across torus seams.
            Some(spec) => {
                let st = spec.stencil[e.orbit];
                let p = spec.offsets[st.from];
                let q = spec.position(st.shift, st.to);
                let d = [q[0] - p[0], q[1] - p[1]];
                if sites[e.u].1 == st.from {
                    d
                } else {
                    [-d[0], -d[1]]
                }
            }
            None => {
                let (p, q) = (positions[e.u], positions[e.v]);
                [q[0] - p[0], q[1] - p[1]]
            }
        })
        .collect();

    let mut rotation: Vec<Vec<(VertexId, EdgeId, f64)>> = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        let d = displacement[i];
        rotation[e.u].push((e.v, i, d[1].atan2(d[0])));
        rotation[e.v].push((e.u, i, (-d[1]).atan2(-d[0])));
    }
    for r in rotation.iter_mut() {
        r.sort_by(|a, b| a.2.total_cmp(&b.2));
    }
    let rotation: Vec<Vec<(VertexId, EdgeId)>> =
        rotation.into_iter().map(|r| r.into_iter().map(|(w, e, _)| (w, e)).collect()).collect();

    let interior: Vec<VertexId> = (0..n).filter(|&v| interior_mask[v]).collect();
    let boundary: Vec<VertexId> =
        (0..n).filter(|&v| !interior_mask[v] && rotation[v].iter().any(|&(w, _)| interior_mask[w])).collect();

    let parity = two_colouring(n, &edges, root);

    let (faces, half_edge_face) = trace_faces(&edges, &rotation, &displacement, &positions);
    let mut faces = faces;
    if !matches!(topology, Topology::Torus { .. }) && !faces.is_empty() {
        // The outer face is the only one traversed clockwise; ties (trees)
        // resolve to the first minimiser.
        let outer = faces
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.signed_area.total_cmp(&b.1.signed_area))
            .map(|(i, _)| i)
            .unwrap();
        faces[outer].outer = true;
    }

    Ok(PlanarPatch {
        topology,
        family,
        positions,
        sites,
        parity,
        edges,
        rotation,
        interior_mask,
        interior,
        boundary,
        root,
        faces,
        half_edge_face,
        displacement,
        periods,
    })
}

fn two_colouring(n: usize, edges: &[Edge], root: VertexId) -> Option<Vec<Parity>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.u].push(e.v);
        adj[e.v].push(e.u);
    }
    let mut colour: Vec<Option<Parity>> = vec![None; n];
    let starts = std::iter::once(root).chain(0..n);
    for s in starts {
        if colour[s].is_some() {
            continue;
        }
        colour[s] = Some(Parity::Even);
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            let cx = colour[x].unwrap();
            for &y in &adj[x] {
                match colour[y] {
                    None => {
                        colour[y] = Some(cx.flip());
                        queue.push_back(y);
                    }
                    Some(cy) if cy == cx => return None,
                    _ => {}
                }
            }
        }
    }
    Some(colour.into_iter().map(Option::unwrap).collect())
}

/// Traces the faces of a rotation system. The successor of half-edge u -> v
/// leaves v along the edge immediately clockwise of v -> u, so bounded faces
/// come out counterclockwise with positive signed area.
fn trace_faces(
    edges: &[Edge],
    rotation: &[Vec<(VertexId, EdgeId)>],
    displacement: &[[f64; 2]],
    positions: &[[f64; 2]],
) -> (Vec<Face>, Vec<usize>) {
    let m = edges.len();
    let origin = |h: usize| if h.is_multiple_of(2) { edges[h / 2].u } else { edges[h / 2].v };
    let target = |h: usize| if h.is_multiple_of(2) { edges[h / 2].v } else { edges[h / 2].u };
    let disp = |h: usize| {
        let d = displacement[h / 2];
        if h.is_multiple_of(2) {
            d
        } else {
            [-d[0], -d[1]]
        }
    };
    let next = |h: usize| -> usize {
        let v = target(h);
        let e = h / 2;
        let rot = &rotation[v];
        let pos = rot.iter().position(|&(_, f)| f == e).unwrap();
        let (_, f) = rot[(pos + rot.len() - 1) % rot.len()];
        if edges[f].u == v {
            2 * f
        } else {
            2 * f + 1
        }
    };
    let mut face_of = vec![usize::MAX; 2 * m];
    let mut faces = Vec::new();
    for start in 0..2 * m {
        if face_of[start] != usize::MAX {
            continue;
        }
        let id = faces.len();
        let mut half_edges = Vec::new();
        let mut vertices = Vec::new();
        let mut h = start;
        let mut p = positions[origin(start)];
        let mut area = 0.0;
        loop {
            face_of[h] = id;
            half_edges.push(h);
            vertices.push(origin(h));
            let d = disp(h);
            let q = [p[0] + d[0], p[1] + d[1]];
            area += p[0] * q[1] - q[0] * p[1];
            p = q;
            h = next(h);
            if h == start {
                break;
            }
        }
        faces.push(Face { half_edges, vertices, signed_area: area / 2.0, outer: false });
    }
    (faces, face_of)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedKind {
    LineGraph,
    OddVertexGraph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessFace {
    pub face: usize,
    pub outer: bool,
}

/// Line graph or odd-vertex graph of a patch, with a witness face for every
/// derived edge.
#[derive(Clone, Debug)]
pub struct DerivedGraph {
    pub kind: DerivedKind,
    /// Base edge ids (line graph) or base vertex ids (odd-vertex graph).
    pub nodes: Vec<usize>,
    pub adjacency: Vec<(usize, usize)>,
    pub witness_faces: Vec<WitnessFace>,
    /// Torus winding along each derived edge, from first to second node.
    pub windings: Vec<[i64; 2]>,
    pub torus: bool,
    neighbours: Vec<Vec<(usize, usize)>>,
    touches_boundary: Vec<bool>,
}

impl DerivedGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbours[node].len()
    }

    /// (neighbour node, derived edge index)
    pub fn neighbours(&self, node: usize) -> &[(usize, usize)] {
        &self.neighbours[node]
    }

    pub fn node_touches_boundary(&self, node: usize) -> bool {
        self.touches_boundary[node]
    }

    fn finish(
        kind: DerivedKind,
        nodes: Vec<usize>,
        adjacency: Vec<(usize, usize)>,
        witness_faces: Vec<WitnessFace>,
        windings: Vec<[i64; 2]>,
        touches_boundary: Vec<bool>,
        torus: bool,
    ) -> Self {
        let mut neighbours = vec![Vec::new(); nodes.len()];
        for (i, &(a, b)) in adjacency.iter().enumerate() {
            neighbours[a].push((b, i));
            neighbours[b].push((a, i));
        }
        DerivedGraph { kind, nodes, adjacency, witness_faces, windings, torus, neighbours, touches_boundary }
    }
}

fn pick_witness(patch: &PlanarPatch, candidates: impl Iterator<Item = usize>) -> Option<WitnessFace> {
    let mut outer = None;
    for f in candidates {
        if patch.faces[f].outer {
            outer = Some(WitnessFace { face: f, outer: true });
        } else {
            return Some(WitnessFace { face: f, outer: false });
        }
    }
    outer
}

fn winding_along(patch: &PlanarPatch, from: VertexId, e: EdgeId) -> [i64; 2] {
    let edge = &patch.edges[e];
    if edge.u == from {
        edge.winding
    } else {
        [-edge.winding[0], -edge.winding[1]]
    }
}

/// Node per base edge; two nodes adjacent iff the edges share an endpoint.
pub fn line_graph(patch: &PlanarPatch) -> Result<DerivedGraph, LatticeError> {
    if patch.max_degree() > 3 {
        return Err(LatticeError::InvalidPatch("line graph requires max degree 3".into()));
    }
    let nodes: Vec<usize> = (0..patch.n_edges()).collect();
    let mut adjacency = Vec::new();
    let mut witnesses = Vec::new();
    let mut windings = Vec::new();
    for v in 0..patch.n_vertices() {
        let rot = &patch.rotation[v];
        for i in 0..rot.len() {
            for j in i + 1..rot.len() {
                let (e1, e2) = (rot[i].1.min(rot[j].1), rot[i].1.max(rot[j].1));
                let faces_e1 = [patch.half_edge_face[2 * e1], patch.half_edge_face[2 * e1 + 1]];
                let faces_e2 = [patch.half_edge_face[2 * e2], patch.half_edge_face[2 * e2 + 1]];
                let common = faces_e1.into_iter().filter(|f| faces_e2.contains(f));
                let witness = pick_witness(patch, common).ok_or(LatticeError::NoWitnessFace { a: e1, b: e2 })?;
                // Each node is anchored at its edge's u endpoint.
                let a1 = patch.edges[e1].u;
                let a2 = patch.edges[e2].u;
                let to_v = if a1 == v { [0, 0] } else { winding_along(patch, a1, e1) };
                let from_v = if a2 == v { [0, 0] } else { winding_along(patch, v, e2) };
                adjacency.push((e1, e2));
                witnesses.push(witness);
                windings.push([to_v[0] + from_v[0], to_v[1] + from_v[1]]);
            }
        }
    }
    let touches = patch.edges.iter().map(|e| !patch.interior_mask[e.u] || !patch.interior_mask[e.v]).collect();
    Ok(DerivedGraph::finish(DerivedKind::LineGraph, nodes, adjacency, witnesses, windings, touches, patch.is_torus()))
}

/// Odd vertices, adjacent iff at graph distance exactly two.
pub fn odd_vertex_graph(patch: &PlanarPatch) -> Result<DerivedGraph, LatticeError> {
    class_graph(patch, Parity::Odd)
}

/// Distance-two graph on one bipartition class.
pub fn class_graph(patch: &PlanarPatch, class: Parity) -> Result<DerivedGraph, LatticeError> {
    let parity = patch.parity.as_ref().ok_or(LatticeError::NotBipartite)?;
    let nodes: Vec<VertexId> = (0..patch.n_vertices()).filter(|&v| parity[v] == class).collect();
    let node_of: HashMap<VertexId, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut seen: HashSet<(usize, usize, [i64; 2])> = HashSet::new();
    let mut adjacency = Vec::new();
    let mut witnesses = Vec::new();
    let mut windings = Vec::new();
    for &x in &nodes {
        for &(m, e1) in &patch.rotation[x] {
            let w1 = winding_along(patch, x, e1);
            for &(y, e2) in &patch.rotation[m] {
                if y == x {
                    continue;
                }
                let w2 = winding_along(patch, m, e2);
                let w = [w1[0] + w2[0], w1[1] + w2[1]];
                let (a, b, w) = if x < y { (x, y, w) } else { (y, x, [-w[0], -w[1]]) };
                if !seen.insert((a, b, w)) {
                    continue;
                }
                let fx = patch.faces_at(a);
                let fy = patch.faces_at(b);
                let witness = pick_witness(patch, fx.into_iter().filter(|f| fy.contains(f)))
                    .ok_or(LatticeError::NoWitnessFace { a, b })?;
                adjacency.push((node_of[&a], node_of[&b]));
                witnesses.push(witness);
                windings.push(w);
            }
        }
    }
    let touches = nodes.iter().map(|&v| !patch.interior_mask[v]).collect();
    Ok(DerivedGraph::finish(
        DerivedKind::OddVertexGraph,
        nodes,
        adjacency,
        witnesses,
        windings,
        touches,
        patch.is_torus(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|i| [i as f64, 0.0]).collect()
    }

    #[test]
    fn honeycomb_ball_zero_is_a_star() {
        let p = build_ball(&LatticeSpec::honeycomb(), 0, 0).unwrap();
        assert_eq!(p.interior.len(), 1);
        assert_eq!(p.boundary.len(), 3);
        assert_eq!(p.n_edges(), 3);
        assert_eq!(p.euler_characteristic(), 2);
    }

    #[test]
    fn honeycomb_torus_counts() {
        let p = build_torus(&LatticeSpec::honeycomb(), 2, 2).unwrap();
        assert_eq!(p.n_vertices(), 8);
        assert_eq!(p.n_edges(), 12);
        assert_eq!(p.euler_characteristic(), 0);
        assert!(p.boundary.is_empty());
        assert!((0..8).all(|v| p.degree(v) == 3));
    }

    #[test]
    fn honeycomb_unit_torus_is_too_small() {
        let err = build_torus(&LatticeSpec::honeycomb(), 1, 1).unwrap_err();
        assert!(matches!(err, LatticeError::QuotientTooSmall { .. }));
    }

    #[test]
    fn truncated_square_torus_counts() {
        let p = build_torus(&LatticeSpec::truncated_square(), 2, 2).unwrap();
        assert_eq!(p.n_vertices(), 16);
        assert_eq!(p.n_edges(), 24);
        assert_eq!(p.euler_characteristic(), 0);
        let four = p.faces.iter().filter(|f| f.vertices.len() == 4).count();
        let eight = p.faces.iter().filter(|f| f.vertices.len() == 8).count();
        assert_eq!((four, eight), (4, 4));
    }

    #[test]
    fn truncated_square_odd_torus_breaks_bipartition() {
        let err = build_torus(&LatticeSpec::truncated_square(), 3, 2).unwrap_err();
        assert_eq!(err, LatticeError::QuotientNotBipartite { w: 3, h: 2 });
    }

    #[test]
    fn truncated_square_ball_one() {
        let p = build_ball(&LatticeSpec::truncated_square(), 1, 0).unwrap();
        assert!(p.interior.iter().all(|&v| p.degree(v) == 3));
        assert!(p.faces.iter().any(|f| !f.outer && f.vertices.len() == 4));
    }

    #[test]
    fn series_expansion_bipartiteness() {
        let hc = LatticeSpec::honeycomb();
        let s2 = LatticeSpec::series_expanded(&hc, 2).unwrap();
        assert_eq!(s2.cell_size(), 2 + 3);
        assert!(s2.bipartite());
        let p = build_torus(&s2, 3, 3).unwrap();
        assert!(p.is_bipartite());
        assert_eq!(p.euler_characteristic(), 0);
        let s3 = LatticeSpec::series_expanded(&hc, 3).unwrap();
        assert!(build_torus(&s3, 3, 3).unwrap().is_bipartite());
    }

    #[test]
    fn ball_parities_alternate_along_edges() {
        for spec in [LatticeSpec::honeycomb(), LatticeSpec::truncated_square()] {
            let p = build_ball(&spec, 3, 0).unwrap();
            let par = p.parity.as_ref().unwrap();
            assert!(p.edges.iter().all(|e| par[e.u] != par[e.v]));
            assert_eq!(par[p.root], Parity::Even);
        }
    }

    #[test]
    fn line_graph_of_two_edge_path_is_single_edge() {
        let p = PlanarPatch::from_edges(path(3), &[(0, 1), (1, 2)], &[1], 1).unwrap();
        let lg = line_graph(&p).unwrap();
        assert_eq!(lg.n_nodes(), 2);
        assert_eq!(lg.adjacency, vec![(0, 1)]);
    }

    #[test]
    fn line_graph_of_star_is_triangle() {
        let pos = vec![[0.0, 0.0], [1.0, 0.0], [-0.5, 0.8], [-0.5, -0.8]];
        let p = PlanarPatch::from_edges(pos, &[(0, 1), (0, 2), (0, 3)], &[0], 0).unwrap();
        let lg = line_graph(&p).unwrap();
        assert_eq!(lg.adjacency.len(), 3);
        assert!((0..3).all(|n| lg.degree(n) == 2));
    }

    #[test]
    fn hexagon_odd_graph_is_triangle() {
        let pos: Vec<[f64; 2]> = (0..6)
            .map(|k| {
                let t = k as f64 * std::f64::consts::PI / 3.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let edges: Vec<_> = (0..6).map(|k| (k, (k + 1) % 6)).collect();
        let p = PlanarPatch::from_edges(pos, &edges, &[0, 1, 2, 3, 4, 5], 0).unwrap();
        assert_eq!(p.faces.len(), 2);
        let g = odd_vertex_graph(&p).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.adjacency.len(), 3);
        assert!(g.witness_faces.iter().all(|w| !w.outer));
    }

    #[test]
    fn odd_vertex_graph_rejects_odd_cycle() {
        let pos = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]];
        let p = PlanarPatch::from_edges(pos, &[(0, 1), (1, 2), (2, 0)], &[0, 1, 2], 0).unwrap();
        assert_eq!(odd_vertex_graph(&p).unwrap_err(), LatticeError::NotBipartite);
    }

    #[test]
    fn ball_serialisation_is_deterministic() {
        let a = serde_json::to_string(&build_ball(&LatticeSpec::honeycomb(), 3, 0).unwrap().to_json()).unwrap();
        let b = serde_json::to_string(&build_ball(&LatticeSpec::honeycomb(), 3, 0).unwrap().to_json()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"vertices\":[{\"id\":0,\"x\":"));
    }
}
