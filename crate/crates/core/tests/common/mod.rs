//! Helpers shared by the integration tests.

use heightlab::percolation::ClusterGraph;

/// Components of `subset` by depth-first search, with a winding lift per
/// element; a cluster wraps in direction d when a non-tree link closes with
/// a lift mismatch in coordinate d.
pub struct Census {
    pub sizes: Vec<usize>,
    pub wraps: Vec<(bool, bool)>,
    pub touching: Vec<bool>,
    pub minima: Vec<usize>,
}

pub fn dfs_census<G: ClusterGraph>(g: &G, subset: &[bool]) -> Census {
    let n = g.n_elements();
    let mut lift: Vec<Option<[i64; 2]>> = vec![None; n];
    let mut found = Vec::new();
    for s in 0..n {
        if !subset[s] || lift[s].is_some() {
            continue;
        }
        lift[s] = Some([0, 0]);
        let mut stack = vec![s];
        let (mut size, mut wrap, mut touch, mut min) = (0, (false, false), false, s);
        while let Some(x) = stack.pop() {
            size += 1;
            touch |= g.touches_boundary(x);
            min = min.min(x);
            let lx = lift[x].unwrap();
            for (y, w) in g.links(x) {
                if !subset[y] {
                    continue;
                }
                let want = [lx[0] + w[0], lx[1] + w[1]];
                match lift[y] {
                    None => {
                        lift[y] = Some(want);
                        stack.push(y);
                    }
                    Some(ly) => {
                        wrap.0 |= ly[0] != want[0];
                        wrap.1 |= ly[1] != want[1];
                    }
                }
            }
        }
        found.push((size, min, wrap, touch));
    }
    found.sort_by_key(|&(size, min, _, _)| (std::cmp::Reverse(size), min));
    Census {
        sizes: found.iter().map(|f| f.0).collect(),
        minima: found.iter().map(|f| f.1).collect(),
        wraps: found.iter().map(|f| f.2).collect(),
        touching: found.iter().map(|f| f.3).collect(),
    }
}
