use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::sampling::dist_sq;
use crate::error::{Error, Result};
use crate::tensor::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    /// Neighbour cap per node before symmetrization.
    pub k_max: usize,
    /// Distance threshold in pixels; edges need a strictly smaller distance.
    pub d: f64,
    /// Share of each row given to neighbours in the re-weighted operator.
    pub p: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            k_max: 8,
            d: 100.0,
            p: 0.4,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 || !(self.d > 0.0) || !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid(format!(
                "edge config needs k_max >= 1, d > 0, 0 < p < 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Undirected simple graph as sorted neighbour lists.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds from undirected edges; duplicates and orientation are ignored,
    /// self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(Error::invalid(format!("bad edge ({i}, {j}) for {n} nodes")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Adjacency { neighbors })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Undirected edges with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Fraction of neighbour pairs of `i` that are themselves adjacent;
    /// 0 below degree 2.
    pub fn local_clustering(&self, i: usize) -> f64 {
        let list = &self.neighbors[i];
        let k = list.len();
        if k < 2 {
            return 0.0;
        }
        let mut links = 0usize;
        for (a, &u) in list.iter().enumerate() {
            links += list[a + 1..].iter().filter(|&&v| self.contains(u, v)).count();
        }
        2.0 * links as f64 / (k * (k - 1)) as f64
    }

    /// Mean local clustering coefficient over all nodes.
    pub fn mean_clustering(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        (0..self.n()).map(|i| self.local_clustering(i)).sum::<f64>() / self.n() as f64
    }

    /// Same graph with nodes relabelled so old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Adjacency {
        let mut neighbors = vec![Vec::new(); self.n()];
        for (i, list) in self.neighbors.iter().enumerate() {
            let mut mapped: Vec<usize> = list.iter().map(|&j| perm[j]).collect();
            mapped.sort_unstable();
            neighbors[perm[i]] = mapped;
        }
        Adjacency { neighbors }
    }
}

/// Directed k-nearest-neighbour relation under the distance threshold,
/// symmetrized by union. Neighbour candidates come from a uniform grid with
/// cell side `d`, so only the 3x3 block of cells around a node is searched.
/// Distances are compared squared; ties in distance go to the lower index.
pub fn knn_edges(coords: &[[f64; 2]], cfg: &EdgeConfig) -> Result<Adjacency> {
    cfg.validate()?;
    let n = coords.len();
    let cell = |p: [f64; 2]| ((p[0] / cfg.d).floor() as i64, (p[1] / cfg.d).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in coords.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let d_sq = cfg.d * cfg.d;
    let mut directed = Vec::new();
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    for (i, &p) in coords.iter().enumerate() {
        candidates.clear();
        let (cr, cc) = cell(p);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let Some(bucket) = grid.get(&(cr.saturating_add(dr), cc.saturating_add(dc))) else {
                    continue;
                };
                for &j in bucket {
                    if j == i {
                        continue;
                    }
                    let dsq = dist_sq(p, coords[j]);
                    if dsq < d_sq {
                        candidates.push((dsq, j));
                    }
                }
            }
        }
        candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        directed.extend(candidates.iter().take(cfg.k_max).map(|&(_, j)| (i, j)));
    }
    Adjacency::from_edges(n, directed)
}

/// Row-stochastic propagation operator: each node keeps `1 - p` for itself
/// and spreads `p` evenly over its neighbours. Isolated nodes keep 1.
pub fn reweight(adjacency: &Adjacency, p: f64) -> CsrMatrix {
    let rows = (0..adjacency.n())
        .map(|i| {
            let deg = adjacency.degree(i);
            if deg == 0 {
                return vec![(i, 1.0)];
            }
            let share = p / deg as f64;
            let mut row: Vec<(usize, f64)> = adjacency.neighbors(i).iter().map(|&j| (j, share)).collect();
            row.push((i, 1.0 - p));
            row
        })
        .collect();
    CsrMatrix::from_rows(adjacency.n(), rows)
}
