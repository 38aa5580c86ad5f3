//! Graphs over point sets and the signal-processing tools built on them.
//!
//! - [`KnnGraph`]: undirected weighted graph, usually the symmetrized k-NN
//!   graph of a point set.
//! - [`Laplacian`]: combinatorial Laplacian `D - W` in sparse form.
//! - [`spectral`]: dense eigendecomposition and the graph Fourier transform.
//! - [`nodal`]: nodal-domain counting and the eigenvalue/frequency bounds.

pub mod nodal;
pub mod spectral;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Point3, Vector3};

use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;

pub use nodal::{
    count_nodal_domains, verify_nodal_bounds, DomainKind, NodalDomainReport, NodalEntry,
};
pub use spectral::{
    gft, igft, spectral_decompose, spectral_decompose_with_cap, SpectralDecomposition,
};

/// Edge weighting used when building a k-NN graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeWeighting {
    /// Every stored edge has weight 1.
    Unweighted,
    /// `exp(-d^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
}

/// Undirected graph stored as an edge list with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl KnnGraph {
    /// Builds a graph from arbitrary undirected edges. Duplicates must agree
    /// on weight; self-loops and negative weights are rejected.
    pub fn from_edges(
        vertex_count: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {a}")));
            }
            if a >= vertex_count || b >= vertex_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) outside {vertex_count} vertices"
                )));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) has weight {w}"
                )));
            }
            let key = (a.min(b), a.max(b));
            if let Some(prev) = map.insert(key, w) {
                if prev != w {
                    return Err(Error::InvalidArgument(format!(
                        "edge {key:?} given weights {prev} and {w}"
                    )));
                }
            }
        }
        Ok(Self {
            vertex_count,
            edges: map.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
        })
    }

    /// Symmetrized k-NN graph: `(i, j)` is an edge when either endpoint has
    /// the other among its `k` nearest neighbors.
    pub fn build(points: &[Point3<f64>], k: usize, weighting: EdgeWeighting) -> Result<Self> {
        if k == 0 || k >= points.len() {
            return Err(Error::InvalidArgument(format!(
                "k-NN graph needs 0 < k < point count (k = {k}, {} points)",
                points.len()
            )));
        }
        let index = SpatialIndex::new(points);
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for i in 0..points.len() {
            for hit in index.knn_of(i, k)? {
                let w = match weighting {
                    EdgeWeighting::Unweighted => 1.0,
                    EdgeWeighting::Gaussian { sigma } => {
                        (-hit.distance * hit.distance / (2.0 * sigma * sigma)).exp()
                    }
                };
                map.insert((i.min(hit.index), i.max(hit.index)), w);
            }
        }
        Ok(Self {
            vertex_count: points.len(),
            edges: map.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbor lists with weights, both directions, sorted by neighbor.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for &(a, b, w) in &self.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in adj.iter_mut() {
            list.sort_by_key(|e| e.0);
        }
        adj
    }

    /// Connected components as a label per vertex, labels in order of first vertex.
    pub fn component_labels(&self) -> (Vec<usize>, usize) {
        let adj = self.adjacency();
        let mut label = vec![usize::MAX; self.vertex_count];
        let mut count = 0;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.vertex_count {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &(u, _) in &adj[v] {
                    if label[u] == usize::MAX {
                        label[u] = count;
                        queue.push_back(u);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().1
    }

    /// Cycle rank `|E| - N + c`: edges to delete to leave a forest.
    pub fn cycle_rank(&self) -> usize {
        self.edge_count() + self.component_count() - self.vertex_count
    }

    /// Edge-list text: one `i j w` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b, w) in &self.edges {
            let _ = writeln!(out, "{a} {b} {w}");
        }
        out
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_edge_list(vertex_count: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [a, b, w] => a
                    .parse::<usize>()
                    .ok()
                    .zip(b.parse::<usize>().ok())
                    .zip(w.parse::<f64>().ok())
                    .map(|((a, b), w)| (a, b, w)),
                _ => None,
            };
            edges.push(parsed.ok_or_else(|| {
                Error::InvalidArgument(format!("edge list line {}: expected 'i j w'", n + 1))
            })?);
        }
        Self::from_edges(vertex_count, edges)
    }
}

/// Combinatorial graph Laplacian `L = D - W`, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    degrees: Vec<f64>,
    /// Off-diagonal entries per row as `(column, w_ij)`; the matrix entry is `-w_ij`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl Laplacian {
    pub fn new(graph: &KnnGraph) -> Self {
        let rows = graph.adjacency();
        let degrees = rows
            .iter()
            .map(|r| r.iter().map(|&(_, w)| w).sum())
            .collect();
        Self { degrees, rows }
    }

    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// `L z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                self.degrees[i] * z[i] - self.rows[i].iter().map(|&(j, w)| w * z[j]).sum::<f64>()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.degrees[i];
            for &(j, w) in &self.rows[i] {
                m[(i, j)] -= w;
            }
        }
        m
    }
}

/// Convenience alias for [`Laplacian::new`].
pub fn laplacian(graph: &KnnGraph) -> Laplacian {
    Laplacian::new(graph)
}

/// `z^T L z` for a scalar signal.
pub fn smoothness_energy(l: &Laplacian, z: &[f64]) -> Result<f64> {
    if z.len() != l.dim() {
        return Err(Error::InvalidArgument(format!(
            "signal length {} does not match {} vertices",
            z.len(),
            l.dim()
        )));
    }
    let lz = l.apply(z);
    Ok(z.iter().zip(&lz).map(|(a, b)| a * b).sum::<f64>().max(0.0))
}

/// Sum of `z^T L z` over the three coordinate channels.
pub fn smoothness_energy_xyz(l: &Laplacian, z: &[Vector3<f64>]) -> Result<f64> {
    (0..3)
        .map(|c| {
            let channel: Vec<f64> = z.iter().map(|v| v[c]).collect();
            smoothness_energy(l, &channel)
        })
        .sum()
}

/// Isotropic graph total variation `sum_i sqrt(sum_j (z_j - z_i)^2 w_ij^2)`.
pub fn isotropic_gtv(graph: &KnnGraph, z: &[f64]) -> Result<f64> {
    if z.len() != graph.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "signal length {} does not match {} vertices",
            z.len(),
            graph.vertex_count()
        )));
    }
    Ok(graph
        .adjacency()
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            nbrs.iter()
                .map(|&(j, w)| {
                    let g = (z[j] - z[i]) * w;
                    g * g
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(n: usize) -> KnnGraph {
        KnnGraph::from_edges(n, (0..n - 1).map(|i| (i, i + 1, 1.0))).unwrap()
    }

    #[test]
    fn collinear_k1() {
        let pts: Vec<_> = (0..3).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let g = KnnGraph::build(&pts, 1, EdgeWeighting::Unweighted).unwrap();
        assert_eq!(g.edges(), &[(0, 1, 1.0), (1, 2, 1.0)]);
    }

    #[test]
    fn two_points_single_edge() {
        let pts = vec![Point3::origin(), Point3::new(0.0, 2.0, 0.0)];
        let g = KnnGraph::build(&pts, 1, EdgeWeighting::Gaussian { sigma: 1.0 }).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!((g.edges()[0].2 - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn k_must_be_below_point_count() {
        let pts = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        assert!(KnnGraph::build(&pts, 2, EdgeWeighting::Unweighted).is_err());
    }

    #[test]
    fn path_laplacian() {
        let l = laplacian(&path(3)).to_dense();
        let want = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(l, want);
    }

    #[test]
    fn isolated_vertex() {
        let g = KnnGraph::from_edges(1, []).unwrap();
        assert_eq!(laplacian(&g).to_dense(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn energy_examples() {
        let l = laplacian(&path(3));
        assert_eq!(smoothness_energy(&l, &[0.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(smoothness_energy(&l, &[4.0; 3]).unwrap(), 0.0);
        assert!(smoothness_energy(&l, &[1.0; 2]).is_err());
    }

    #[test]
    fn gtv_examples() {
        let g = path(2);
        assert_eq!(isotropic_gtv(&g, &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(isotropic_gtv(&g, &[3.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_self_loops() {
        assert!(KnnGraph::from_edges(2, [(1, 1, 1.0)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = KnnGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 0.25), (1, 3, 2.0)]).unwrap();
        let back = KnnGraph::parse_edge_list(4, &g.to_edge_list()).unwrap();
        assert_eq!(back, g);
        assert!(KnnGraph::parse_edge_list(4, "0 1\n").is_err());
    }

    #[test]
    fn cycle_rank_of_cycle() {
        let g = KnnGraph::from_edges(5, (0..5).map(|i| (i, (i + 1) % 5, 1.0))).unwrap();
        assert_eq!(g.cycle_rank(), 1);
        assert_eq!(path(5).cycle_rank(), 0);
    }

    fn random_points() -> impl Strategy<Value = Vec<Point3<f64>>> {
        prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 6..120).prop_map(|v| {
            v.into_iter()
                .map(|(x, y, z)| Point3::new(x, y, z))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn knn_graph_matches_brute_force(pts in random_points(), k in 1usize..6) {
            let k = k.min(pts.len() - 1);
            let g = KnnGraph::build(&pts, k, EdgeWeighting::Unweighted).unwrap();
            let mut want = std::collections::BTreeSet::new();
            for i in 0..pts.len() {
                let mut d: Vec<(f64, usize)> = (0..pts.len()).filter(|&j| j != i)
                    .map(|j| ((pts[j] - pts[i]).norm_squared(), j)).collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(_, j) in d.iter().take(k) {
                    want.insert((i.min(j), i.max(j)));
                }
            }
            let got: std::collections::BTreeSet<_> = g.edges().iter().map(|e| (e.0, e.1)).collect();
            prop_assert_eq!(got, want);
            prop_assert!(g.edges().iter().all(|e| e.2 == 1.0 && e.0 < e.1));
        }

        #[test]
        fn laplacian_rows_sum_to_zero(pts in random_points(), k in 1usize..6, sigma in 0.5f64..3.0) {
            let k = k.min(pts.len() - 1);
            let g = KnnGraph::build(&pts, k, EdgeWeighting::Gaussian { sigma }).unwrap();
            let l = laplacian(&g).to_dense();
            for i in 0..l.nrows() {
                prop_assert!(l.row(i).sum().abs() < 1e-9);
                for j in 0..l.ncols() {
                    prop_assert_eq!(l[(i, j)], l[(j, i)]);
                }
            }
        }

        #[test]
        fn energy_equals_pairwise_sum(pts in random_points(), k in 1usize..6, seed in 0u64..1000) {
            let k = k.min(pts.len() - 1);
            let g = KnnGraph::build(&pts, k, EdgeWeighting::Gaussian { sigma: 2.0 }).unwrap();
            let z: Vec<f64> = (0..pts.len()).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 10.0 - 5.0).collect();
            let pairwise: f64 = g.edges().iter().map(|&(a, b, w)| w * (z[a] - z[b]).powi(2)).sum();
            let quad = smoothness_energy(&laplacian(&g), &z).unwrap();
            prop_assert!((quad - pairwise).abs() <= 1e-9 * pairwise.max(1.0));
        }

        #[test]
        fn gtv_equals_double_loop(pts in random_points(), k in 1usize..6) {
            let k = k.min(pts.len() - 1);
            let g = KnnGraph::build(&pts, k, EdgeWeighting::Gaussian { sigma: 1.5 }).unwrap();
            let z: Vec<f64> = pts.iter().map(|p| p.x * 0.3 - p.z).collect();
            let n = pts.len();
            let mut w = vec![vec![0.0; n]; n];
            for &(a, b, wt) in g.edges() { w[a][b] = wt; w[b][a] = wt; }
            let mut naive = 0.0;
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n { s += ((z[j] - z[i]) * w[i][j]).powi(2); }
                naive += s.sqrt();
            }
            let got = isotropic_gtv(&g, &z).unwrap();
            prop_assert!((got - naive).abs() <= 1e-9 * naive.max(1.0));
        }
    }
}
