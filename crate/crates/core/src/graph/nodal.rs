//! Nodal domains of Laplacian eigenvectors.
//!
//! A strong nodal domain is a maximal connected set of vertices on which the
//! vector is strictly positive (or strictly negative). A weak nodal domain
//! relaxes this to `>= 0` (or `<= 0`) with at least one nonzero vertex.
//! For the `i`-th eigenvector of a connected graph, with `u` the multiplicity
//! of its eigenvalue, `q` the cycle rank and `z` the number of zero entries:
//!
//! ```text
//! strong <= i + u - 1      weak <= i      strong >= i + u - 1 - q - z
//! ```
//!
//! where `i` is the first (1-based) position of the eigenvalue in the sorted
//! spectrum. The upper bounds stay valid for any later position inside a
//! repeated eigenvalue, but the lower bound does not, so the group start is
//! what the report uses.

use std::collections::VecDeque;

use super::{spectral::SpectralDecomposition, KnnGraph};

/// Entries with magnitude below this are treated as exact zeros.
pub const ZERO_TOLERANCE: f64 = 1e-10;

/// Relative tolerance when grouping equal eigenvalues.
pub const MULTIPLICITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sign {
    Neg,
    Zero,
    Pos,
}

fn sign(v: f64) -> Sign {
    if v.abs() < ZERO_TOLERANCE {
        Sign::Zero
    } else if v > 0.0 {
        Sign::Pos
    } else {
        Sign::Neg
    }
}

/// Number of components of the subgraph induced by `member` that contain at
/// least one `seed` vertex.
fn count_components(
    adj: &[Vec<(usize, f64)>],
    member: impl Fn(usize) -> bool,
    seed: impl Fn(usize) -> bool,
) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let mut count = 0;
    for start in 0..n {
        if seen[start] || !member(start) {
            continue;
        }
        let mut has_seed = false;
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            has_seed |= seed(v);
            for &(u, w) in &adj[v] {
                if w > 0.0 && !seen[u] && member(u) {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if has_seed {
            count += 1;
        }
    }
    count
}

fn count_with_adjacency(adj: &[Vec<(usize, f64)>], x: &[f64], kind: DomainKind) -> usize {
    let s: Vec<Sign> = x.iter().map(|&v| sign(v)).collect();
    match kind {
        DomainKind::Strong => {
            count_components(adj, |v| s[v] == Sign::Pos, |_| true)
                + count_components(adj, |v| s[v] == Sign::Neg, |_| true)
        }
        DomainKind::Weak => {
            count_components(adj, |v| s[v] != Sign::Neg, |v| s[v] == Sign::Pos)
                + count_components(adj, |v| s[v] != Sign::Pos, |v| s[v] == Sign::Neg)
        }
    }
}

/// Counts the strong or weak nodal domains of `x` on `graph`.
pub fn count_nodal_domains(graph: &KnnGraph, x: &[f64], kind: DomainKind) -> usize {
    assert_eq!(
        x.len(),
        graph.vertex_count(),
        "vector length must match the graph"
    );
    count_with_adjacency(&graph.adjacency(), x, kind)
}

/// Per-eigenvector outcome of the bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalEntry {
    /// 1-based position in the ascending spectrum.
    pub position: usize,
    /// 1-based position of the first eigenvalue equal to this one.
    pub group_start: usize,
    pub eigenvalue: f64,
    pub multiplicity: usize,
    pub strong: usize,
    pub weak: usize,
    pub zeros: usize,
    pub strong_upper_ok: bool,
    pub weak_upper_ok: bool,
    pub strong_lower_ok: bool,
}

impl NodalEntry {
    pub fn strong_upper(&self) -> usize {
        self.group_start + self.multiplicity - 1
    }

    pub fn weak_upper(&self) -> usize {
        self.group_start
    }

    pub fn all_ok(&self) -> bool {
        self.strong_upper_ok && self.weak_upper_ok && self.strong_lower_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalDomainReport {
    /// Cycle rank of the graph.
    pub cycle_rank: usize,
    pub components: usize,
    pub entries: Vec<NodalEntry>,
}

impl NodalDomainReport {
    pub fn violations(&self) -> impl Iterator<Item = &NodalEntry> {
        self.entries.iter().filter(|e| !e.all_ok())
    }

    pub fn all_bounds_hold(&self) -> bool {
        self.entries.iter().all(NodalEntry::all_ok)
    }
}

/// Checks the nodal-domain bounds for every eigenvector. Violations are
/// recorded in the report, never raised.
pub fn verify_nodal_bounds(decomp: &SpectralDecomposition, graph: &KnnGraph) -> NodalDomainReport {
    assert_eq!(
        decomp.dim(),
        graph.vertex_count(),
        "decomposition must come from this graph"
    );
    let n = decomp.dim();
    let adj = graph.adjacency();
    let q = graph.cycle_rank();
    let scale = decomp
        .eigenvalues
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = MULTIPLICITY_TOLERANCE * scale;

    // group boundaries over the ascending eigenvalues
    let mut group_of = vec![0usize; n];
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        match groups.last_mut() {
            Some((start, len))
                if (decomp.eigenvalues[i] - decomp.eigenvalues[*start]).abs() <= tol =>
            {
                *len += 1;
            }
            _ => groups.push((i, 1)),
        }
        group_of[i] = groups.len() - 1;
    }

    let entries = (0..n)
        .map(|i| {
            let (start, multiplicity) = groups[group_of[i]];
            let x = decomp.eigenvectors.column(i);
            let x = x.as_slice();
            let strong = count_with_adjacency(&adj, x, DomainKind::Strong);
            let weak = count_with_adjacency(&adj, x, DomainKind::Weak);
            let zeros = x.iter().filter(|v| v.abs() < ZERO_TOLERANCE).count();
            let k = start + 1;
            let upper = k + multiplicity - 1;
            let lower = upper as i64 - q as i64 - zeros as i64;
            NodalEntry {
                position: i + 1,
                group_start: k,
                eigenvalue: decomp.eigenvalues[i],
                multiplicity,
                strong,
                weak,
                zeros,
                strong_upper_ok: strong <= upper,
                weak_upper_ok: weak <= k,
                strong_lower_ok: strong as i64 >= lower,
            }
        })
        .collect();

    NodalDomainReport {
        cycle_rank: q,
        components: graph.component_count(),
        entries,
    }
}
