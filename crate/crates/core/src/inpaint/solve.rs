//! The graph-regularized least-squares fill of a registered source cube.

use nalgebra::{Point3, Vector3};

use super::cube::{Cube, CubePoint};
use crate::config::{KPolicy, SmoothnessPrior};
use crate::error::{Error, Result};
use crate::graph::{laplacian, EdgeWeighting, KnnGraph, Laplacian};
use crate::sparse::{conjugate_gradient, SymmetricMatrix};
use crate::voxel::Cell;

/// Relative residual the solver must reach on every channel.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Least-squares problem over the points of a registered source cube.
///
/// Each node is pulled toward its anchor: the target coordinate for nodes
/// known in the target (weight 1), the source coordinate otherwise (weight
/// `alpha`), while `beta` times the graph Laplacian keeps the result smooth.
/// Under [`SmoothnessPrior::Offset`] the Laplacian term penalizes
/// `c - source` rather than `c`.
#[derive(Debug, Clone)]
pub struct InpaintProblem {
    pub cells: Vec<Cell>,
    /// Target coordinate for known nodes, `None` for missing ones.
    pub known: Vec<Option<Point3<f64>>>,
    pub source: Vec<Point3<f64>>,
    pub laplacian: Laplacian,
    pub alpha: f64,
    pub beta: f64,
    pub prior: SmoothnessPrior,
}

#[derive(Debug, Clone)]
pub struct InpaintSolution {
    pub positions: Vec<Point3<f64>>,
    /// Largest relative residual over the three channels.
    pub residual: f64,
    pub iterations: usize,
}

impl InpaintProblem {
    /// Assembles the problem from raw parts with the offset prior; `k` is the
    /// neighbor count of the graph built over `source`.
    pub fn new(
        cells: Vec<Cell>,
        source: Vec<Point3<f64>>,
        known: Vec<Option<Point3<f64>>>,
        alpha: f64,
        beta: f64,
        k: usize,
    ) -> Result<Self> {
        let n = source.len();
        if known.len() != n || cells.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} cells, {} source points and {} known flags do not match",
                cells.len(),
                n,
                known.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument(
                "inpaint problem has no nodes".into(),
            ));
        }
        if !(alpha >= 0.0 && beta >= 0.0) || (alpha == 0.0 && beta == 0.0) {
            return Err(Error::Config(format!(
                "alpha = {alpha}, beta = {beta} does not give a positive definite system"
            )));
        }
        let graph = if beta > 0.0 && n > 1 {
            KnnGraph::build(&source, k.min(n - 1), EdgeWeighting::Unweighted)?
        } else {
            KnnGraph::from_edges(n, [])?
        };
        if alpha == 0.0 {
            // every component needs a known node, else its nodes float freely
            let (labels, count) = graph.component_labels();
            let mut anchored = vec![false; count];
            for (i, k) in known.iter().enumerate() {
                anchored[labels[i]] |= k.is_some();
            }
            if anchored.iter().any(|a| !a) {
                return Err(Error::Config(
                    "alpha = 0 leaves a graph component without known nodes".into(),
                ));
            }
        }
        Ok(InpaintProblem {
            cells,
            known,
            source,
            laplacian: laplacian(&graph),
            alpha,
            beta,
            prior: SmoothnessPrior::Offset,
        })
    }

    pub fn with_prior(mut self, prior: SmoothnessPrior) -> Self {
        self.prior = prior;
        self
    }

    /// Builds the problem for `target` and registered source `registered`.
    pub fn from_cubes(
        target: &Cube,
        registered: &Cube,
        alpha: f64,
        beta: f64,
        k_policy: KPolicy,
    ) -> Result<Self> {
        let cells: Vec<Cell> = registered.occupied.keys().copied().collect();
        let source: Vec<Point3<f64>> = registered.occupied.values().map(|p| p.position).collect();
        let known = cells
            .iter()
            .map(|c| target.occupied.get(c).map(|p| p.position))
            .collect();
        let k = k_policy.resolve(source.len());
        Self::new(cells, source, known, alpha, beta, k)
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.known.iter().filter(|k| k.is_none()).count()
    }

    fn weight(&self, i: usize) -> f64 {
        if self.known[i].is_some() {
            1.0
        } else {
            self.alpha
        }
    }

    fn anchor(&self, i: usize) -> Point3<f64> {
        self.known[i].unwrap_or(self.source[i])
    }

    /// Signal the smoothness term is measured from, per channel.
    fn prior_origin(&self, channel: usize) -> Vec<f64> {
        match self.prior {
            SmoothnessPrior::Offset => self.source.iter().map(|p| p[channel]).collect(),
            SmoothnessPrior::Literal => vec![0.0; self.len()],
        }
    }

    /// `diag(selectors) + beta L`.
    pub fn system_matrix(&self) -> SymmetricMatrix {
        let degrees = self.laplacian.degrees();
        let rows = self
            .laplacian
            .rows()
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut out = Vec::with_capacity(row.len() + 1);
                out.push((i, self.weight(i) + self.beta * degrees[i]));
                out.extend(row.iter().map(|&(j, w)| (j, -self.beta * w)));
                out
            })
            .collect();
        SymmetricMatrix::from_rows(rows)
    }

    pub fn rhs(&self, channel: usize) -> Vec<f64> {
        let lo = self.laplacian.apply(&self.prior_origin(channel));
        (0..self.len())
            .map(|i| self.weight(i) * self.anchor(i)[channel] + self.beta * lo[i])
            .collect()
    }

    pub fn objective(&self, c: &[Point3<f64>]) -> f64 {
        let fidelity: f64 = (0..self.len())
            .map(|i| self.weight(i) * (c[i] - self.anchor(i)).norm_squared())
            .sum();
        let smooth: f64 = (0..3)
            .map(|ch| {
                let origin = self.prior_origin(ch);
                let z: Vec<f64> = c.iter().zip(&origin).map(|(p, o)| p[ch] - o).collect();
                let lz = self.laplacian.apply(&z);
                z.iter().zip(&lz).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum();
        fidelity + self.beta * smooth
    }

    /// Gradient `2 (A c - b)` of the objective, one vector per node.
    pub fn gradient(&self, c: &[Point3<f64>]) -> Vec<Vector3<f64>> {
        let a = self.system_matrix();
        let mut g = vec![Vector3::zeros(); self.len()];
        for ch in 0..3 {
            let z: Vec<f64> = c.iter().map(|p| p[ch]).collect();
            let az = a.mul_vec(&z);
            let b = self.rhs(ch);
            for i in 0..self.len() {
                g[i][ch] = 2.0 * (az[i] - b[i]);
            }
        }
        g
    }

    /// Solves the three channels by conjugate gradient, warm-started from
    /// the anchors.
    pub fn solve(&self) -> Result<InpaintSolution> {
        let a = self.system_matrix();
        let mut positions: Vec<Point3<f64>> = (0..self.len()).map(|i| self.anchor(i)).collect();
        let mut residual: f64 = 0.0;
        let mut iterations = 0;
        for ch in 0..3 {
            let b = self.rhs(ch);
            let mut x: Vec<f64> = positions.iter().map(|p| p[ch]).collect();
            let out = conjugate_gradient(&a, &b, &mut x, SOLVE_TOLERANCE, 20 * self.len() + 100)?;
            for (p, v) in positions.iter_mut().zip(&x) {
                p[ch] = *v;
            }
            residual = residual.max(out.relative_residual);
            iterations += out.iterations;
        }
        Ok(InpaintSolution {
            positions,
            residual,
            iterations,
        })
    }
}

/// Solves the fill for a target and its registered source. The returned cube
/// holds every node at its solved coordinate (known nodes keep their target
/// coordinate when `preserve_known` is set) with the source normals.
pub fn solve_inpaint(
    target: &Cube,
    registered: &Cube,
    alpha: f64,
    beta: f64,
    k_policy: KPolicy,
    prior: SmoothnessPrior,
    preserve_known: bool,
) -> Result<(Cube, InpaintProblem, InpaintSolution)> {
    let problem =
        InpaintProblem::from_cubes(target, registered, alpha, beta, k_policy)?.with_prior(prior);
    let solution = problem.solve()?;
    let mut out = Cube::new(target.anchor, target.side);
    out.missing = target.missing.clone();
    for (i, (cell, p)) in registered.occupied.iter().enumerate() {
        let position = match (preserve_known, problem.known[i]) {
            (true, Some(t)) => t,
            _ => solution.positions[i],
        };
        out.occupied.insert(
            *cell,
            CubePoint {
                position,
                normal: p.normal,
            },
        );
    }
    Ok((out, problem, solution))
}
