//! Symmetric sparse matrices and a Jacobi-preconditioned conjugate-gradient
//! solver.

use crate::error::{Error, Result};

/// Symmetric matrix stored as full rows of `(column, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymmetricMatrix {
    /// Builds from row lists. Symmetry is the caller's responsibility;
    /// `debug_assert` checks it in debug builds.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let m = SymmetricMatrix { rows };
        debug_assert!(m.is_symmetric(1e-12));
        m
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().filter(|(j, _)| *j == i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        let mut dense = std::collections::HashMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if j >= n {
                    return false;
                }
                *dense.entry((i, j)).or_insert(0.0) += v;
            }
        }
        dense.iter().all(|(&(i, j), v)| {
            (v - dense.get(&(j, i)).copied().unwrap_or(0.0)).abs() <= tol * v.abs().max(1.0)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `||A x - b|| / ||b||`, or the absolute residual when `b = 0`.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` in place, starting from the contents of `x`.
pub fn conjugate_gradient(
    a: &SymmetricMatrix,
    b: &[f64],
    x: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<CgOutcome> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::InvalidArgument(format!(
            "system of dimension {n} given rhs of {} and guess of {}",
            b.len(),
            x.len()
        )));
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(Error::Config(format!(
            "system matrix is not positive definite (diagonal entry {i} is {})",
            diag[i]
        )));
    }
    let b_norm = norm(b);
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };

    let ax = a.mul_vec(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = norm(&r) / scale;
    let mut iterations = 0;
    while residual > tolerance && iterations < max_iterations {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Numerical(format!(
                "conjugate gradient breakdown after {iterations} iterations (p'Ap = {pap:e}, residual {residual:e})"
            )));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        // the recurrence drifts; check the true residual before stopping
        residual = norm(&r) / scale;
        if residual <= tolerance {
            let ax = a.mul_vec(x);
            let true_r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            residual = norm(&true_r) / scale;
            if residual > tolerance {
                r = true_r;
                z = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
                p = z.clone();
                rz = dot(&r, &z);
            }
        }
    }
    if residual > tolerance {
        return Err(Error::Numerical(format!(
            "conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})"
        )));
    }
    Ok(CgOutcome {
        iterations,
        relative_residual: residual,
    })
}
