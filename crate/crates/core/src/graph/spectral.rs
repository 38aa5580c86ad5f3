//! Dense Laplacian eigendecomposition and the graph Fourier transform.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::Laplacian;
use crate::error::{Error, Result};

/// Largest Laplacian handled by the dense eigensolver unless overridden.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Eigenpairs of a Laplacian, eigenvalues ascending, eigenvectors as
/// orthonormal columns. Each eigenvector's first entry with magnitude above
/// `1e-10` is positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// `X diag(lambda) X^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let x = &self.eigenvectors;
        x * DMatrix::from_diagonal(&self.eigenvalues) * x.transpose()
    }
}

pub fn spectral_decompose(l: &Laplacian) -> Result<SpectralDecomposition> {
    spectral_decompose_with_cap(l, DEFAULT_DENSE_CAP)
}

pub fn spectral_decompose_with_cap(l: &Laplacian, cap: usize) -> Result<SpectralDecomposition> {
    let n = l.dim();
    if n > cap {
        return Err(Error::Capacity(format!(
            "dense eigendecomposition of {n} vertices exceeds the cap of {cap}; \
             avoid full spectra at this size (the inpainting solve never needs one)"
        )));
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(l.to_dense());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-10) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn check_len(decomp: &SpectralDecomposition, len: usize) -> Result<()> {
    if len != decomp.dim() {
        return Err(Error::InvalidArgument(format!(
            "signal length {len} does not match {} vertices",
            decomp.dim()
        )));
    }
    Ok(())
}

/// Forward transform `eta = X^T z`.
pub fn gft(decomp: &SpectralDecomposition, z: &[f64]) -> Result<Vec<f64>> {
    check_len(decomp, z.len())?;
    let z = DVector::from_column_slice(z);
    Ok((decomp.eigenvectors.transpose() * z).as_slice().to_vec())
}

/// Inverse transform `z = X eta`.
pub fn igft(decomp: &SpectralDecomposition, eta: &[f64]) -> Result<Vec<f64>> {
    check_len(decomp, eta.len())?;
    let eta = DVector::from_column_slice(eta);
    Ok((&decomp.eigenvectors * eta).as_slice().to_vec())
}
