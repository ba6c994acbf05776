use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{center_rows, column_means, sym_eigen_desc};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// PCA basis built from the (by default uncentered) correlation matrix
/// `C = sum_i x_i x_i^T`, with projections scaled by the square roots of
/// the eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// All D eigenvalues of C, descending, tiny ones clamped to zero.
    pub eigenvalues: Vec<f64>,
    /// d x D, rows `sqrt(lambda_k) e_k^T`.
    pub forward: DMatrix<f64>,
    /// D x d pseudo-inverse of `forward`.
    pub inverse: DMatrix<f64>,
    /// Present when the data was centered before forming C.
    pub mean: Option<DVector<f64>>,
}

impl PcaBasis {
    pub fn dim_full(&self) -> usize {
        self.forward.ncols()
    }

    pub fn dim_reduced(&self) -> usize {
        self.forward.nrows()
    }

    pub fn centered(&self) -> bool {
        self.mean.is_some()
    }

    /// Fit on an N x D data matrix (one sample per row).
    pub fn fit(x: &DMatrix<f64>, d: usize, centered: bool) -> Result<Self> {
        let (n, dim) = x.shape();
        if n < 2 {
            return Err(Error::Dimension(format!("PCA needs at least 2 samples, got {n}")));
        }
        if d == 0 || d > dim {
            return Err(Error::Dimension(format!("target dimension {d} not in 1..={dim}")));
        }
        crate::coeffs::check_finite(x).map_err(|e| Error::Domain(e.to_string()))?;

        let (xc, mean) = if centered {
            let m = column_means(x);
            (center_rows(x, &m), Some(m))
        } else {
            (x.clone(), None)
        };
        let c = xc.transpose() * &xc;
        let (mut eigenvalues, vectors) = sym_eigen_desc(c);
        let top = eigenvalues[0].max(0.0);
        for l in eigenvalues.iter_mut() {
            if *l < EIGEN_CLAMP * top {
                *l = 0.0;
            }
        }

        let mut forward = DMatrix::zeros(d, dim);
        let mut inverse = DMatrix::zeros(dim, d);
        for k in 0..d {
            // zero eigenvalues keep a unit scale so F stays invertible on its row space
            let s = if eigenvalues[k] > 0.0 { eigenvalues[k].sqrt() } else { 1.0 };
            let e = vectors.column(k);
            forward.set_row(k, &(e.transpose() * s));
            inverse.set_column(k, &(e / s));
        }
        Ok(PcaBasis {
            eigenvalues,
            forward,
            inverse,
            mean,
        })
    }

    /// Row i of the result is `F (x_i - mean)`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim_full() {
            return Err(Error::Dimension(format!(
                "PCA basis expects {} columns, got {}",
                self.dim_full(),
                x.ncols()
            )));
        }
        let xc = match &self.mean {
            Some(m) => center_rows(x, m),
            None => x.clone(),
        };
        Ok(xc * self.forward.transpose())
    }

    /// Minimum-norm least-squares preimage `F^+ y_i (+ mean)`.
    pub fn reconstruct(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.dim_reduced() {
            return Err(Error::Dimension(format!(
                "PCA basis expects {} coefficients, got {}",
                self.dim_reduced(),
                y.ncols()
            )));
        }
        let mut out = y * self.inverse.transpose();
        if let Some(m) = &self.mean {
            for mut row in out.row_iter_mut() {
                row += m.transpose();
            }
        }
        Ok(out)
    }
}
