use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ingest::DatasetTensor;
use crate::linalg::sym_eigen_desc;

/// Gram eigenvalues below this fraction of the largest count as zero.
const GRAM_CLAMP: f64 = 1e-12;

/// Tucker factors of an N x H x W dataset tensor. Per-image coefficients
/// use only the spatial factors: `G_i = U_row^T X_i U_col`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerBasis {
    /// (N, H, W) of the tensor the factors were fit on.
    pub dims: (usize, usize, usize),
    pub ranks: (usize, usize, usize),
    /// N x r1 sample-mode factor, when computed.
    pub factor_sample: Option<DMatrix<f64>>,
    /// H x r2
    pub factor_row: DMatrix<f64>,
    /// W x r3
    pub factor_col: DMatrix<f64>,
}

/// Factors plus the core tensor, stored as `r1` (or N) slices of r2 x r3.
#[derive(Debug, Clone)]
pub struct Hosvd {
    pub basis: TuckerBasis,
    pub core: Vec<DMatrix<f64>>,
}

impl TuckerBasis {
    pub fn mode1_used(&self) -> bool {
        self.factor_sample.is_some()
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.dims.1, self.dims.2)
    }

    pub fn coeff_len(&self) -> usize {
        self.ranks.1 * self.ranks.2
    }

    /// `U_row^T X U_col`, vectorized row-major.
    pub fn project(&self, image: &DMatrix<f64>) -> Result<Vec<f64>> {
        if image.shape() != self.image_dims() {
            return Err(Error::Dimension(format!(
                "Tucker basis expects {:?} images, got {:?}",
                self.image_dims(),
                image.shape()
            )));
        }
        let g = self.factor_row.transpose() * image * &self.factor_col;
        Ok(row_major(&g))
    }

    /// `U_row G U_col^T`
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<DMatrix<f64>> {
        if coeffs.len() != self.coeff_len() {
            return Err(Error::Dimension(format!(
                "Tucker basis expects {} coefficients, got {}",
                self.coeff_len(),
                coeffs.len()
            )));
        }
        let g = DMatrix::from_row_slice(self.ranks.1, self.ranks.2, coeffs);
        Ok(&self.factor_row * g * self.factor_col.transpose())
    }

    /// Project every row of an N x (H*W) matrix of flattened images.
    pub fn project_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (h, w) = self.image_dims();
        if x.ncols() != h * w {
            return Err(Error::Dimension(format!("Tucker basis expects {} columns, got {}", h * w, x.ncols())));
        }
        let mut out = DMatrix::zeros(x.nrows(), self.coeff_len());
        for i in 0..x.nrows() {
            let img = DMatrix::from_row_slice(h, w, x.row(i).transpose().as_slice());
            let g = self.project(&img)?;
            out.row_mut(i).copy_from_slice(&g);
        }
        Ok(out)
    }

    pub fn reconstruct_rows(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (h, w) = self.image_dims();
        let mut out = DMatrix::zeros(y.nrows(), h * w);
        for i in 0..y.nrows() {
            let coeffs: Vec<f64> = y.row(i).iter().copied().collect();
            let img = self.reconstruct(&coeffs)?;
            out.row_mut(i).copy_from_slice(&row_major(&img));
        }
        Ok(out)
    }
}

impl Hosvd {
    /// `core x1 U1 x2 U2 x3 U3` (U1 = identity when the sample factor was skipped).
    pub fn reconstruct_tensor(&self) -> Vec<DMatrix<f64>> {
        let b = &self.basis;
        let n = b.dims.0;
        (0..n)
            .map(|i| {
                let g = match &b.factor_sample {
                    Some(u1) => self
                        .core
                        .iter()
                        .enumerate()
                        .fold(DMatrix::zeros(b.ranks.1, b.ranks.2), |acc, (j, c)| acc + c * u1[(i, j)]),
                    None => self.core[i].clone(),
                };
                &b.factor_row * g * b.factor_col.transpose()
            })
            .collect()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Leading `r` eigenvectors of a Gram matrix.
fn leading_gram_vectors(gram: DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (_, vecs) = sym_eigen_desc(gram);
    vecs.columns(0, r).into_owned()
}

/// Extend orthonormal columns `q` to `r` columns, each time adding the
/// standard-basis direction with the largest residual off the current span.
fn complete_orthonormal(q: DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let n = q.nrows();
    let mut cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    while cols.len() < r.min(n) {
        let mut best: Option<DVector<f64>> = None;
        for j in 0..n {
            let mut v = DVector::zeros(n);
            v[j] = 1.0;
            for _ in 0..2 {
                for c in &cols {
                    let p = c.dot(&v);
                    v.axpy(-p, c, 1.0);
                }
            }
            if best.as_ref().is_none_or(|b| v.norm() > b.norm()) {
                best = Some(v);
            }
        }
        let v = best.expect("n > 0");
        let nrm = v.norm();
        cols.push(v / nrm);
    }
    DMatrix::from_columns(&cols)
}

/// Leading left singular vectors of the mode-1 unfolding (one image per
/// row). Uses the N x N Gram when N <= H*W, otherwise the H*W x H*W
/// cross-Gram and maps the right singular vectors back.
fn sample_factor(unfold: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (n, p) = unfold.shape();
    if n <= p {
        return leading_gram_vectors(unfold * unfold.transpose(), r);
    }
    let (vals, vecs) = sym_eigen_desc(unfold.transpose() * unfold);
    let top = vals[0].max(0.0);
    let mut cols = Vec::new();
    for k in 0..r.min(p) {
        if vals[k] <= GRAM_CLAMP * top || vals[k] <= 0.0 {
            break;
        }
        let mut u = unfold * vecs.column(k) / vals[k].sqrt();
        u /= u.norm();
        cols.push(u);
    }
    let q = if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) };
    complete_orthonormal(q, r)
}

/// Truncated higher-order SVD of the dataset viewed as an N x H x W tensor.
/// With `with_sample_factor = false` the sample-mode factor is skipped and
/// the core keeps one r2 x r3 slice per image.
pub fn hosvd(data: &DatasetTensor, ranks: (usize, usize, usize), with_sample_factor: bool) -> Result<Hosvd> {
    let (n, h, w) = (data.n(), data.height(), data.width());
    let (r1, r2, r3) = ranks;
    if r2 == 0 || r2 > h || r3 == 0 || r3 > w || (with_sample_factor && (r1 == 0 || r1 > n)) {
        return Err(Error::Dimension(format!("ranks {ranks:?} invalid for a {n}x{h}x{w} tensor")));
    }
    if n == 0 {
        return Err(Error::Dimension("empty dataset".into()));
    }
    let images: Vec<DMatrix<f64>> = (0..n).map(|i| data.image_matrix(i)).collect();

    let mut gram_row = DMatrix::zeros(h, h);
    let mut gram_col = DMatrix::zeros(w, w);
    for x in &images {
        gram_row += x * x.transpose();
        gram_col += x.transpose() * x;
    }
    let factor_row = leading_gram_vectors(gram_row, r2);
    let factor_col = leading_gram_vectors(gram_col, r3);

    let slices: Vec<DMatrix<f64>> = images
        .iter()
        .map(|x| factor_row.transpose() * x * &factor_col)
        .collect();

    let (factor_sample, core, r1) = if with_sample_factor {
        let u1 = sample_factor(&data.to_matrix(), r1);
        let core = (0..r1)
            .map(|j| {
                slices
                    .iter()
                    .enumerate()
                    .fold(DMatrix::zeros(r2, r3), |acc, (i, g)| acc + g * u1[(i, j)])
            })
            .collect();
        (Some(u1), core, r1)
    } else {
        (None, slices, n)
    };

    Ok(Hosvd {
        basis: TuckerBasis {
            dims: (n, h, w),
            ranks: (r1, r2, r3),
            factor_sample,
            factor_row,
            factor_col,
        },
        core,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ValueDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(n: usize, h: usize, w: usize, seed: u64) -> DatasetTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        DatasetTensor::new("r", n, h, w, v, ValueDomain::Raw).unwrap()
    }

    fn rel_err(t: &DatasetTensor, rec: &[DMatrix<f64>]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, r) in rec.iter().enumerate() {
            num += (r - t.image_matrix(i)).norm_squared();
            den += t.image_matrix(i).norm_squared();
        }
        (num / den).sqrt()
    }

    #[test]
    fn factors_orthonormal() {
        let t = random_tensor(20, 9, 7, 1);
        let h = hosvd(&t, (5, 4, 3), true).unwrap();
        for u in [h.basis.factor_sample.as_ref().unwrap(), &h.basis.factor_row, &h.basis.factor_col] {
            let k = u.ncols();
            assert!((u.transpose() * u - DMatrix::identity(k, k)).abs().max() < 1e-8);
        }
    }

    #[test]
    fn project_reconstruct_identities() {
        let t = random_tensor(10, 8, 6, 2);
        let b = hosvd(&t, (0, 5, 4), false).unwrap().basis;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g0: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let img = b.reconstruct(&g0).unwrap();
        let g = b.project(&img).unwrap();
        for (a, e) in g.iter().zip(&g0) {
            assert!((a - e).abs() < 1e-8);
        }
        assert!(b.project(&DMatrix::zeros(8, 6)).unwrap().iter().all(|v| *v == 0.0));
        assert!(b.project(&DMatrix::zeros(6, 8)).is_err());
        assert!(b.reconstruct(&[0.0; 3]).is_err());
    }

    #[test]
    fn full_rank_tall_sample_mode() {
        // N > H*W exercises the cross-Gram path plus completion
        let t = random_tensor(30, 4, 5, 4);
        let h = hosvd(&t, (30, 4, 5), true).unwrap();
        let u1 = h.basis.factor_sample.as_ref().unwrap();
        assert!((u1.transpose() * u1 - DMatrix::identity(30, 30)).abs().max() < 1e-8);
        assert!(rel_err(&t, &h.reconstruct_tensor()) < 1e-8);
    }

    #[test]
    fn rank_sweep_monotone() {
        let t = random_tensor(15, 10, 10, 5);
        let x = t.to_matrix();
        let mut prev = f64::INFINITY;
        for r in 1..=10 {
            let b = hosvd(&t, (0, r, r), false).unwrap().basis;
            let rec = b.reconstruct_rows(&b.project_rows(&x).unwrap()).unwrap();
            let err = (rec - &x).norm();
            assert!(err <= prev + 1e-10);
            prev = err;
        }
        assert!(prev < 1e-8 * x.norm());
    }

    #[test]
    fn invalid_ranks() {
        let t = random_tensor(5, 4, 4, 6);
        assert!(hosvd(&t, (5, 5, 4), true).is_err());
        assert!(hosvd(&t, (6, 4, 4), true).is_err());
        assert!(hosvd(&t, (0, 4, 0), false).is_err());
    }
}
