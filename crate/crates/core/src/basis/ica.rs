use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{center_rows, column_means, fix_sign, inv_sqrt_spd, sym_eigen_desc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// G(u) = log cosh(u), g(u) = tanh(u)
    LogCosh,
    /// G(u) = u^4 / 4, g(u) = u^3
    Cube,
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logcosh" => Ok(Nonlinearity::LogCosh),
            "cube" => Ok(Nonlinearity::Cube),
            other => Err(Error::Config(format!("unknown ICA contrast `{other}`"))),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::LogCosh => "logcosh",
            Nonlinearity::Cube => "cube",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub nonlinearity: Nonlinearity,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        IcaOptions {
            nonlinearity: Nonlinearity::LogCosh,
            tolerance: 1e-4,
            max_iterations: 200,
            seed: 0,
        }
    }
}

/// Symmetric FastICA basis: `s = unmixing * whitening * (x - mean)` and
/// `x = mean + mixing * s`.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaBasis {
    /// d x D PCA whitening.
    pub whitening: DMatrix<f64>,
    /// d x d, orthonormal rows.
    pub unmixing: DMatrix<f64>,
    /// D x d reconstruction operator.
    pub mixing: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl IcaBasis {
    pub fn dim_full(&self) -> usize {
        self.whitening.ncols()
    }

    pub fn dim_reduced(&self) -> usize {
        self.unmixing.nrows()
    }

    /// Fit on an N x D data matrix. Non-convergence is not an error; check
    /// [`IcaBasis::converged`].
    pub fn fit(x: &DMatrix<f64>, d: usize, opts: &IcaOptions) -> Result<Self> {
        let (n, dim) = x.shape();
        if !(opts.tolerance > 0.0) || opts.max_iterations == 0 {
            return Err(Error::Config(format!("invalid ICA options {opts:?}")));
        }
        if d == 0 || d > dim {
            return Err(Error::Dimension(format!("target dimension {d} not in 1..={dim}")));
        }
        if n <= d {
            return Err(Error::Dimension(format!("FastICA needs more than {d} samples, got {n}")));
        }
        crate::coeffs::check_finite(x).map_err(|e| Error::Domain(e.to_string()))?;

        let mean = column_means(x);
        let xc = center_rows(x, &mean);
        let cov = (xc.transpose() * &xc) / n as f64;
        let (vals, vecs) = sym_eigen_desc(cov);
        let top = vals[0].max(0.0);
        let rank = vals.iter().take_while(|&&l| l > 1e-10 * top && l > 0.0).count();
        if rank < d {
            return Err(Error::Rank { requested: d, available: rank });
        }

        let e_d = vecs.columns(0, d).into_owned();
        let sqrt_l = DVector::from_iterator(d, vals[..d].iter().map(|l| l.sqrt()));
        let mut whitening = e_d.transpose();
        for (k, s) in sqrt_l.iter().enumerate() {
            whitening.row_mut(k).scale_mut(1.0 / s);
        }
        // d x N whitened data
        let z = &whitening * xc.transpose();

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let w0 = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let mut w = decorrelate(&w0)?;

        let mut converged = false;
        let mut iterations_used = 0;
        let inv_n = 1.0 / n as f64;
        for it in 1..=opts.max_iterations {
            iterations_used = it;
            let mut g = &w * &z;
            let mut gprime_mean = DVector::<f64>::zeros(d);
            // column-major: walk each sample's column contiguously
            for mut col in g.column_iter_mut() {
                for (r, u) in col.iter_mut().enumerate() {
                    let (gu, dgu) = match opts.nonlinearity {
                        Nonlinearity::LogCosh => {
                            let t = u.tanh();
                            (t, 1.0 - t * t)
                        }
                        Nonlinearity::Cube => (*u * *u * *u, 3.0 * *u * *u),
                    };
                    *u = gu;
                    gprime_mean[r] += dgu;
                }
            }
            gprime_mean *= inv_n;
            let mut w_new = (&g * z.transpose()) * inv_n;
            for r in 0..d {
                let scaled = w.row(r) * gprime_mean[r];
                let mut row = w_new.row_mut(r);
                row -= scaled;
            }
            let w_new = decorrelate(&w_new)?;
            let lim = (0..d)
                .map(|r| (1.0 - w_new.row(r).dot(&w.row(r)).abs()).abs())
                .fold(0.0, f64::max);
            w = w_new;
            if lim < opts.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("FastICA did not converge in {} iterations", opts.max_iterations);
        }

        // mixing = E_d diag(sqrt(lambda)) W^T; sign-fix each column and the
        // matching unmixing row together
        let mut scaled_e = e_d;
        for (k, s) in sqrt_l.iter().enumerate() {
            scaled_e.column_mut(k).scale_mut(*s);
        }
        let mut mixing = scaled_e * w.transpose();
        for k in 0..d {
            let mut col = mixing.column(k).into_owned();
            if fix_sign(&mut col) {
                mixing.set_column(k, &col);
                w.row_mut(k).neg_mut();
            }
        }

        Ok(IcaBasis {
            whitening,
            unmixing: w,
            mixing,
            mean,
            iterations_used,
            converged,
        })
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim_full() {
            return Err(Error::Dimension(format!(
                "ICA basis expects {} columns, got {}",
                self.dim_full(),
                x.ncols()
            )));
        }
        let op = &self.unmixing * &self.whitening;
        Ok(center_rows(x, &self.mean) * op.transpose())
    }

    pub fn inverse(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.dim_reduced() {
            return Err(Error::Dimension(format!(
                "ICA basis expects {} coefficients, got {}",
                self.dim_reduced(),
                y.ncols()
            )));
        }
        let mut out = y * self.mixing.transpose();
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(out)
    }
}

/// `(W W^T)^{-1/2} W`
fn decorrelate(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = inv_sqrt_spd(&(w * w.transpose()))
        .ok_or_else(|| Error::Numerical("FastICA: singular unmixing matrix during decorrelation".into()))?;
    Ok(s * w)
}
