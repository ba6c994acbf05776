//! Isotropic Gaussian kernel density estimation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Scott,
    Silverman,
    Fixed(f64),
}

impl BandwidthRule {
    /// Bandwidth for `n` samples in `d` dimensions with mean per-dimension std `sigma`.
    pub fn bandwidth(&self, n: usize, d: usize, sigma: f64) -> f64 {
        let (n, d) = (n as f64, d as f64);
        match *self {
            BandwidthRule::Scott => sigma * n.powf(-1.0 / (d + 4.0)),
            BandwidthRule::Silverman => sigma * (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0)),
            BandwidthRule::Fixed(h) => h,
        }
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthRule::Scott => f.write_str("scott"),
            BandwidthRule::Silverman => f.write_str("silverman"),
            BandwidthRule::Fixed(h) => write!(f, "fixed:{h}"),
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scott" => Ok(BandwidthRule::Scott),
            "silverman" => Ok(BandwidthRule::Silverman),
            other => other
                .strip_prefix("fixed:")
                .and_then(|h| h.parse().ok())
                .map(BandwidthRule::Fixed)
                .ok_or_else(|| Error::Config(format!("unknown bandwidth rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    support: Vec<Vec<f64>>,
    dim: usize,
    pub bandwidth: f64,
    pub bandwidth_rule: BandwidthRule,
}

/// Mean over dimensions of the population standard deviation.
fn mean_std(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let m = c.sum() / n;
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .sum::<f64>()
        / x.ncols() as f64
}

impl KdeModel {
    /// Fit on N x d reference samples.
    pub fn fit(x: &DMatrix<f64>, rule: BandwidthRule) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 || d == 0 {
            return Err(Error::Config(format!("KDE needs at least 2 samples of dimension >= 1, got {n}x{d}")));
        }
        crate::coeffs::check_finite(x)?;
        let sigma = mean_std(x);
        if !matches!(rule, BandwidthRule::Fixed(_)) && !(sigma > 0.0) {
            return Err(Error::Degenerate("KDE support has zero variance".into()));
        }
        let bandwidth = rule.bandwidth(n, d, sigma);
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Config(format!("KDE bandwidth must be positive, got {bandwidth}")));
        }
        Ok(KdeModel {
            support: (0..n).map(|i| x.row(i).iter().copied().collect()).collect(),
            dim: d,
            bandwidth,
            bandwidth_rule: rule,
        })
    }

    pub fn fit_1d(values: &[f64], rule: BandwidthRule) -> Result<Self> {
        Self::fit(&DMatrix::from_column_slice(values.len(), 1, values), rule)
    }

    pub fn n(&self) -> usize {
        self.support.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn log_norm(&self, count: usize) -> f64 {
        -(count as f64).ln() - 0.5 * self.dim as f64 * (LN_2PI + 2.0 * self.bandwidth.ln())
    }

    /// Log-density, optionally skipping support point `skip`.
    fn eval(&self, x: &[f64], skip: Option<usize>) -> f64 {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let terms: Vec<f64> = self
            .support
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, s)| -s.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * inv)
            .collect();
        log_sum_exp(&terms) + self.log_norm(terms.len())
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!("KDE has dimension {}, point has {}", self.dim, x.len())));
        }
        Ok(self.eval(x, None))
    }

    /// `-ln p(x_i)` per row. With `leave_one_out`, row `i` is assumed to be
    /// support point `i` and is excluded from its own kernel sum.
    pub fn nll_rows(&self, x: &DMatrix<f64>, leave_one_out: bool) -> Result<Vec<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::Dimension(format!("KDE has dimension {}, data has {}", self.dim, x.ncols())));
        }
        if leave_one_out && x.nrows() != self.n() {
            return Err(Error::Dimension("leave-one-out evaluation needs the support set itself".into()));
        }
        let rows: Vec<Vec<f64>> = (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect();
        Ok(rows
            .par_iter()
            .enumerate()
            .map(|(i, r)| -self.eval(r, leave_one_out.then_some(i)))
            .collect())
    }

    pub fn mean_nll(&self, x: &DMatrix<f64>, leave_one_out: bool) -> Result<f64> {
        let v = self.nll_rows(x, leave_one_out)?;
        if v.is_empty() {
            return Err(Error::Config("mean NLL of an empty set".into()));
        }
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Density of a 1-d model on a grid.
    pub fn density_on(&self, grid: &[f64]) -> Vec<f64> {
        grid.par_iter().map(|g| self.eval(&[*g], None).exp()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn silverman_constant() {
        let v = normal_sample(1000, 1);
        let k = KdeModel::fit_1d(&v, BandwidthRule::Silverman).unwrap();
        let m = v.iter().sum::<f64>() / 1000.0;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 1000.0).sqrt();
        let factor = (4.0f64 / 3000.0).powf(0.2);
        assert!((factor - 0.2661).abs() < 1e-4);
        assert!((k.bandwidth - factor * sd).abs() < 1e-12);
        let scott = KdeModel::fit_1d(&v, BandwidthRule::Scott).unwrap();
        assert!((scott.bandwidth - sd * 1000f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn fixed_and_two_points() {
        let k = KdeModel::fit_1d(&[1.0, 2.0, 3.0], BandwidthRule::Fixed(0.5)).unwrap();
        assert_eq!(k.bandwidth, 0.5);
        for rule in [BandwidthRule::Scott, BandwidthRule::Silverman] {
            let k = KdeModel::fit_1d(&[0.0, 1.0], rule).unwrap();
            assert!(k.bandwidth > 0.0 && k.bandwidth.is_finite());
        }
        assert!(matches!(KdeModel::fit_1d(&[2.0, 2.0], BandwidthRule::Scott), Err(Error::Degenerate(_))));
        assert!(KdeModel::fit_1d(&[2.0, 2.0], BandwidthRule::Fixed(1.0)).is_ok());
    }

    #[test]
    fn kernel_peak() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let k = KdeModel::fit(&x, BandwidthRule::Fixed(0.7)).unwrap();
        let expect = -1.5 * (2.0 * std::f64::consts::PI * 0.49f64).ln();
        assert!((k.logpdf(&[1.0, 2.0, 3.0]).unwrap() - expect).abs() < 1e-12);
        assert!(k.logpdf(&[1.0]).is_err());
    }

    #[test]
    fn entropy_calibration() {
        let support = normal_sample(10_000, 2);
        let k = KdeModel::fit_1d(&support, BandwidthRule::Silverman).unwrap();
        let q = normal_sample(10_000, 3);
        let nll = k.mean_nll(&DMatrix::from_column_slice(q.len(), 1, &q), false).unwrap();
        assert!((nll - 1.418_938_533_204_672_7).abs() < 0.05, "{nll}");
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 2.0).unwrap();
        let x = DMatrix::from_fn(60, 2, |_, _| normal.sample(&mut rng));
        let k = KdeModel::fit(&x, BandwidthRule::Scott).unwrap();
        let h = k.bandwidth;
        for q in [[0.0, 0.0], [1.5, -2.0], [4.0, 4.0]] {
            let mut p = 0.0;
            for i in 0..60 {
                let d2 = (x[(i, 0)] - q[0]).powi(2) + (x[(i, 1)] - q[1]).powi(2);
                p += (-d2 / (2.0 * h * h)).exp() / (2.0 * std::f64::consts::PI * h * h);
            }
            p /= 60.0;
            assert!((k.logpdf(&q).unwrap() - p.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn integrates_to_one() {
        let v = [-1.0, 0.3, 0.5, 2.0];
        let k = KdeModel::fit_1d(&v, BandwidthRule::Fixed(0.4)).unwrap();
        let (a, b) = (-1.0 - 10.0 * 0.4, 2.0 + 10.0 * 0.4);
        let m = 20_001;
        let grid: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
        let f = k.density_on(&grid);
        let step = (b - a) / (m - 1) as f64;
        let integral: f64 = f.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        assert!((integral - 1.0).abs() < 1e-4);
    }

    #[test]
    fn far_queries_stay_finite() {
        let k = KdeModel::fit_1d(&[0.0, 1.0, 2.0], BandwidthRule::Fixed(1.0)).unwrap();
        let lp = k.logpdf(&[1e6]).unwrap();
        assert!(lp.is_finite() && lp < -1e11);
    }

    #[test]
    fn leave_one_out_excludes_self() {
        let v = [0.0, 10.0, 20.0];
        let x = DMatrix::from_column_slice(3, 1, &v);
        let k = KdeModel::fit(&x, BandwidthRule::Fixed(1.0)).unwrap();
        let with = k.nll_rows(&x, false).unwrap();
        let without = k.nll_rows(&x, true).unwrap();
        assert!(without.iter().zip(&with).all(|(a, b)| a > b));
        // self-evaluation symmetry of identical sets
        let a = k.mean_nll(&x, false).unwrap();
        let k2 = KdeModel::fit(&x.clone(), BandwidthRule::Fixed(1.0)).unwrap();
        assert_eq!(a, k2.mean_nll(&x, false).unwrap());
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("fixed:0.5".parse::<BandwidthRule>().unwrap(), BandwidthRule::Fixed(0.5));
        assert_eq!(BandwidthRule::Silverman.to_string().parse::<BandwidthRule>().unwrap(), BandwidthRule::Silverman);
        assert!("nope".parse::<BandwidthRule>().is_err());
    }
}
