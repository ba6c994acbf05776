//! Gaussian mixture density estimation by EM, with log-space
//! responsibilities, k-means++ initialization and seeded sampling.
//!
//! The covariance ridge enters as a fixed penalty
//! `-psi/2 * tr(Sigma_k^{-1})` with `psi = reg * N / K`, so the M-step is
//! `Sigma_k = (S_k + psi I) / n_k` (for K = 1 exactly `S / N + reg I`), and
//! the penalized mean log-likelihood recorded in `fit_log` can never
//! decrease between iterations.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coeffio::{read_container, write_container, Container, ContainerKind, Metadata};
use crate::coeffs::CoefficientMatrix;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceType {
    Full,
    Diagonal,
}

impl CovarianceType {
    /// Full covariance only when there are more than ten samples per free
    /// covariance row per component.
    pub fn auto(n: usize, d: usize, k: usize) -> Self {
        if n > 10 * d * k {
            CovarianceType::Full
        } else {
            CovarianceType::Diagonal
        }
    }
}

impl fmt::Display for CovarianceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceType::Full => "full",
            CovarianceType::Diagonal => "diagonal",
        })
    }
}

impl FromStr for CovarianceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CovarianceType::Full),
            "diagonal" | "diag" => Ok(CovarianceType::Diagonal),
            other => Err(Error::Config(format!("unknown covariance type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub k: usize,
    pub covariance_type: CovarianceType,
    /// Covariance ridge; `None` selects `1e-6 * trace(cov) / d` from the data.
    pub reg: Option<f64>,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            k: 1,
            covariance_type: CovarianceType::Full,
            reg: None,
            seed: 0,
            max_iter: 500,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariances {
    Full(Vec<DMatrix<f64>>),
    Diagonal(Vec<DVector<f64>>),
}

#[derive(Debug, Clone)]
enum Factor {
    Full(DMatrix<f64>),
    /// Standard deviations.
    Diagonal(DVector<f64>),
}

#[derive(Debug, Clone)]
struct Component {
    factor: Factor,
    log_det: f64,
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Covariances,
    pub reg: f64,
    /// Penalized mean log-likelihood after initialization and each EM step.
    pub fit_log: Vec<f64>,
    components: Vec<Component>,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.means == other.means
            && self.covariances == other.covariances
            && self.reg == other.reg
            && self.fit_log == other.fit_log
    }
}

impl GmmModel {
    /// Build a model from explicit parameters (covariances used as given).
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covariances: Covariances, reg: f64) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k {
            return Err(Error::Config("mixture needs matching non-empty weights and means".into()));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::Dimension("component means differ in length".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("weights must be a probability vector (sum {total})")));
        }
        let components = match &covariances {
            Covariances::Full(c) if c.len() == k && c.iter().all(|s| s.shape() == (d, d)) => c
                .iter()
                .enumerate()
                .map(|(i, s)| full_component(s, i))
                .collect::<Result<Vec<_>>>()?,
            Covariances::Diagonal(c) if c.len() == k && c.iter().all(|s| s.len() == d) => c
                .iter()
                .enumerate()
                .map(|(i, s)| diag_component(s, i))
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(Error::Dimension("covariances do not match means".into())),
        };
        Ok(GmmModel {
            weights,
            means,
            covariances,
            reg,
            fit_log: Vec::new(),
            components,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn covariance_type(&self) -> CovarianceType {
        match self.covariances {
            Covariances::Full(_) => CovarianceType::Full,
            Covariances::Diagonal(_) => CovarianceType::Diagonal,
        }
    }

    fn component_logpdf(&self, k: usize, x: &[f64]) -> f64 {
        let c = &self.components[k];
        let mu = &self.means[k];
        let d = x.len();
        let maha = match &c.factor {
            Factor::Diagonal(sd) => x
                .iter()
                .zip(mu.iter())
                .zip(sd.iter())
                .map(|((xi, mi), si)| ((xi - mi) / si).powi(2))
                .sum(),
            Factor::Full(l) => {
                let diff = DVector::from_iterator(d, x.iter().zip(mu.iter()).map(|(a, b)| a - b));
                let z = l.solve_lower_triangular(&diff).expect("Cholesky factor has a non-zero diagonal");
                z.norm_squared()
            }
        };
        -0.5 * (d as f64 * LN_2PI + c.log_det + maha)
    }

    /// Per-component `ln pi_k + ln N(x; mu_k, Sigma_k)`.
    fn joint_logs(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.weights[k].ln() + self.component_logpdf(k, x);
        }
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("mixture has dimension {}, point has {}", self.dim(), x.len())));
        }
        let mut buf = vec![0.0; self.k()];
        self.joint_logs(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }

    /// `-ln p(x_i)` for every row, computed in parallel and returned in row order.
    pub fn nll_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!("mixture has dimension {}, data has {}", self.dim(), x.ncols())));
        }
        let rows = row_vectors(x);
        Ok(rows
            .par_iter()
            .map(|r| {
                let mut buf = vec![0.0; self.k()];
                self.joint_logs(r, &mut buf);
                -log_sum_exp(&buf)
            })
            .collect())
    }

    pub fn mean_nll(&self, x: &DMatrix<f64>) -> Result<f64> {
        let nll = self.nll_rows(x)?;
        Ok(nll.iter().sum::<f64>() / nll.len() as f64)
    }

    /// Draw `n` samples: component by weight, then `mu + L z`.
    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        let mut z = DVector::zeros(d);
        for i in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = self.k() - 1;
            for (j, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = j;
                    break;
                }
            }
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = match &self.components[k].factor {
                Factor::Full(l) => &self.means[k] + l * &z,
                Factor::Diagonal(sd) => &self.means[k] + sd.component_mul(&z),
            };
            out.set_row(i, &x.transpose());
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>, extra: &Metadata) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let (k, d) = (self.k(), self.dim());
        let mut md = extra.clone();
        md.insert("content".into(), "gmm".into());
        md.insert("k".into(), k.to_string());
        md.insert("dim".into(), d.to_string());
        md.insert("covariance_type".into(), self.covariance_type().to_string());
        md.insert("reg".into(), format!("{:e}", self.reg));
        write_container(&Container::from_vector(&self.weights, md), dir.join("gmm.hgmc"))?;
        let means = DMatrix::from_fn(k, d, |r, c| self.means[r][c]);
        write_container(&Container::from_matrix(ContainerKind::Matrix, &means, Metadata::new()), dir.join("means.hgmc"))?;
        let cov = match &self.covariances {
            Covariances::Full(c) => DMatrix::from_fn(k * d, d, |r, col| c[r / d][(r % d, col)]),
            Covariances::Diagonal(c) => DMatrix::from_fn(k, d, |r, col| c[r][col]),
        };
        write_container(&Container::from_matrix(ContainerKind::Matrix, &cov, Metadata::new()), dir.join("covariances.hgmc"))?;
        write_container(&Container::from_vector(&self.fit_log, Metadata::new()), dir.join("fit_log.hgmc"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Metadata)> {
        let dir = dir.as_ref();
        let hp = dir.join("gmm.hgmc");
        let header = read_container(&hp)?;
        let k: usize = header.require_parsed("k", &hp)?;
        let d: usize = header.require_parsed("dim", &hp)?;
        let ct: CovarianceType = header.require("covariance_type", &hp)?.parse()?;
        let reg: f64 = header.require_parsed("reg", &hp)?;
        let means_m = read_container(dir.join("means.hgmc"))?.to_matrix();
        let cov_m = read_container(dir.join("covariances.hgmc"))?.to_matrix();
        if means_m.shape() != (k, d) {
            return Err(Error::format(&hp, "means do not match header"));
        }
        let means = (0..k).map(|r| means_m.row(r).transpose()).collect();
        let covariances = match ct {
            CovarianceType::Full => Covariances::Full((0..k).map(|i| cov_m.rows(i * d, d).into_owned()).collect()),
            CovarianceType::Diagonal => Covariances::Diagonal((0..k).map(|i| cov_m.row(i).transpose()).collect()),
        };
        let mut model = GmmModel::new(header.payload.clone(), means, covariances, reg)?;
        model.fit_log = read_container(dir.join("fit_log.hgmc"))?.payload;
        Ok((model, header.metadata))
    }
}

fn full_component(s: &DMatrix<f64>, index: usize) -> Result<Component> {
    let chol = Cholesky::<f64, Dyn>::new(s.clone())
        .ok_or_else(|| Error::Numerical(format!("covariance of component {index} is not positive definite")))?;
    let l = chol.l();
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::Numerical(format!("covariance of component {index} is singular")));
    }
    Ok(Component { factor: Factor::Full(l), log_det })
}

fn diag_component(s: &DVector<f64>, index: usize) -> Result<Component> {
    if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Numerical(format!("variance of component {index} collapsed")));
    }
    Ok(Component {
        factor: Factor::Diagonal(s.map(f64::sqrt)),
        log_det: s.iter().map(|v| v.ln()).sum(),
    })
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn row_vectors(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Default ridge: `1e-6 * trace(cov) / d` of the population covariance.
pub fn default_reg(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows() as f64;
    let mean_var = x
        .column_iter()
        .map(|c| {
            let m = c.sum() / n;
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        })
        .sum::<f64>()
        / x.ncols() as f64;
    if mean_var > 0.0 {
        1e-6 * mean_var
    } else {
        1e-6
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// k-means++ seeding plus a few Lloyd rounds; returns hard labels.
fn kmeans_labels(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = rows.len();
    let mut centers: Vec<Vec<f64>> = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[next].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &centers[centers.len() - 1]));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..20 {
        let new: Vec<usize> = rows
            .par_iter()
            .map(|r| {
                let mut best = (f64::INFINITY, 0);
                for (j, c) in centers.iter().enumerate() {
                    let dd = sq_dist(r, c);
                    if dd < best.0 {
                        best = (dd, j);
                    }
                }
                best.1
            })
            .collect();
        let changed = new != labels;
        labels = new;
        let d = rows[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

struct Fit<'a> {
    x: &'a DMatrix<f64>,
    rows: Vec<Vec<f64>>,
    k: usize,
    cov_type: CovarianceType,
    psi: f64,
}

impl Fit<'_> {
    /// M-step from an N x K responsibility matrix.
    fn m_step(&self, resp: &DMatrix<f64>, reg: f64) -> Result<GmmModel> {
        let (n, d) = self.x.shape();
        let mut weights = Vec::with_capacity(self.k);
        let mut means = Vec::with_capacity(self.k);
        let mut full = Vec::new();
        let mut diag = Vec::new();
        for j in 0..self.k {
            let r = resp.column(j);
            let mass: f64 = r.sum();
            if !mass.is_finite() {
                return Err(Error::Numerical(format!("responsibilities of component {j} are not finite")));
            }
            if mass < 1e-10 {
                log::warn!("mixture component {j} has vanishing responsibility {mass:e}");
            }
            // a component that loses every point keeps a tiny weight instead of dividing by zero
            let nk = mass + 10.0 * f64::EPSILON;
            let mu = self.x.transpose() * r / nk;
            let mut centered = self.x.clone();
            for (i, mut row) in centered.row_iter_mut().enumerate() {
                let s = r[i].sqrt();
                for (v, m) in row.iter_mut().zip(mu.iter()) {
                    *v = (*v - m) * s;
                }
            }
            match self.cov_type {
                CovarianceType::Full => {
                    let mut s = centered.transpose() * &centered;
                    for t in 0..d {
                        s[(t, t)] += self.psi;
                    }
                    s /= nk;
                    // exact symmetry for the Cholesky
                    s = (&s + s.transpose()) * 0.5;
                    full.push(s);
                }
                CovarianceType::Diagonal => {
                    let v = DVector::from_iterator(
                        d,
                        centered.column_iter().map(|c| (c.norm_squared() + self.psi) / nk),
                    );
                    diag.push(v);
                }
            }
            weights.push(nk / n as f64);
            means.push(mu);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let cov = match self.cov_type {
            CovarianceType::Full => Covariances::Full(full),
            CovarianceType::Diagonal => Covariances::Diagonal(diag),
        };
        GmmModel::new(weights, means, cov, reg)
    }

    /// Responsibilities and penalized mean log-likelihood of `model`.
    fn e_step(&self, model: &GmmModel) -> (DMatrix<f64>, f64) {
        let k = self.k;
        let per_row: Vec<(Vec<f64>, f64)> = self
            .rows
            .par_iter()
            .map(|r| {
                let mut buf = vec![0.0; k];
                model.joint_logs(r, &mut buf);
                let lse = log_sum_exp(&buf);
                buf.iter_mut().for_each(|v| *v = (*v - lse).exp());
                (buf, lse)
            })
            .collect();
        let n = self.rows.len();
        let mut resp = DMatrix::zeros(n, k);
        let mut ll = 0.0;
        for (i, (r, lse)) in per_row.iter().enumerate() {
            for j in 0..k {
                resp[(i, j)] = r[j];
            }
            ll += lse;
        }
        let penalty: f64 = match &model.covariances {
            Covariances::Full(c) => c
                .iter()
                .map(|s| s.clone().cholesky().map(|ch| ch.inverse().trace()).unwrap_or(f64::INFINITY))
                .sum(),
            Covariances::Diagonal(c) => c.iter().map(|v| v.iter().map(|x| 1.0 / x).sum::<f64>()).sum(),
        };
        (resp, (ll - 0.5 * self.psi * penalty) / n as f64)
    }
}

/// Fit a mixture by EM. Deterministic for a given seed.
pub fn fit_em(x: &DMatrix<f64>, cfg: &GmmConfig) -> Result<GmmModel> {
    let (n, d) = x.shape();
    if cfg.k == 0 || n <= cfg.k {
        return Err(Error::Config(format!("EM needs more samples ({n}) than components ({})", cfg.k)));
    }
    if d == 0 {
        return Err(Error::Dimension("zero-dimensional data".into()));
    }
    crate::coeffs::check_finite(x)?;
    let reg = cfg.reg.unwrap_or_else(|| default_reg(x));
    if !(reg >= 0.0) {
        return Err(Error::Config(format!("negative covariance ridge {reg}")));
    }
    let fit = Fit {
        x,
        rows: row_vectors(x),
        k: cfg.k,
        cov_type: cfg.covariance_type,
        psi: reg * n as f64 / cfg.k as f64,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = if cfg.k == 1 { vec![0; n] } else { kmeans_labels(&fit.rows, cfg.k, &mut rng) };
    let mut resp = DMatrix::zeros(n, cfg.k);
    for (i, &l) in labels.iter().enumerate() {
        resp[(i, l)] = 1.0;
    }
    let mut model = fit.m_step(&resp, reg)?;
    let (mut resp, mut prev) = fit.e_step(&model);
    let mut log = vec![prev];
    for _ in 0..cfg.max_iter {
        let next = fit.m_step(&resp, reg)?;
        let (r, obj) = fit.e_step(&next);
        model = next;
        resp = r;
        log.push(obj);
        if obj - prev < cfg.tol {
            break;
        }
        prev = obj;
    }
    model.fit_log = log;
    Ok(model)
}

/// Convenience wrapper over a coefficient matrix.
pub fn fit_coefficients(c: &CoefficientMatrix, cfg: &GmmConfig) -> Result<GmmModel> {
    fit_em(c.values(), cfg)
}
