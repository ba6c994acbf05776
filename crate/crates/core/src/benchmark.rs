//! Likelihood benchmark: a Gaussian mixture over DWT features (DWT-GMM)
//! held out as a reference density, the DWT entropy (DWT-E) of a sample
//! set under it, KDE entropy, and the l1 distance between the KDE curves of
//! real and generated NLL values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::basis::PcaBasis;
use crate::coeffio::Metadata;
use crate::error::{Error, Result};
use crate::gmm::{fit_em, CovarianceType, GmmConfig, GmmModel};
use crate::ingest::{DatasetTensor, ValueDomain};
use crate::kde::{BandwidthRule, KdeModel};
use crate::wavelet::{dwt_features, feature_len};

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub k: usize,
    /// `None` picks full or diagonal from the sample count.
    pub covariance_type: Option<CovarianceType>,
    pub reg: Option<f64>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            k: 10,
            covariance_type: None,
            reg: None,
            seed: 0,
            max_iter: 500,
            tol: 1e-5,
        }
    }
}

/// DWT-GMM reference density. It scores sample sets and is never sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub gmm: GmmModel,
    pub height: usize,
    pub width: usize,
    pub dataset_id: String,
}

impl ReferenceModel {
    pub fn feature_dim(&self) -> usize {
        self.gmm.dim()
    }

    pub fn save(&self, dir: impl AsRef<Path>, extra: &Metadata) -> Result<()> {
        let mut md = extra.clone();
        md.insert("role".into(), "reference".into());
        md.insert("features".into(), "dwt-bior1.3:ll,lh,hl".into());
        md.insert("height".into(), self.height.to_string());
        md.insert("width".into(), self.width.to_string());
        md.insert("dataset_id".into(), self.dataset_id.clone());
        self.gmm.save(dir, &md)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Metadata)> {
        let dir = dir.as_ref();
        let (gmm, md) = GmmModel::load(dir)?;
        let hp = dir.join("gmm.hgmc");
        if md.get("role").map(String::as_str) != Some("reference") {
            return Err(Error::format(&hp, "not a DWT reference model"));
        }
        let get = |k: &str| md.get(k).ok_or_else(|| Error::format(&hp, format!("missing metadata key `{k}`")));
        let height: usize = get("height")?.parse().map_err(|_| Error::format(&hp, "bad height"))?;
        let width: usize = get("width")?.parse().map_err(|_| Error::format(&hp, "bad width"))?;
        if feature_len(height, width) != gmm.dim() {
            return Err(Error::format(&hp, "feature dimension does not match image size"));
        }
        let model = ReferenceModel {
            gmm,
            height,
            width,
            dataset_id: get("dataset_id")?.clone(),
        };
        Ok((model, md))
    }
}

pub fn build_reference(data: &DatasetTensor, cfg: &ReferenceConfig) -> Result<ReferenceModel> {
    let feats = dwt_features(data)?;
    let (n, d) = (feats.n(), feats.d());
    let covariance_type = cfg.covariance_type.unwrap_or_else(|| {
        let ct = CovarianceType::auto(n, d, cfg.k);
        log::info!("reference covariance type {ct} for N={n}, d={d}, K={}", cfg.k);
        ct
    });
    let gmm = fit_em(
        feats.values(),
        &GmmConfig {
            k: cfg.k,
            covariance_type,
            reg: cfg.reg,
            seed: cfg.seed,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
        },
    )?;
    Ok(ReferenceModel {
        gmm,
        height: data.height(),
        width: data.width(),
        dataset_id: data.id.clone(),
    })
}

/// Mean and per-image NLL of `images` under the reference.
pub fn dwt_entropy(reference: &ReferenceModel, images: &DatasetTensor) -> Result<(f64, Vec<f64>)> {
    if images.n() == 0 {
        return Err(Error::Config("DWT entropy of an empty image set".into()));
    }
    if (images.height(), images.width()) != (reference.height, reference.width) {
        return Err(Error::Dimension(format!(
            "reference expects {}x{} images, got {}x{}",
            reference.height,
            reference.width,
            images.height(),
            images.width()
        )));
    }
    let feats = dwt_features(images)?;
    let nll = reference.gmm.nll_rows(feats.values())?;
    Ok((nll.iter().sum::<f64>() / nll.len() as f64, nll))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalRule {
    /// Percentiles of the real NLL sample, in percent.
    Percentile(f64, f64),
    Fixed(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllCurveConfig {
    pub interval: IntervalRule,
    pub grid_points: usize,
    pub bandwidth: BandwidthRule,
}

impl Default for NllCurveConfig {
    fn default() -> Self {
        NllCurveConfig {
            interval: IntervalRule::Percentile(1.0, 99.0),
            grid_points: 512,
            bandwidth: BandwidthRule::Silverman,
        }
    }
}

impl NllCurveConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = match self.interval {
            IntervalRule::Percentile(lo, hi) => {
                if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) {
                    return Err(Error::Config(format!("percentiles ({lo}, {hi}) outside [0, 100]")));
                }
                (lo, hi)
            }
            IntervalRule::Fixed(a, b) => (a, b),
        };
        if !(lo < hi) {
            return Err(Error::Config(format!("interval bounds ({lo}, {hi}) not increasing")));
        }
        if self.grid_points < 16 {
            return Err(Error::Config(format!("grid_points {} below 16", self.grid_points)));
        }
        Ok(())
    }

    pub fn snapshot(&self, md: &mut Metadata) {
        let interval = match self.interval {
            IntervalRule::Percentile(a, b) => format!("percentile:{a}:{b}"),
            IntervalRule::Fixed(a, b) => format!("fixed:{a}:{b}"),
        };
        md.insert("curve.interval".into(), interval);
        md.insert("curve.grid_points".into(), self.grid_points.to_string());
        md.insert("curve.bandwidth".into(), self.bandwidth.to_string());
    }
}

/// Linear-interpolation percentile of unsorted data, `p` in percent.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[v.len() - 1]
    }
}

/// The two NLL density curves on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurves {
    pub grid: Vec<f64>,
    pub real: Vec<f64>,
    pub generated: Vec<f64>,
}

impl DensityCurves {
    /// Trapezoidal integral of `|f_real - f_generated|`.
    pub fn l1(&self) -> f64 {
        let diff: Vec<f64> = self.real.iter().zip(&self.generated).map(|(a, b)| (a - b).abs()).collect();
        self.grid
            .windows(2)
            .zip(diff.windows(2))
            .map(|(g, f)| 0.5 * (f[0] + f[1]) * (g[1] - g[0]))
            .sum()
    }
}

pub fn density_curves(nll_real: &[f64], nll_gen: &[f64], cfg: &NllCurveConfig) -> Result<DensityCurves> {
    cfg.validate()?;
    if nll_real.len() < 10 || nll_gen.len() < 10 {
        return Err(Error::Config(format!(
            "NLL curves need at least 10 values per side, got {} and {}",
            nll_real.len(),
            nll_gen.len()
        )));
    }
    for (name, v) in [("real", nll_real), ("generated", nll_gen)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("{name} NLL array has non-finite values")));
        }
    }
    let kr = KdeModel::fit_1d(nll_real, cfg.bandwidth)
        .map_err(|_| Error::Degenerate("real NLL array is constant".into()))?;
    let kg = KdeModel::fit_1d(nll_gen, cfg.bandwidth)
        .map_err(|_| Error::Degenerate("generated NLL array is constant".into()))?;
    let (a, b) = match cfg.interval {
        IntervalRule::Percentile(lo, hi) => (percentile(nll_real, lo), percentile(nll_real, hi)),
        IntervalRule::Fixed(a, b) => (a, b),
    };
    if !(a < b) {
        return Err(Error::Degenerate(format!("NLL interval [{a}, {b}] is empty")));
    }
    let m = cfg.grid_points;
    let grid: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
    Ok(DensityCurves {
        real: kr.density_on(&grid),
        generated: kg.density_on(&grid),
        grid,
    })
}

pub fn l1_density_distance(nll_real: &[f64], nll_gen: &[f64], cfg: &NllCurveConfig) -> Result<f64> {
    Ok(density_curves(nll_real, nll_gen, cfg)?.l1())
}

/// KDE reference over flattened images, optionally after a centered PCA
/// reduction.
#[derive(Debug, Clone)]
pub struct KdeReference {
    pub kde: KdeModel,
    pub reduction: Option<PcaBasis>,
}

impl KdeReference {
    pub fn fit(data: &DatasetTensor, rule: BandwidthRule, reduce_to: Option<usize>) -> Result<Self> {
        let x = data.to_matrix();
        let reduction = reduce_to.map(|d| PcaBasis::fit(&x, d, true)).transpose()?;
        let support = match &reduction {
            Some(p) => p.project(&x)?,
            None => x,
        };
        Ok(KdeReference {
            kde: KdeModel::fit(&support, rule)?,
            reduction,
        })
    }

    fn features(&self, data: &DatasetTensor) -> Result<DMatrix<f64>> {
        let x = data.to_matrix();
        match &self.reduction {
            Some(p) => p.project(&x),
            None => Ok(x),
        }
    }

    pub fn mean_nll(&self, data: &DatasetTensor, leave_one_out: bool) -> Result<f64> {
        self.kde.mean_nll(&self.features(data)?, leave_one_out)
    }

    pub fn snapshot(&self, md: &mut Metadata) {
        md.insert("kde.bandwidth_rule".into(), self.kde.bandwidth_rule.to_string());
        md.insert("kde.bandwidth".into(), format!("{:?}", self.kde.bandwidth));
        md.insert(
            "kde.space".into(),
            match &self.reduction {
                Some(p) => format!("pca{}", p.dim_reduced()),
                None => "pixel".into(),
            },
        );
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportLabels {
    pub model_id: String,
    pub basis_id: String,
    /// Provenance and configuration of the producing run.
    pub snapshot: Metadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub model_id: String,
    pub basis_id: String,
    pub dataset_id: String,
    pub dwt_entropy: f64,
    /// DWT-E of the real set itself.
    pub real_dwt_entropy: f64,
    pub kde_entropy: f64,
    /// Leave-one-out KDE-E of the real set.
    pub real_kde_entropy: f64,
    pub l1_distance_raw: f64,
    pub l1_distance_scaled: f64,
    pub nll_real: Vec<f64>,
    pub nll_generated: Vec<f64>,
    pub config: Metadata,
}

pub fn evaluate(
    reference: &ReferenceModel,
    kde_ref: &KdeReference,
    real: &DatasetTensor,
    generated: &DatasetTensor,
    curve: &NllCurveConfig,
    labels: &ReportLabels,
) -> Result<BenchmarkReport> {
    if (real.height(), real.width()) != (generated.height(), generated.width()) {
        return Err(Error::Dimension(format!(
            "real images are {}x{}, generated are {}x{}",
            real.height(),
            real.width(),
            generated.height(),
            generated.width()
        )));
    }
    let (real_dwt_entropy, nll_real) = dwt_entropy(reference, real)?;
    let (dwt_e, nll_generated) = dwt_entropy(reference, generated)?;
    let l1 = l1_density_distance(&nll_real, &nll_generated, curve)?;
    let kde_entropy = kde_ref.mean_nll(generated, false)?;
    let real_kde_entropy = if kde_ref.kde.n() == real.n() {
        kde_ref.mean_nll(real, true)?
    } else {
        kde_ref.mean_nll(real, false)?
    };

    let mut config = labels.snapshot.clone();
    curve.snapshot(&mut config);
    kde_ref.snapshot(&mut config);
    config.insert("reference.k".into(), reference.gmm.k().to_string());
    config.insert("reference.covariance_type".into(), reference.gmm.covariance_type().to_string());
    config.insert("reference.reg".into(), format!("{:?}", reference.gmm.reg));
    config.insert("reference.dataset_id".into(), reference.dataset_id.clone());

    Ok(BenchmarkReport {
        model_id: labels.model_id.clone(),
        basis_id: labels.basis_id.clone(),
        dataset_id: real.id.clone(),
        dwt_entropy: dwt_e,
        real_dwt_entropy,
        kde_entropy,
        real_kde_entropy,
        l1_distance_raw: l1,
        l1_distance_scaled: 100.0 * l1,
        nll_real,
        nll_generated,
        config,
    })
}

impl BenchmarkReport {
    /// Flat `key=value` text; floats use the shortest exact representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("model_id", self.model_id.clone());
        kv("basis_id", self.basis_id.clone());
        kv("dataset_id", self.dataset_id.clone());
        kv("dwt_entropy", format!("{:?}", self.dwt_entropy));
        kv("real_dwt_entropy", format!("{:?}", self.real_dwt_entropy));
        kv("kde_entropy", format!("{:?}", self.kde_entropy));
        kv("real_kde_entropy", format!("{:?}", self.real_kde_entropy));
        kv("l1_distance_raw", format!("{:?}", self.l1_distance_raw));
        kv("l1_distance_scaled", format!("{:?}", self.l1_distance_scaled));
        kv("n_real", self.nll_real.len().to_string());
        kv("n_generated", self.nll_generated.len().to_string());
        for (k, v) in &self.config {
            kv(&format!("config.{k}"), v.clone());
        }
        s
    }

    /// Per-sample NLL values as `set,index,nll` rows.
    pub fn nll_csv(&self) -> String {
        let mut s = String::from("set,index,nll\n");
        for (name, v) in [("real", &self.nll_real), ("generated", &self.nll_generated)] {
            for (i, x) in v.iter().enumerate() {
                let _ = writeln!(s, "{name},{i},{x:?}");
            }
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>, nll_csv: Option<&Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        if let Some(p) = nll_csv {
            fs::write(p, self.nll_csv())?;
        }
        Ok(())
    }
}

/// Add i.i.d. Gaussian noise of standard deviation `sigma` to every value.
/// The result is unclamped, so its domain is `Raw`.
pub fn add_gaussian_noise(data: &DatasetTensor, sigma: f64, seed: u64) -> Result<DatasetTensor> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = data.values().iter().map(|v| v + normal.sample(&mut rng)).collect();
    DatasetTensor::new(format!("{}+noise{sigma}", data.id), data.n(), data.height(), data.width(), values, ValueDomain::Raw)
}

/// Shuffle the pixels of every image independently.
pub fn permute_pixels(data: &DatasetTensor, seed: u64) -> Result<DatasetTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(data.values().len());
    for i in 0..data.n() {
        let mut img = data.image(i).to_vec();
        img.shuffle(&mut rng);
        values.extend(img);
    }
    DatasetTensor::new(format!("{}+permuted", data.id), data.n(), data.height(), data.width(), values, data.domain())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth_garments;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn identical_arrays_have_zero_distance() {
        let v = normals(500, 1);
        assert!(l1_density_distance(&v, &v, &NllCurveConfig::default()).unwrap() < 1e-12);
    }

    #[test]
    fn disjoint_distributions_approach_two() {
        let a = normals(2000, 2);
        let b: Vec<f64> = normals(2000, 3).iter().map(|x| x + 50.0).collect();
        let cfg = NllCurveConfig { interval: IntervalRule::Fixed(-10.0, 60.0), grid_points: 4096, ..Default::default() };
        let d = l1_density_distance(&a, &b, &cfg).unwrap();
        assert!((d - 2.0).abs() < 1e-3, "{d}");
    }

    #[test]
    fn fixed_interval_is_symmetric() {
        let a = normals(300, 4);
        let b: Vec<f64> = normals(300, 5).iter().map(|x| 0.5 * x + 0.3).collect();
        let cfg = NllCurveConfig { interval: IntervalRule::Fixed(-4.0, 4.0), ..Default::default() };
        let ab = l1_density_distance(&a, &b, &cfg).unwrap();
        let ba = l1_density_distance(&b, &a, &cfg).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn curve_errors() {
        let cfg = NllCurveConfig::default();
        let v = normals(50, 6);
        assert!(matches!(l1_density_distance(&[3.0; 20], &v, &cfg), Err(Error::Degenerate(_))));
        assert!(l1_density_distance(&v[..5], &v, &cfg).is_err());
        let bad = NllCurveConfig { grid_points: 8, ..Default::default() };
        assert!(matches!(l1_density_distance(&v, &v, &bad), Err(Error::Config(_))));
        let bad = NllCurveConfig { interval: IntervalRule::Percentile(90.0, 10.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn percentile_matches_linear_interpolation() {
        let v = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert!((percentile(&v, 10.0) - 1.4).abs() < 1e-12);
    }

    fn small_reference() -> (DatasetTensor, ReferenceModel) {
        let g = synth_garments(120, 1).unwrap();
        let r = build_reference(&g, &ReferenceConfig { k: 2, ..Default::default() }).unwrap();
        (g, r)
    }

    #[test]
    fn reference_dimensions_and_determinism() {
        let (g, r) = small_reference();
        assert_eq!(r.feature_dim(), 768);
        assert_eq!(r.gmm.covariance_type(), CovarianceType::Diagonal);
        let again = build_reference(&g, &ReferenceConfig { k: 2, ..Default::default() }).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn entropy_is_order_invariant() {
        let (g, r) = small_reference();
        let (e, nll) = dwt_entropy(&r, &g).unwrap();
        let rev: Vec<f64> = (0..g.n()).rev().flat_map(|i| g.image(i).to_vec()).collect();
        let gr = DatasetTensor::new("rev", g.n(), 28, 28, rev, g.domain()).unwrap();
        let (e2, nll2) = dwt_entropy(&r, &gr).unwrap();
        assert!((e - e2).abs() < 1e-9 * e.abs().max(1.0));
        assert_eq!(nll[0], nll2[g.n() - 1]);
    }

    #[test]
    fn entropy_errors() {
        let (_, r) = small_reference();
        let empty = DatasetTensor::new("e", 0, 28, 28, vec![], ValueDomain::Raw).unwrap();
        assert!(dwt_entropy(&r, &empty).is_err());
        let wrong = DatasetTensor::new("w", 1, 32, 32, vec![0.0; 1024], ValueDomain::Raw).unwrap();
        assert!(matches!(dwt_entropy(&r, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn self_evaluation_and_report_format() {
        let (g, r) = small_reference();
        let kde = KdeReference::fit(&g, BandwidthRule::Scott, Some(10)).unwrap();
        let rep = evaluate(&r, &kde, &g, &g, &NllCurveConfig::default(), &ReportLabels::default()).unwrap();
        assert_eq!(rep.dwt_entropy, rep.real_dwt_entropy);
        assert!(rep.l1_distance_raw < 1e-12);
        assert_eq!(rep.l1_distance_scaled, 100.0 * rep.l1_distance_raw);
        let text = rep.to_text();
        assert!(text.starts_with("model_id=\n"));
        assert!(text.contains("config.curve.interval=percentile:1:99\n"));
        assert!(text.contains("config.kde.space=pca10\n"));
        assert!(rep.nll_csv().lines().count() == 1 + 2 * g.n());
    }

    #[test]
    fn corruptions_preserve_shape() {
        let g = synth_garments(5, 2).unwrap();
        let p = permute_pixels(&g, 1).unwrap();
        for i in 0..5 {
            let mut a = g.image(i).to_vec();
            let mut b = p.image(i).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
        let n = add_gaussian_noise(&g, 0.1, 1).unwrap();
        assert_eq!(n.values().len(), g.values().len());
        assert_ne!(n.values(), g.values());
    }

    #[test]
    fn save_load_reference() {
        let (_, r) = small_reference();
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path(), &Metadata::new()).unwrap();
        let (back, md) = ReferenceModel::load(dir.path()).unwrap();
        assert_eq!(back, r);
        assert_eq!(md["role"], "reference");
    }
}
