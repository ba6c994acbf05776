//! Dataset loading, the preprocessing maps applied before projection, and
//! two synthetic dataset generators used when real data is unavailable.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::coeffio::{self, Container, ContainerKind, Metadata};
use crate::error::{Error, Result};

/// Big-endian IDX magic for an unsigned-byte rank-3 tensor.
pub const IDX_U8_RANK3: u32 = 0x0000_0803;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueDomain {
    UnitInterval,
    LogitSpace,
    ZScored,
    Raw,
}

impl fmt::Display for ValueDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueDomain::UnitInterval => "unit",
            ValueDomain::LogitSpace => "logit",
            ValueDomain::ZScored => "zscored",
            ValueDomain::Raw => "raw",
        })
    }
}

impl FromStr for ValueDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(ValueDomain::UnitInterval),
            "logit" => Ok(ValueDomain::LogitSpace),
            "zscored" => Ok(ValueDomain::ZScored),
            "raw" => Ok(ValueDomain::Raw),
            other => Err(Error::Config(format!("unknown value domain `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageStats {
    pub mean: f64,
    pub std: f64,
}

/// N stacked H x W images, row-major, image after image.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTensor {
    pub id: String,
    n: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
    per_image_stats: Option<Vec<ImageStats>>,
    domain: ValueDomain,
}

impl DatasetTensor {
    pub fn new(
        id: impl Into<String>,
        n: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
        domain: ValueDomain,
    ) -> Result<Self> {
        if values.len() != n * height * width {
            return Err(Error::Dimension(format!(
                "{} values for {n} images of {height}x{width}",
                values.len()
            )));
        }
        let area = height * width;
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i / area.max(1), col: i % area.max(1) });
            }
            if domain == ValueDomain::UnitInterval && !(0.0..=1.0).contains(v) {
                return Err(Error::Domain(format!(
                    "value {v} of image {} outside [0,1]",
                    i / area.max(1)
                )));
            }
        }
        Ok(DatasetTensor {
            id: id.into(),
            n,
            height,
            width,
            values,
            per_image_stats: None,
            domain,
        })
    }

    /// Build from an N x (H*W) matrix of flattened images.
    pub fn from_matrix(
        id: impl Into<String>,
        m: &DMatrix<f64>,
        height: usize,
        width: usize,
        domain: ValueDomain,
    ) -> Result<Self> {
        if m.ncols() != height * width {
            return Err(Error::Dimension(format!(
                "matrix has {} columns, images are {height}x{width}",
                m.ncols()
            )));
        }
        let mut values = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            values.extend(m.row(r).iter());
        }
        DatasetTensor::new(id, m.nrows(), height, width, values, domain)
    }

    fn with_stats(mut self, stats: Vec<ImageStats>) -> Result<Self> {
        if stats.len() != self.n {
            return Err(Error::Dimension(format!("{} stats for {} images", stats.len(), self.n)));
        }
        if let Some(i) = stats.iter().position(|s| !(s.std > 0.0)) {
            return Err(Error::DegenerateImage { index: i });
        }
        self.per_image_stats = Some(stats);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn area(&self) -> usize {
        self.height * self.width
    }
    pub fn domain(&self) -> ValueDomain {
        self.domain
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn per_image_stats(&self) -> Option<&[ImageStats]> {
        self.per_image_stats.as_deref()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let a = self.area();
        &self.values[i * a..(i + 1) * a]
    }

    pub fn image_matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.height, self.width, self.image(i))
    }

    /// Flattened N x (H*W) view, one image per row.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.area(), &self.values)
    }

    /// First `k` images (or all of them).
    pub fn head(&self, k: usize) -> DatasetTensor {
        let k = k.min(self.n);
        DatasetTensor {
            id: self.id.clone(),
            n: k,
            height: self.height,
            width: self.width,
            values: self.values[..k * self.area()].to_vec(),
            per_image_stats: self.per_image_stats.as_ref().map(|s| s[..k].to_vec()),
            domain: self.domain,
        }
    }

    pub fn map_values(&self, domain: ValueDomain, f: impl Fn(f64) -> f64) -> Result<DatasetTensor> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        let mut out = DatasetTensor::new(self.id.clone(), self.n, self.height, self.width, values, domain)?;
        out.per_image_stats = self.per_image_stats.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocessMode {
    LogitMap,
    PerImageZScore,
    None,
}

impl FromStr for PreprocessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(PreprocessMode::LogitMap),
            "zscore" => Ok(PreprocessMode::PerImageZScore),
            "none" => Ok(PreprocessMode::None),
            other => Err(Error::Config(format!("unknown preprocessing mode `{other}`"))),
        }
    }
}

impl fmt::Display for PreprocessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreprocessMode::LogitMap => "logit",
            PreprocessMode::PerImageZScore => "zscore",
            PreprocessMode::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Clamp margin; intensities are clamped into `[epsilon, 1 - epsilon]`.
    pub epsilon: f64,
    /// Gradient slope factor of the inverse sigmoid.
    pub beta: f64,
    pub mode: PreprocessMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            epsilon: 1e-3,
            beta: 1.0,
            mode: PreprocessMode::LogitMap,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!("epsilon {} not in (0, 0.5)", self.epsilon)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta {} must be positive", self.beta)));
        }
        Ok(())
    }

    /// Compact tag stored in artifact metadata, e.g. `logit:0.001:1`.
    pub fn tag(&self) -> String {
        match self.mode {
            PreprocessMode::LogitMap => format!("logit:{}:{}", self.epsilon, self.beta),
            m => m.to_string(),
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        let mut parts = tag.split(':');
        let mode: PreprocessMode = parts.next().unwrap_or("").parse()?;
        let mut cfg = PreprocessConfig { mode, ..Default::default() };
        if mode == PreprocessMode::LogitMap {
            let bad = || Error::Config(format!("malformed preprocessing tag `{tag}`"));
            cfg.epsilon = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            cfg.beta = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn idx_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::format(path, reason)
}

/// Load an IDX unsigned-byte rank-3 file, scaling bytes to `[0,1]`.
pub fn load_idx(path: impl AsRef<Path>) -> Result<DatasetTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse_idx(&bytes, path)
}

pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<DatasetTensor> {
    let eof = |what: &str| {
        Error::Io(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("IDX {what} truncated")))
    };
    if bytes.len() < 4 {
        return Err(eof("magic"));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if magic != IDX_U8_RANK3 {
        return Err(idx_err(path, format!("IDX magic {magic:#010x}, expected {IDX_U8_RANK3:#010x}")));
    }
    if bytes.len() < 16 {
        return Err(eof("header"));
    }
    let dim = |k: usize| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (n, h, w) = (dim(0), dim(1), dim(2));
    let len = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| idx_err(path, "IDX dimensions overflow"))?;
    let payload = bytes.get(16..16 + len).ok_or_else(|| eof("payload"))?;
    let values = payload.iter().map(|&b| b as f64 / 255.0).collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    DatasetTensor::new(id, n, h, w, values, ValueDomain::UnitInterval)
}

/// Serialize a unit-interval dataset as IDX bytes (values rounded to 1/255).
pub fn encode_idx(data: &DatasetTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.values.len());
    out.extend_from_slice(&IDX_U8_RANK3.to_be_bytes());
    for d in [data.n, data.height, data.width] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(data.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Clamp to `[eps, 1-eps]`, then `y = ln(x / (beta (1-x)))`.
pub fn logit_map(data: &DatasetTensor, cfg: &PreprocessConfig) -> Result<DatasetTensor> {
    cfg.validate()?;
    if data.domain != ValueDomain::UnitInterval {
        return Err(Error::Domain(format!("logit map needs unit-interval data, got {}", data.domain)));
    }
    let (eps, beta) = (cfg.epsilon, cfg.beta);
    data.map_values(ValueDomain::LogitSpace, |x| logit(x.clamp(eps, 1.0 - eps), beta))
}

pub fn logit(x: f64, beta: f64) -> f64 {
    x.ln() - (-x).ln_1p() - beta.ln()
}

/// `x = beta e^y / (1 + beta e^y)`, evaluated without overflow and kept
/// strictly inside (0, 1).
pub fn sigmoid(y: f64, beta: f64) -> f64 {
    let t = y + beta.ln();
    let x = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn sigmoid_unmap(data: &DatasetTensor, cfg: &PreprocessConfig) -> Result<DatasetTensor> {
    cfg.validate()?;
    if data.domain != ValueDomain::LogitSpace {
        return Err(Error::Domain(format!("sigmoid unmap needs logit-space data, got {}", data.domain)));
    }
    let beta = cfg.beta;
    data.map_values(ValueDomain::UnitInterval, |y| sigmoid(y, beta))
}

/// Normalize every image to mean 0 and population standard deviation 1,
/// remembering the original statistics.
pub fn zscore_per_image(data: &DatasetTensor) -> Result<DatasetTensor> {
    let area = data.area() as f64;
    let mut values = Vec::with_capacity(data.values.len());
    let mut stats = Vec::with_capacity(data.n);
    for i in 0..data.n {
        let img = data.image(i);
        let mean = img.iter().sum::<f64>() / area;
        let var = img.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / area;
        let std = var.sqrt();
        if !(std > 0.0) || std <= mean.abs() * 1e-14 {
            return Err(Error::DegenerateImage { index: i });
        }
        values.extend(img.iter().map(|v| (v - mean) / std));
        stats.push(ImageStats { mean, std });
    }
    DatasetTensor::new(data.id.clone(), data.n, data.height, data.width, values, ValueDomain::ZScored)?
        .with_stats(stats)
}

/// Undo [`zscore_per_image`] using the stored per-image statistics.
pub fn zscore_inverse(data: &DatasetTensor) -> Result<DatasetTensor> {
    let stats = data
        .per_image_stats
        .as_ref()
        .ok_or_else(|| Error::Domain("dataset carries no per-image statistics".into()))?;
    let mut values = Vec::with_capacity(data.values.len());
    for (i, s) in stats.iter().enumerate() {
        values.extend(data.image(i).iter().map(|v| v * s.std + s.mean));
    }
    DatasetTensor::new(data.id.clone(), data.n, data.height, data.width, values, ValueDomain::Raw)
}

/// Apply the configured forward preprocessing.
pub fn preprocess(data: &DatasetTensor, cfg: &PreprocessConfig) -> Result<DatasetTensor> {
    match cfg.mode {
        PreprocessMode::LogitMap => logit_map(data, cfg),
        PreprocessMode::PerImageZScore => zscore_per_image(data),
        PreprocessMode::None => Ok(data.clone()),
    }
}

/// Map preprocessed images back to the domain in which they are evaluated.
/// Z-scored samples stay normalized: generated images have no original
/// per-image statistics to restore.
pub fn postprocess(data: &DatasetTensor, cfg: &PreprocessConfig) -> Result<DatasetTensor> {
    match cfg.mode {
        PreprocessMode::LogitMap => sigmoid_unmap(data, cfg),
        PreprocessMode::PerImageZScore | PreprocessMode::None => Ok(data.clone()),
    }
}

/// The real images as they should be compared against generated ones:
/// the preprocessing roundtrip of the input (clamped intensities for the
/// logit map, normalized images for the Z-score).
pub fn evaluation_view(data: &DatasetTensor, cfg: &PreprocessConfig) -> Result<DatasetTensor> {
    postprocess(&preprocess(data, cfg)?, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct XgcSurrogateConfig {
    pub n_nodes: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of mixture components per image.
    pub components_per_node: (usize, usize),
    pub seed: u64,
    /// Per-image scale factors are drawn log-uniformly from this range.
    pub range_scale: (f64, f64),
}

impl Default for XgcSurrogateConfig {
    fn default() -> Self {
        XgcSurrogateConfig {
            n_nodes: 12_458,
            height: 32,
            width: 32,
            components_per_node: (1, 4),
            seed: 7,
            range_scale: (1.0, 1.0e3),
        }
    }
}

impl XgcSurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range_scale;
        if self.n_nodes == 0
            || self.height < 8
            || self.width < 8
            || self.components_per_node.0 == 0
            || self.components_per_node.0 > self.components_per_node.1
            || !(lo > 0.0 && lo <= hi && hi.is_finite())
        {
            return Err(Error::Config(format!("invalid surrogate config {self:?}")));
        }
        Ok(())
    }
}

/// Velocity-space histogram surrogate: each image is a 2D Gaussian mixture
/// over (parallel, perpendicular) velocity cells, multiplied by a per-image
/// scale so that no two images share a dynamic range.
pub fn synth_xgc(cfg: &XgcSurrogateConfig) -> Result<DatasetTensor> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (h, w) = (cfg.height, cfg.width);
    let (ln_lo, ln_hi) = (cfg.range_scale.0.ln(), cfg.range_scale.1.ln());
    let mut values = Vec::with_capacity(cfg.n_nodes * h * w);
    let mut img = vec![0.0; h * w];
    for _ in 0..cfg.n_nodes {
        let m = rng.random_range(cfg.components_per_node.0..=cfg.components_per_node.1);
        img.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..m {
            // rows: perpendicular velocity in [0, 1]; cols: parallel in [-1, 1]
            let c_perp = rng.random_range(0.05..0.6);
            let c_par = rng.random_range(-0.6..0.6);
            let s_perp = rng.random_range(0.08..0.3);
            let s_par = rng.random_range(0.1..0.45);
            let rho = rng.random_range(-0.5..0.5);
            let weight = rng.random_range(0.2..1.0);
            for r in 0..h {
                let vp = (r as f64 + 0.5) / h as f64;
                let zp = (vp - c_perp) / s_perp;
                for c in 0..w {
                    let vq = 2.0 * (c as f64 + 0.5) / w as f64 - 1.0;
                    let zq = (vq - c_par) / s_par;
                    let q = (zp * zp - 2.0 * rho * zp * zq + zq * zq) / (1.0 - rho * rho);
                    img[r * w + c] += weight * vp * (-0.5 * q).exp();
                }
            }
        }
        let peak = img.iter().cloned().fold(0.0, f64::max);
        let scale = if ln_hi > ln_lo { rng.random_range(ln_lo..ln_hi).exp() } else { ln_lo.exp() };
        for v in &img {
            // counting noise on top of the smooth density
            let noise: f64 = rng.random_range(-0.01..0.01);
            values.push(scale * (v / peak + noise * (v / peak).sqrt()).max(0.0));
        }
    }
    DatasetTensor::new(format!("xgc-surrogate-{}", cfg.seed), cfg.n_nodes, h, w, values, ValueDomain::Raw)
}

/// 28 x 28 grayscale garment silhouettes (tops, trousers, dresses, bags,
/// sneakers, pullovers) on a zero background, quantized to byte levels.
/// A stand-in for Fashion-MNIST when the IDX files are not at hand.
pub fn synth_garments(n: usize, seed: u64) -> Result<DatasetTensor> {
    const S: usize = 28;
    const SUB: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let mut values = Vec::with_capacity(n * S * S);
    for _ in 0..n {
        let class = rng.random_range(0..6u8);
        let cx = 14.0 + gauss.sample(&mut rng) * 0.6;
        let cy = 14.0 + gauss.sample(&mut rng) * 0.6;
        let size = rng.random_range(0.85..1.1);
        let base = rng.random_range(0.35..0.95);
        let stripe_f: f64 = rng.random_range(0.0..1.2);
        let stripe_a = rng.random_range(0.0..0.25);
        let stripe_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let shade = rng.random_range(-0.02..0.02);
        let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let inside = |x: f64, y: f64| -> bool {
            let u = (x - cx) / size;
            let v = (y - cy) / size;
            match class {
                // t-shirt: torso plus short sleeves
                0 => {
                    let torso = u.abs() < 6.5 + p[0] && v > -9.0 && v < 11.0;
                    let sleeve = v > -9.0 && v < -3.0 + p[1] && u.abs() < 11.0 + p[2]
                        && v < -9.0 + 1.2 * (11.5 - u.abs());
                    let neck = u.abs() < 2.5 && v < -7.5;
                    (torso || sleeve) && !neck
                }
                // trousers: two legs from a waistband
                1 => {
                    let waist = v > -12.0 && v < -7.0 && u.abs() < 6.0 + 0.5 * p[0];
                    let leg_gap = 0.8 + 0.15 * (v + 7.0).max(0.0);
                    let legs = v >= -7.0 && v < 12.5 && u.abs() > leg_gap.min(2.0 + p[1])
                        && u.abs() < 6.0 + 0.5 * p[0] + 0.05 * (v + 7.0);
                    waist || legs
                }
                // dress: flared trapezoid with narrow shoulders
                2 => {
                    let half = 3.5 + p[0] * 0.5 + (v + 12.0) * (0.28 + 0.06 * p[1]);
                    v > -12.0 && v < 12.5 && u.abs() < half
                }
                // bag: box with a handle
                3 => {
                    let body = v > -3.0 + p[0] && v < 10.0 && u.abs() < 10.0 + p[1];
                    let r = (u * u + (v + 3.0).powi(2)).sqrt();
                    let handle = v < -3.0 && r > 5.0 + p[2] * 0.5 && r < 7.0 + p[2] * 0.5;
                    body || handle
                }
                // sneaker: low profile, toe to the right
                4 => {
                    let sole = v > 3.0 && v < 7.0 && u > -12.0 && u < 12.0;
                    let upper = v <= 3.0 && u > -11.0 && u < 11.0 && v > -4.0 + p[1] + 0.35 * u.max(0.0);
                    sole || upper
                }
                // pullover: torso plus long sleeves
                _ => {
                    let torso = u.abs() < 7.0 + p[0] * 0.5 && v > -10.0 && v < 11.0;
                    let sleeve = u.abs() >= 7.0 + p[0] * 0.5
                        && u.abs() < 11.5 + p[2] * 0.5
                        && v > -9.0 + (u.abs() - 7.0) * 0.6
                        && v < 9.0 + p[3];
                    let neck = u.abs() < 2.0 && v < -8.5;
                    (torso || sleeve) && !neck
                }
            }
        };
        for r in 0..S {
            for c in 0..S {
                let mut cover = 0usize;
                for sy in 0..SUB {
                    for sx in 0..SUB {
                        let x = c as f64 + (sx as f64 + 0.5) / SUB as f64;
                        let y = r as f64 + (sy as f64 + 0.5) / SUB as f64;
                        cover += inside(x, y) as usize;
                    }
                }
                let frac = cover as f64 / (SUB * SUB) as f64;
                let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                let tex = base
                    + stripe_a * (stripe_f * y + stripe_phase).sin()
                    + shade * (x - cx)
                    + 0.03 * gauss.sample(&mut rng);
                let v = (frac * tex.clamp(0.05, 1.0) * 255.0).round() / 255.0;
                values.push(v.clamp(0.0, 1.0));
            }
        }
    }
    DatasetTensor::new(format!("garments-{seed}"), n, S, S, values, ValueDomain::UnitInterval)
}

/// Write a dataset as a coefficient container (one flattened image per
/// row). Per-image statistics, if present, go to a `.stats` sidecar.
pub fn write_dataset(data: &DatasetTensor, path: impl AsRef<Path>, extra: &Metadata) -> Result<()> {
    let path = path.as_ref();
    let mut md = extra.clone();
    md.insert("content".into(), "dataset".into());
    md.insert("dataset_id".into(), data.id.clone());
    md.insert("height".into(), data.height.to_string());
    md.insert("width".into(), data.width.to_string());
    md.insert("value_domain".into(), data.domain.to_string());
    let c = Container {
        kind: ContainerKind::CoefficientMatrix,
        rows: data.n,
        cols: data.area(),
        payload: data.values.clone(),
        metadata: md,
    };
    coeffio::write_container(&c, path)?;
    let sidecar = stats_path(path);
    if let Some(stats) = &data.per_image_stats {
        let payload = stats.iter().flat_map(|s| [s.mean, s.std]).collect();
        let sc = Container {
            kind: ContainerKind::Matrix,
            rows: stats.len(),
            cols: 2,
            payload,
            metadata: [("content".to_string(), "image_stats".to_string())].into(),
        };
        coeffio::write_container(&sc, sidecar)?;
    } else if sidecar.exists() {
        fs::remove_file(sidecar)?;
    }
    Ok(())
}

/// Returns the dataset plus the container metadata it was stored with.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<(DatasetTensor, Metadata)> {
    let path = path.as_ref();
    let c = coeffio::read_container(path)?;
    let h: usize = c.require_parsed("height", path)?;
    let w: usize = c.require_parsed("width", path)?;
    let domain: ValueDomain = c.require("value_domain", path)?.parse()?;
    let id = c.meta("dataset_id").unwrap_or("dataset").to_string();
    if c.cols != h * w {
        return Err(Error::format(path, format!("{} columns for {h}x{w} images", c.cols)));
    }
    let mut data = DatasetTensor::new(id, c.rows, h, w, c.payload, domain)?;
    let sidecar = stats_path(path);
    if sidecar.exists() {
        let sc = coeffio::read_container(&sidecar)?;
        let stats = sc
            .payload
            .chunks_exact(2)
            .map(|p| ImageStats { mean: p[0], std: p[1] })
            .collect();
        data = data.with_stats(stats)?;
    }
    Ok((data, c.metadata))
}

fn stats_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".stats");
    PathBuf::from(s)
}
