//! The generative pipeline end to end: preprocess, fit a basis, fit a
//! mixture on the coefficients, sample, and map samples back to images.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::basis::{hosvd, BasisModel, IcaBasis, IcaOptions, PcaBasis};
use crate::error::{Error, Result};
use crate::gmm::{fit_em, CovarianceType, GmmConfig, GmmModel};
use crate::ingest::{postprocess, preprocess, DatasetTensor, PreprocessConfig, ValueDomain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisSpec {
    Identity,
    Pca { d: usize, centered: bool },
    Ica { d: usize, options: IcaOptions },
    Tucker { rank_row: usize, rank_col: usize },
}

impl BasisSpec {
    /// Fit on (already preprocessed) images.
    pub fn fit(&self, data: &DatasetTensor) -> Result<BasisModel> {
        match *self {
            BasisSpec::Identity => Ok(BasisModel::identity(data.area())),
            BasisSpec::Pca { d, centered } => Ok(BasisModel::Pca(PcaBasis::fit(&data.to_matrix(), d, centered)?)),
            BasisSpec::Ica { d, options } => Ok(BasisModel::Ica(IcaBasis::fit(&data.to_matrix(), d, &options)?)),
            BasisSpec::Tucker { rank_row, rank_col } => Ok(BasisModel::Tucker(hosvd(data, (0, rank_row, rank_col), false)?.basis)),
        }
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisSpec::Identity => f.write_str("identity"),
            BasisSpec::Pca { d, centered: false } => write!(f, "pca:{d}"),
            BasisSpec::Pca { d, centered: true } => write!(f, "pca:{d}:centered"),
            BasisSpec::Ica { d, .. } => write!(f, "ica:{d}"),
            BasisSpec::Tucker { rank_row, rank_col } => write!(f, "tucker:{rank_row}x{rank_col}"),
        }
    }
}

/// Parses `identity`, `pca:400`, `pca:400:centered`, `ica:400`, `tucker:18x18`.
impl FromStr for BasisSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed basis spec `{s}`"));
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or("");
        let arg = parts.next();
        let num = |a: Option<&str>| -> Result<usize> { a.ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let spec = match kind {
            "identity" | "pixel" => BasisSpec::Identity,
            "pca" => BasisSpec::Pca {
                d: num(arg)?,
                centered: match parts.next() {
                    None => false,
                    Some("centered") => true,
                    Some(_) => return Err(bad()),
                },
            },
            "ica" => BasisSpec::Ica { d: num(arg)?, options: IcaOptions::default() },
            "tucker" => {
                let (a, b) = arg.and_then(|a| a.split_once('x')).ok_or_else(bad)?;
                BasisSpec::Tucker {
                    rank_row: num(Some(a))?,
                    rank_col: num(Some(b))?,
                }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(spec)
    }
}

/// Map coefficient rows back to images in the evaluation domain.
pub fn coefficients_to_images(
    basis: &BasisModel,
    coeffs: &DMatrix<f64>,
    height: usize,
    width: usize,
    pre: &PreprocessConfig,
    id: &str,
) -> Result<DatasetTensor> {
    let x = basis.reconstruct(coeffs)?;
    let domain = match pre.mode {
        crate::ingest::PreprocessMode::LogitMap => ValueDomain::LogitSpace,
        crate::ingest::PreprocessMode::PerImageZScore => ValueDomain::ZScored,
        crate::ingest::PreprocessMode::None => ValueDomain::Raw,
    };
    let t = DatasetTensor::from_matrix(id, &x, height, width, domain)?;
    postprocess(&t, pre)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub basis: BasisSpec,
    pub k: usize,
    /// `None` chooses from the sample count.
    pub covariance_type: Option<CovarianceType>,
    pub reg: Option<f64>,
    pub seed: u64,
    pub n_samples: usize,
    pub sample_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub basis: BasisModel,
    pub gmm: GmmModel,
    pub coefficients: DMatrix<f64>,
    pub images: DatasetTensor,
}

/// Fit a basis-plus-mixture generator on raw training images and sample
/// from it.
pub fn fit_and_sample(train: &DatasetTensor, pre: &PreprocessConfig, cfg: &GeneratorConfig) -> Result<Generated> {
    let data = preprocess(train, pre)?;
    let spec = match cfg.basis {
        BasisSpec::Ica { d, options } => BasisSpec::Ica { d, options: IcaOptions { seed: cfg.seed, ..options } },
        s => s,
    };
    let basis = spec.fit(&data)?;
    let y = basis.project(&data.to_matrix())?;
    let (n, d) = y.shape();
    let covariance_type = cfg.covariance_type.unwrap_or_else(|| CovarianceType::auto(n, d, cfg.k));
    let gmm = fit_em(
        &y,
        &GmmConfig {
            k: cfg.k,
            covariance_type,
            reg: cfg.reg,
            seed: cfg.seed,
            ..Default::default()
        },
    )?;
    let coefficients = gmm.sample(cfg.n_samples, cfg.sample_seed);
    let images = coefficients_to_images(
        &basis,
        &coefficients,
        train.height(),
        train.width(),
        pre,
        &format!("{}-{}-gmm", train.id, basis.id()),
    )?;
    Ok(Generated {
        basis,
        gmm,
        coefficients,
        images,
    })
}
