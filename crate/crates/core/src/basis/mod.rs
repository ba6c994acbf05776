//! Representation bases. Every basis maps flattened images (one per row)
//! to coefficient rows and back.

mod ica;
mod pca;
mod tucker;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

pub use ica::{IcaBasis, IcaOptions, Nonlinearity};
pub use pca::{PcaBasis, EIGEN_CLAMP};
pub use tucker::{hosvd, Hosvd, TuckerBasis};

use crate::coeffio::{read_container, write_container, Container, ContainerKind, Metadata};
use crate::coeffs::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::ingest::DatasetTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Identity,
    Pca,
    Ica,
    Tucker,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Identity => "identity",
            BasisKind::Pca => "pca",
            BasisKind::Ica => "ica",
            BasisKind::Tucker => "tucker",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "pixel" => Ok(BasisKind::Identity),
            "pca" => Ok(BasisKind::Pca),
            "ica" => Ok(BasisKind::Ica),
            "tucker" => Ok(BasisKind::Tucker),
            other => Err(Error::Config(format!("unknown basis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisModel {
    /// Pixel space: forward and inverse are the identity on D values.
    Identity { dim: usize },
    Pca(PcaBasis),
    Ica(IcaBasis),
    Tucker(TuckerBasis),
}

impl BasisModel {
    pub fn identity(dim: usize) -> Self {
        BasisModel::Identity { dim }
    }

    pub fn kind(&self) -> BasisKind {
        match self {
            BasisModel::Identity { .. } => BasisKind::Identity,
            BasisModel::Pca(_) => BasisKind::Pca,
            BasisModel::Ica(_) => BasisKind::Ica,
            BasisModel::Tucker(_) => BasisKind::Tucker,
        }
    }

    pub fn dim_full(&self) -> usize {
        match self {
            BasisModel::Identity { dim } => *dim,
            BasisModel::Pca(b) => b.dim_full(),
            BasisModel::Ica(b) => b.dim_full(),
            BasisModel::Tucker(b) => b.dims.1 * b.dims.2,
        }
    }

    pub fn dim_reduced(&self) -> usize {
        match self {
            BasisModel::Identity { dim } => *dim,
            BasisModel::Pca(b) => b.dim_reduced(),
            BasisModel::Ica(b) => b.dim_reduced(),
            BasisModel::Tucker(b) => b.coeff_len(),
        }
    }

    /// Short tag such as `ica400` or `tucker18x18`.
    pub fn id(&self) -> String {
        match self {
            BasisModel::Tucker(b) => format!("tucker{}x{}", b.ranks.1, b.ranks.2),
            BasisModel::Identity { .. } => "pixel".into(),
            other => format!("{}{}", other.kind(), other.dim_reduced()),
        }
    }

    /// Map N x D flattened images to N x d coefficients.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            BasisModel::Identity { dim } => {
                if x.ncols() != *dim {
                    return Err(Error::Dimension(format!("identity basis expects {dim} columns, got {}", x.ncols())));
                }
                Ok(x.clone())
            }
            BasisModel::Pca(b) => b.project(x),
            BasisModel::Ica(b) => b.transform(x),
            BasisModel::Tucker(b) => b.project_rows(x),
        }
    }

    /// Map N x d coefficients back to N x D flattened images.
    pub fn reconstruct(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            BasisModel::Identity { dim } => {
                if y.ncols() != *dim {
                    return Err(Error::Dimension(format!("identity basis expects {dim} columns, got {}", y.ncols())));
                }
                Ok(y.clone())
            }
            BasisModel::Pca(b) => b.reconstruct(y),
            BasisModel::Ica(b) => b.inverse(y),
            BasisModel::Tucker(b) => b.reconstruct_rows(y),
        }
    }

    pub fn project_dataset(&self, data: &DatasetTensor) -> Result<CoefficientMatrix> {
        let y = self.project(&data.to_matrix())?;
        CoefficientMatrix::new(y, self.id(), data.id.clone())
    }

    /// Write the basis as a directory of containers. `extra` lands in the
    /// metadata of the `basis.hgmc` header file.
    pub fn save(&self, dir: impl AsRef<Path>, extra: &Metadata) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut md = extra.clone();
        md.insert("content".into(), "basis".into());
        md.insert("basis_kind".into(), self.kind().to_string());
        md.insert("basis_id".into(), self.id());
        md.insert("dim_full".into(), self.dim_full().to_string());
        md.insert("dim_reduced".into(), self.dim_reduced().to_string());
        let part = |name: &str, m: &DMatrix<f64>| -> Result<()> {
            let c = Container::from_matrix(ContainerKind::Matrix, m, [("role".to_string(), name.to_string())].into());
            write_container(&c, dir.join(format!("{name}.hgmc")))
        };
        let header_payload: Vec<f64> = match self {
            BasisModel::Identity { .. } => Vec::new(),
            BasisModel::Pca(b) => {
                md.insert("centered".into(), b.centered().to_string());
                part("forward", &b.forward)?;
                part("inverse", &b.inverse)?;
                if let Some(m) = &b.mean {
                    part("mean", &DMatrix::from_column_slice(m.len(), 1, m.as_slice()))?;
                }
                b.eigenvalues.clone()
            }
            BasisModel::Ica(b) => {
                md.insert("iterations_used".into(), b.iterations_used.to_string());
                md.insert("converged".into(), b.converged.to_string());
                part("whitening", &b.whitening)?;
                part("unmixing", &b.unmixing)?;
                part("mixing", &b.mixing)?;
                b.mean.as_slice().to_vec()
            }
            BasisModel::Tucker(b) => {
                md.insert("dims".into(), format!("{},{},{}", b.dims.0, b.dims.1, b.dims.2));
                md.insert("ranks".into(), format!("{},{},{}", b.ranks.0, b.ranks.1, b.ranks.2));
                md.insert("mode1_used".into(), b.mode1_used().to_string());
                part("factor_row", &b.factor_row)?;
                part("factor_col", &b.factor_col)?;
                if let Some(u1) = &b.factor_sample {
                    part("factor_sample", u1)?;
                }
                Vec::new()
            }
        };
        write_container(&Container::from_vector(&header_payload, md), dir.join("basis.hgmc"))
    }

    /// Load a basis directory; returns the header metadata alongside.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Metadata)> {
        let dir = dir.as_ref();
        let hp = dir.join("basis.hgmc");
        let header = read_container(&hp)?;
        let kind: BasisKind = header.require("basis_kind", &hp)?.parse()?;
        let part = |name: &str| -> Result<DMatrix<f64>> { Ok(read_container(dir.join(format!("{name}.hgmc")))?.to_matrix()) };
        let model = match kind {
            BasisKind::Identity => BasisModel::Identity { dim: header.require_parsed("dim_full", &hp)? },
            BasisKind::Pca => {
                let mean = if header.require_parsed::<bool>("centered", &hp)? {
                    Some(part("mean")?.column(0).into_owned())
                } else {
                    None
                };
                BasisModel::Pca(PcaBasis {
                    eigenvalues: header.payload.clone(),
                    forward: part("forward")?,
                    inverse: part("inverse")?,
                    mean,
                })
            }
            BasisKind::Ica => BasisModel::Ica(IcaBasis {
                whitening: part("whitening")?,
                unmixing: part("unmixing")?,
                mixing: part("mixing")?,
                mean: header.to_vector(),
                iterations_used: header.require_parsed("iterations_used", &hp)?,
                converged: header.require_parsed("converged", &hp)?,
            }),
            BasisKind::Tucker => {
                let triple = |key: &str| -> Result<(usize, usize, usize)> {
                    let raw = header.require(key, &hp)?;
                    let v: Vec<usize> = raw.split(',').filter_map(|s| s.parse().ok()).collect();
                    match v[..] {
                        [a, b, c] => Ok((a, b, c)),
                        _ => Err(Error::format(&hp, format!("bad `{key}` value `{raw}`"))),
                    }
                };
                let factor_sample = if header.require_parsed::<bool>("mode1_used", &hp)? {
                    Some(part("factor_sample")?)
                } else {
                    None
                };
                BasisModel::Tucker(TuckerBasis {
                    dims: triple("dims")?,
                    ranks: triple("ranks")?,
                    factor_sample,
                    factor_row: part("factor_row")?,
                    factor_col: part("factor_col")?,
                })
            }
        };
        Ok((model, header.metadata))
    }
}

/// Mean over rows of the Euclidean distance between `x` and `x_hat`.
pub fn mean_l2_error(x: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    (0..n).map(|i| (x.row(i) - x_hat.row(i)).norm()).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_garments, ValueDomain};

    #[test]
    fn identity_is_exact() {
        let x = DMatrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 - 5.5);
        let b = BasisModel::identity(4);
        assert_eq!(b.project(&x).unwrap(), x);
        assert_eq!(b.reconstruct(&x).unwrap(), x);
        assert!(b.project(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn save_load_every_kind() {
        let g = synth_garments(60, 2).unwrap();
        let x = g.to_matrix();
        let models = vec![
            BasisModel::identity(784),
            BasisModel::Pca(PcaBasis::fit(&x, 10, true).unwrap()),
            BasisModel::Pca(PcaBasis::fit(&x, 10, false).unwrap()),
            BasisModel::Ica(IcaBasis::fit(&x, 6, &IcaOptions::default()).unwrap()),
            BasisModel::Tucker(hosvd(&g, (0, 5, 6), false).unwrap().basis),
            BasisModel::Tucker(hosvd(&g, (7, 5, 6), true).unwrap().basis),
        ];
        let dir = tempfile::tempdir().unwrap();
        for (i, m) in models.iter().enumerate() {
            let p = dir.path().join(format!("b{i}"));
            let mut extra = Metadata::new();
            extra.insert("preprocess".into(), "logit:0.001:1".into());
            m.save(&p, &extra).unwrap();
            let (back, md) = BasisModel::load(&p).unwrap();
            assert_eq!(&back, m);
            assert_eq!(md["preprocess"], "logit:0.001:1");
        }
    }

    #[test]
    fn every_basis_composes_with_datasets() {
        let g = synth_garments(40, 3).unwrap();
        let x = g.to_matrix();
        for m in [
            BasisModel::identity(784),
            BasisModel::Pca(PcaBasis::fit(&x, 12, false).unwrap()),
            BasisModel::Ica(IcaBasis::fit(&x, 12, &IcaOptions::default()).unwrap()),
            BasisModel::Tucker(hosvd(&g, (0, 4, 3), false).unwrap().basis),
        ] {
            let c = m.project_dataset(&g).unwrap();
            assert_eq!(c.d(), m.dim_reduced());
            let back = m.reconstruct(c.values()).unwrap();
            let d = DatasetTensor::from_matrix("r", &back, 28, 28, ValueDomain::Raw).unwrap();
            assert_eq!(d.n(), 40);
        }
    }
}
