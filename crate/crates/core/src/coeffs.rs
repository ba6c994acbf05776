use std::path::Path;

use nalgebra::DMatrix;

use crate::coeffio::{self, Container, ContainerKind, Metadata};
use crate::error::{Error, Result};

/// N x d coefficient rows tagged with the basis and dataset they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    values: DMatrix<f64>,
    pub basis_id: String,
    pub dataset_id: String,
    /// Extra provenance carried between pipeline stages.
    pub provenance: Metadata,
}

impl CoefficientMatrix {
    pub fn new(
        values: DMatrix<f64>,
        basis_id: impl Into<String>,
        dataset_id: impl Into<String>,
    ) -> Result<Self> {
        check_finite(&values)?;
        Ok(CoefficientMatrix {
            values,
            basis_id: basis_id.into(),
            dataset_id: dataset_id.into(),
            provenance: Metadata::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn with_provenance(mut self, provenance: Metadata) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn to_container(&self) -> Container {
        let mut md = self.provenance.clone();
        md.insert("basis_id".into(), self.basis_id.clone());
        md.insert("dataset_id".into(), self.dataset_id.clone());
        Container::from_matrix(ContainerKind::CoefficientMatrix, &self.values, md)
    }

    pub fn from_container(c: Container, path: &Path) -> Result<Self> {
        if c.kind != ContainerKind::CoefficientMatrix {
            return Err(Error::format(path, format!("expected a coefficient matrix, found {:?}", c.kind)));
        }
        let values = c.to_matrix();
        let mut md = c.metadata;
        let basis_id = md.remove("basis_id").unwrap_or_default();
        let dataset_id = md.remove("dataset_id").unwrap_or_default();
        Ok(CoefficientMatrix::new(values, basis_id, dataset_id)?.with_provenance(md))
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

pub fn write_coeffs(m: &CoefficientMatrix, path: impl AsRef<Path>) -> Result<()> {
    coeffio::write_container(&m.to_container(), path)
}

pub fn read_coeffs(path: impl AsRef<Path>) -> Result<CoefficientMatrix> {
    let path = path.as_ref();
    CoefficientMatrix::from_container(coeffio::read_container(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn roundtrip_random_100x324_is_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(100, 324, |_, _| rng.random::<f64>() * 20.0 - 10.0);
        let mut cm = CoefficientMatrix::new(m, "ica", "fashion").unwrap();
        cm.provenance.insert("seed".into(), "1".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.hgmc");
        write_coeffs(&cm, &p).unwrap();
        let back = read_coeffs(&p).unwrap();
        assert_eq!(back.n(), 100);
        assert_eq!(back.d(), 324);
        for (a, b) in back.values().iter().zip(cm.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, cm);
    }

    #[test]
    fn nan_payload_is_reported_downstream() {
        let mut c = Container::from_matrix(
            ContainerKind::CoefficientMatrix,
            &DMatrix::from_element(3, 4, 1.0),
            Metadata::new(),
        );
        c.payload[2 * 4 + 1] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nan.hgmc");
        coeffio::write_container(&c, &p).unwrap();
        let raw = coeffio::read_container(&p).unwrap();
        assert!(raw.payload[9].is_nan());
        match read_coeffs(&p) {
            Err(Error::NonFinite { row: 2, col: 1 }) => {}
            other => panic!("expected NonFinite at (2,1), got {other:?}"),
        }
    }

    #[test]
    fn wrong_kind_rejected() {
        let c = Container::from_vector(&[1.0, 2.0], Metadata::new());
        assert!(CoefficientMatrix::from_container(c, Path::new("v")).is_err());
    }
}
