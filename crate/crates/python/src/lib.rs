//! Python bindings. Arrays cross the boundary as nested lists of floats:
//! datasets as `n x (height*width)` rows, coefficients as `n x d` rows.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hybridgen::basis::{BasisModel, IcaOptions};
use hybridgen::benchmark::{self, KdeReference, ReferenceConfig, ReportLabels};
use hybridgen::coeffio::Metadata;
use hybridgen::coeffs::{self, CoefficientMatrix};
use hybridgen::gmm::{self, GmmConfig, GmmModel};
use hybridgen::ingest::{self, DatasetTensor, PreprocessConfig, ValueDomain};
use hybridgen::kde::{BandwidthRule, KdeModel};
use hybridgen::pipeline::{coefficients_to_images, BasisSpec};
use hybridgen::wavelet;
use hybridgen::{CovarianceType, Error, NllCurveConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Rank { .. } | Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_row_iterator(n, d, rows.into_iter().flatten()))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "Dataset", module = "hybridgen_py", frozen)]
pub struct PyDataset {
    inner: DatasetTensor,
}

#[pymethods]
impl PyDataset {
    /// `domain` is one of `unit`, `raw`, `logit`, `zscored`.
    #[new]
    #[pyo3(signature = (id, rows, height, width, domain = "unit"))]
    fn new(id: &str, rows: Vec<Vec<f64>>, height: usize, width: usize, domain: &str) -> PyResult<Self> {
        let domain: ValueDomain = domain.parse().map_err(py_err)?;
        let m = to_matrix(rows)?;
        Ok(PyDataset {
            inner: DatasetTensor::from_matrix(id, &m, height, width, domain).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, _) = ingest::read_dataset(path).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn load_idx(path: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: ingest::load_idx(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ingest::write_dataset(&self.inner, path, &Metadata::new()).map_err(py_err)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.n(), self.inner.height(), self.inner.width())
    }

    #[getter]
    fn domain(&self) -> String {
        self.inner.domain().to_string()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.to_matrix())
    }

    fn image(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n() {
            return Err(PyValueError::new_err(format!("image {i} out of range")));
        }
        Ok(self.inner.image(i).to_vec())
    }

    fn head(&self, k: usize) -> Self {
        PyDataset { inner: self.inner.head(k) }
    }

    /// Forward preprocessing, e.g. `logit:0.001:1`, `zscore` or `none`.
    fn preprocess(&self, tag: &str) -> PyResult<Self> {
        let cfg = PreprocessConfig::from_tag(tag).map_err(py_err)?;
        Ok(PyDataset {
            inner: ingest::preprocess(&self.inner, &cfg).map_err(py_err)?,
        })
    }

    fn evaluation_view(&self, tag: &str) -> PyResult<Self> {
        let cfg = PreprocessConfig::from_tag(tag).map_err(py_err)?;
        Ok(PyDataset {
            inner: ingest::evaluation_view(&self.inner, &cfg).map_err(py_err)?,
        })
    }

    /// Single-level DWT features (LL, LH, HL), one row per image.
    fn dwt_features(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(wavelet::dwt_features(&self.inner).map_err(py_err)?.values()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(id={:?}, n={}, {}x{}, domain={})",
            self.inner.id,
            self.inner.n(),
            self.inner.height(),
            self.inner.width(),
            self.inner.domain()
        )
    }
}

#[pyfunction]
fn synth_garments(n: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: ingest::synth_garments(n, seed).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (n, size = 32, seed = 0))]
fn synth_xgc(n: usize, size: usize, seed: u64) -> PyResult<PyDataset> {
    let cfg = ingest::XgcSurrogateConfig {
        n_nodes: n,
        height: size,
        width: size,
        seed,
        ..Default::default()
    };
    Ok(PyDataset {
        inner: ingest::synth_xgc(&cfg).map_err(py_err)?,
    })
}

#[pyclass(name = "Basis", module = "hybridgen_py", frozen)]
pub struct PyBasis {
    inner: BasisModel,
}

#[pymethods]
impl PyBasis {
    /// Fit on an already preprocessed dataset. `spec` is `identity`,
    /// `pca:D`, `pca:D:centered`, `ica:D` or `tucker:RxC`.
    #[staticmethod]
    #[pyo3(signature = (data, spec, seed = 0))]
    fn fit(data: &PyDataset, spec: &str, seed: u64) -> PyResult<Self> {
        let spec = match spec.parse::<BasisSpec>().map_err(py_err)? {
            BasisSpec::Ica { d, options } => BasisSpec::Ica { d, options: IcaOptions { seed, ..options } },
            s => s,
        };
        Ok(PyBasis {
            inner: spec.fit(&data.inner).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(PyBasis {
            inner: BasisModel::load(dir).map_err(py_err)?.0,
        })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir, &Metadata::new()).map_err(py_err)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn dim_full(&self) -> usize {
        self.inner.dim_full()
    }

    #[getter]
    fn dim_reduced(&self) -> usize {
        self.inner.dim_reduced()
    }

    fn project(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(&self.inner.project(&to_matrix(rows)?).map_err(py_err)?))
    }

    fn reconstruct(&self, coeffs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_matrix(&self.inner.reconstruct(&to_matrix(coeffs)?).map_err(py_err)?))
    }

    /// Coefficients back to images in the evaluation domain of `preprocess`.
    #[pyo3(signature = (coeffs, height, width, preprocess = "logit:0.001:1", id = "generated"))]
    fn to_images(&self, coeffs: Vec<Vec<f64>>, height: usize, width: usize, preprocess: &str, id: &str) -> PyResult<PyDataset> {
        let pre = PreprocessConfig::from_tag(preprocess).map_err(py_err)?;
        let inner = coefficients_to_images(&self.inner, &to_matrix(coeffs)?, height, width, &pre, id).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    fn __repr__(&self) -> String {
        format!("Basis({}, {} -> {})", self.inner.id(), self.inner.dim_full(), self.inner.dim_reduced())
    }
}

#[pyclass(name = "Gmm", module = "hybridgen_py", frozen)]
pub struct PyGmm {
    inner: GmmModel,
}

#[pymethods]
impl PyGmm {
    /// `covariance` is `full`, `diagonal` or `auto`.
    #[staticmethod]
    #[pyo3(signature = (rows, k, covariance = "auto", reg = None, seed = 0, max_iter = 500, tol = 1e-5))]
    fn fit(rows: Vec<Vec<f64>>, k: usize, covariance: &str, reg: Option<f64>, seed: u64, max_iter: usize, tol: f64) -> PyResult<Self> {
        let x = to_matrix(rows)?;
        let covariance_type = match covariance {
            "auto" => CovarianceType::auto(x.nrows(), x.ncols(), k),
            other => other.parse().map_err(py_err)?,
        };
        let cfg = GmmConfig {
            k,
            covariance_type,
            reg,
            seed,
            max_iter,
            tol,
        };
        Ok(PyGmm {
            inner: gmm::fit_em(&x, &cfg).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(PyGmm {
            inner: GmmModel::load(dir).map_err(py_err)?.0,
        })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir, &Metadata::new()).map_err(py_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.means.iter().map(|m| m.iter().copied().collect()).collect()
    }

    #[getter]
    fn covariance_type(&self) -> String {
        self.inner.covariance_type().to_string()
    }

    #[getter]
    fn fit_log(&self) -> Vec<f64> {
        self.inner.fit_log.clone()
    }

    fn logpdf(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.logpdf(&x).map_err(py_err)
    }

    fn nll(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.nll_rows(&to_matrix(rows)?).map_err(py_err)
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.sample(n, seed))
    }

    fn __repr__(&self) -> String {
        format!("Gmm(k={}, dim={}, {})", self.inner.k(), self.inner.dim(), self.inner.covariance_type())
    }
}

#[pyclass(name = "Kde", module = "hybridgen_py", frozen)]
pub struct PyKde {
    inner: KdeModel,
}

#[pymethods]
impl PyKde {
    /// `bandwidth` is `scott`, `silverman` or `fixed:H`.
    #[staticmethod]
    #[pyo3(signature = (rows, bandwidth = "silverman"))]
    fn fit(rows: Vec<Vec<f64>>, bandwidth: &str) -> PyResult<Self> {
        let rule: BandwidthRule = bandwidth.parse().map_err(py_err)?;
        Ok(PyKde {
            inner: KdeModel::fit(&to_matrix(rows)?, rule).map_err(py_err)?,
        })
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth
    }

    fn logpdf(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.logpdf(&x).map_err(py_err)
    }

    #[pyo3(signature = (rows, leave_one_out = false))]
    fn mean_nll(&self, rows: Vec<Vec<f64>>, leave_one_out: bool) -> PyResult<f64> {
        self.inner.mean_nll(&to_matrix(rows)?, leave_one_out).map_err(py_err)
    }
}

#[pyclass(name = "Reference", module = "hybridgen_py", frozen)]
pub struct PyReference {
    inner: benchmark::ReferenceModel,
}

#[pymethods]
impl PyReference {
    /// Fit the DWT-GMM reference on real images (in their evaluation view).
    #[staticmethod]
    #[pyo3(signature = (data, k = 10, covariance = None, reg = None, seed = 0))]
    fn fit(data: &PyDataset, k: usize, covariance: Option<&str>, reg: Option<f64>, seed: u64) -> PyResult<Self> {
        let cfg = ReferenceConfig {
            k,
            covariance_type: covariance.map(str::parse).transpose().map_err(py_err)?,
            reg,
            seed,
            ..Default::default()
        };
        Ok(PyReference {
            inner: benchmark::build_reference(&data.inner, &cfg).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(PyReference {
            inner: benchmark::ReferenceModel::load(dir).map_err(py_err)?.0,
        })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir, &Metadata::new()).map_err(py_err)
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    /// Mean and per-image NLL of a dataset under the reference.
    fn dwt_entropy(&self, data: &PyDataset) -> PyResult<(f64, Vec<f64>)> {
        benchmark::dwt_entropy(&self.inner, &data.inner).map_err(py_err)
    }

    /// Full benchmark report as `key=value` text.
    #[pyo3(signature = (real, generated, model_id = "model", basis_id = "", kde_bandwidth = "scott", kde_reduce = 50))]
    fn evaluate(
        &self,
        real: &PyDataset,
        generated: &PyDataset,
        model_id: &str,
        basis_id: &str,
        kde_bandwidth: &str,
        kde_reduce: usize,
    ) -> PyResult<String> {
        let rule: BandwidthRule = kde_bandwidth.parse().map_err(py_err)?;
        let kde = KdeReference::fit(&real.inner, rule, (kde_reduce > 0).then_some(kde_reduce)).map_err(py_err)?;
        let labels = ReportLabels {
            model_id: model_id.into(),
            basis_id: basis_id.into(),
            snapshot: Metadata::new(),
        };
        let report = benchmark::evaluate(&self.inner, &kde, &real.inner, &generated.inner, &NllCurveConfig::default(), &labels)
            .map_err(py_err)?;
        Ok(report.to_text())
    }
}

/// l1 distance between the KDE curves of two NLL arrays.
#[pyfunction]
fn l1_distance(nll_real: Vec<f64>, nll_generated: Vec<f64>) -> PyResult<f64> {
    benchmark::l1_density_distance(&nll_real, &nll_generated, &NllCurveConfig::default()).map_err(py_err)
}

/// Write a coefficient matrix container.
#[pyfunction]
#[pyo3(signature = (path, rows, basis_id = "", dataset_id = "", metadata = None))]
fn write_coeffs(path: &str, rows: Vec<Vec<f64>>, basis_id: &str, dataset_id: &str, metadata: Option<Metadata>) -> PyResult<()> {
    let m = CoefficientMatrix::new(to_matrix(rows)?, basis_id, dataset_id)
        .map_err(py_err)?
        .with_provenance(metadata.unwrap_or_default());
    coeffs::write_coeffs(&m, path).map_err(py_err)
}

/// Read a coefficient matrix container as `(rows, metadata)`; the metadata
/// includes `basis_id` and `dataset_id`.
#[pyfunction]
fn read_coeffs(path: &str) -> PyResult<(Vec<Vec<f64>>, Metadata)> {
    let m = coeffs::read_coeffs(path).map_err(py_err)?;
    let mut md = m.provenance.clone();
    md.insert("basis_id".into(), m.basis_id.clone());
    md.insert("dataset_id".into(), m.dataset_id.clone());
    Ok((from_matrix(m.values()), md))
}

#[pymodule]
fn hybridgen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyGmm>()?;
    m.add_class::<PyKde>()?;
    m.add_class::<PyReference>()?;
    m.add_function(wrap_pyfunction!(synth_garments, m)?)?;
    m.add_function(wrap_pyfunction!(synth_xgc, m)?)?;
    m.add_function(wrap_pyfunction!(l1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(write_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(read_coeffs, m)?)?;
    Ok(())
}
