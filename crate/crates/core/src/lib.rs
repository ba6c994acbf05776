//! Generative modeling of two-dimensional array datasets in the coefficient
//! space of a representation basis (PCA, FastICA, Tucker/HOSVD or plain
//! pixels), plus an evaluation benchmark built from a Gaussian mixture over
//! single-level bior1.3 wavelet coefficients.
//!
//! The pipeline is: [`ingest`] a dataset and preprocess it, fit a
//! [`basis`], project to a [`CoefficientMatrix`], fit a [`gmm`] generator,
//! sample, reconstruct, and score the result with [`benchmark`].
//! Every artifact crosses process boundaries through [`coeffio`].

pub mod basis;
pub mod benchmark;
pub mod coeffio;
pub mod coeffs;
pub mod error;
pub mod gmm;
pub mod ingest;
pub mod kde;
pub mod linalg;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod wavelet;

pub use basis::{BasisModel, IcaBasis, IcaOptions, Nonlinearity, PcaBasis, TuckerBasis};
pub use benchmark::{BenchmarkReport, NllCurveConfig, ReferenceModel};
pub use coeffs::CoefficientMatrix;
pub use error::{Error, Result};
pub use gmm::{CovarianceType, GmmModel};
pub use ingest::{DatasetTensor, PreprocessConfig, PreprocessMode, ValueDomain};
pub use kde::{BandwidthRule, KdeModel};
