//! Single-level separable 2D DWT with the bior1.3 filter bank and half-point
//! symmetric boundary extension.
//!
//! Analysis uses full convolution followed by downsampling, keeping
//! `(n + 5) / 2` samples per axis (16 for 28, 18 for 32). Synthesis
//! upsamples, convolves with the reconstruction filters and keeps the
//! central `2m - 4` samples, cropped to the original length, which gives
//! perfect reconstruction for both even and odd sizes.
//!
//! Subbands are named horizontal-then-vertical: `lh` is low-pass along rows
//! and high-pass along columns (horizontal edges), `hl` the converse.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::coeffs::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::ingest::DatasetTensor;

pub const FILTER_LEN: usize = 6;

const R: f64 = FRAC_1_SQRT_2;
const E: f64 = FRAC_1_SQRT_2 / 8.0;

/// bior1.3 analysis low-pass: (1/sqrt 2) {-1/8, 1/8, 1, 1, 1/8, -1/8}.
pub const DEC_LO: [f64; FILTER_LEN] = [-E, E, R, R, E, -E];
pub const DEC_HI: [f64; FILTER_LEN] = [0.0, 0.0, -R, R, 0.0, 0.0];
pub const REC_LO: [f64; FILTER_LEN] = [0.0, 0.0, R, R, 0.0, 0.0];
pub const REC_HI: [f64; FILTER_LEN] = [-E, -E, R, -R, E, E];

/// Number of coefficients per subband along an axis of length `n`.
pub fn subband_len(n: usize) -> usize {
    (n + FILTER_LEN - 1) / 2
}

/// Length of the benchmark feature vector for an `h x w` image (all
/// subbands except HH).
pub fn feature_len(h: usize, w: usize) -> usize {
    3 * subband_len(h) * subband_len(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwtCoeffs {
    pub ll: DMatrix<f64>,
    pub lh: DMatrix<f64>,
    pub hl: DMatrix<f64>,
    pub hh: DMatrix<f64>,
    pub source_dims: (usize, usize),
}

impl DwtCoeffs {
    pub fn subband_shape(&self) -> (usize, usize) {
        self.ll.shape()
    }
}

/// Half-point symmetric index: ... x1 x0 | x0 x1 ... x(n-1) | x(n-1) x(n-2) ...
#[inline]
fn reflect(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn analyze(x: &[f64], lo: &mut [f64], hi: &mut [f64]) {
    let n = x.len() as isize;
    for k in 0..lo.len() {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..FILTER_LEN {
            let v = x[reflect(2 * k as isize + 1 - j as isize, n)];
            a += DEC_LO[j] * v;
            d += DEC_HI[j] * v;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

fn synthesize(lo: &[f64], hi: &[f64], out: &mut [f64]) {
    let m = lo.len() as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        // full convolution of the upsampled signal, offset by L - 2
        let t = i as isize + FILTER_LEN as isize - 2;
        let k_lo = ((t - FILTER_LEN as isize + 1 + 1) / 2).max(0);
        let k_hi = (t / 2).min(m - 1);
        for k in k_lo..=k_hi {
            let j = (t - 2 * k) as usize;
            acc += REC_LO[j] * lo[k as usize] + REC_HI[j] * hi[k as usize];
        }
        *o = acc;
    }
}

pub fn dwt2(image: &DMatrix<f64>) -> Result<DwtCoeffs> {
    let (h, w) = image.shape();
    if h < FILTER_LEN || w < FILTER_LEN {
        return Err(Error::Dimension(format!(
            "image {h}x{w} smaller than the {FILTER_LEN}-tap filter support"
        )));
    }
    let (mh, mw) = (subband_len(h), subband_len(w));

    // along rows
    let mut row_lo = DMatrix::zeros(h, mw);
    let mut row_hi = DMatrix::zeros(h, mw);
    let mut buf = vec![0.0; w];
    let (mut lo, mut hi) = (vec![0.0; mw], vec![0.0; mw]);
    for r in 0..h {
        buf.iter_mut().zip(image.row(r).iter()).for_each(|(b, v)| *b = *v);
        analyze(&buf, &mut lo, &mut hi);
        for c in 0..mw {
            row_lo[(r, c)] = lo[c];
            row_hi[(r, c)] = hi[c];
        }
    }

    // along columns
    let columns = |m: &DMatrix<f64>| {
        let mut l = DMatrix::zeros(mh, mw);
        let mut d = DMatrix::zeros(mh, mw);
        let (mut lo, mut hi) = (vec![0.0; mh], vec![0.0; mh]);
        for c in 0..mw {
            analyze(m.column(c).as_slice(), &mut lo, &mut hi);
            l.column_mut(c).copy_from_slice(&lo);
            d.column_mut(c).copy_from_slice(&hi);
        }
        (l, d)
    };
    let (ll, lh) = columns(&row_lo);
    let (hl, hh) = columns(&row_hi);
    Ok(DwtCoeffs {
        ll,
        lh,
        hl,
        hh,
        source_dims: (h, w),
    })
}

pub fn idwt2(c: &DwtCoeffs) -> Result<DMatrix<f64>> {
    let (h, w) = c.source_dims;
    let (mh, mw) = (subband_len(h), subband_len(w));
    for (name, m) in [("ll", &c.ll), ("lh", &c.lh), ("hl", &c.hl), ("hh", &c.hh)] {
        if m.shape() != (mh, mw) {
            return Err(Error::Dimension(format!(
                "subband {name} is {:?}, expected {mh}x{mw} for a {h}x{w} image",
                m.shape()
            )));
        }
    }
    // undo the column transform
    let columns = |lo_band: &DMatrix<f64>, hi_band: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(h, mw);
        let mut buf = vec![0.0; h];
        for col in 0..mw {
            synthesize(lo_band.column(col).as_slice(), hi_band.column(col).as_slice(), &mut buf);
            out.column_mut(col).copy_from_slice(&buf);
        }
        out
    };
    let row_lo = columns(&c.ll, &c.lh);
    let row_hi = columns(&c.hl, &c.hh);

    let mut out = DMatrix::zeros(h, w);
    let (mut lo, mut hi) = (vec![0.0; mw], vec![0.0; mw]);
    let mut buf = vec![0.0; w];
    for r in 0..h {
        for k in 0..mw {
            lo[k] = row_lo[(r, k)];
            hi[k] = row_hi[(r, k)];
        }
        synthesize(&lo, &hi, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            out[(r, k)] = *v;
        }
    }
    Ok(out)
}

/// Per image: vectorized LL, LH, HL (row-major, in that order); HH is
/// dropped.
pub fn dwt_features(data: &DatasetTensor) -> Result<CoefficientMatrix> {
    let d = feature_len(data.height(), data.width());
    let rows: Vec<Vec<f64>> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let c = dwt2(&data.image_matrix(i))?;
            let mut v = Vec::with_capacity(d);
            for band in [&c.ll, &c.lh, &c.hl] {
                for r in 0..band.nrows() {
                    v.extend(band.row(r).iter());
                }
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    CoefficientMatrix::new(m, "dwt-bior1.3", data.id.clone())
}
