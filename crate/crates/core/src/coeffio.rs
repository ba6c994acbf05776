//! Binary container shared by every stage of the pipeline and by external
//! trainers.
//!
//! Layout (all integers and floats little-endian, independent of host):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HGMC"
//! 4       2     version (u16), currently 1
//! 6       1     kind (u8): 1 = coefficient matrix, 2 = matrix, 3 = vector
//! 7       8     rows (u64)
//! 15      8     cols (u64)
//! 23      8*r*c payload, f64 row-major
//! ...           metadata: UTF-8 `key=value` lines, each terminated by '\n',
//!               until end of file
//! ```
//!
//! Vectors are stored with `cols = 1`. Metadata keys are unique, may not be
//! empty and may not contain `=` or a newline; values may not contain a
//! newline. Writers emit keys in sorted order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"HGMC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 23;

pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ContainerKind {
    CoefficientMatrix = 1,
    Matrix = 2,
    Vector = 3,
}

impl TryFrom<u8> for ContainerKind {
    type Error = u8;

    fn try_from(value: u8) -> std::result::Result<Self, u8> {
        match value {
            1 => Ok(ContainerKind::CoefficientMatrix),
            2 => Ok(ContainerKind::Matrix),
            3 => Ok(ContainerKind::Vector),
            other => Err(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub rows: usize,
    pub cols: usize,
    /// Row-major payload of `rows * cols` values.
    pub payload: Vec<f64>,
    pub metadata: Metadata,
}

impl Container {
    pub fn from_matrix(kind: ContainerKind, m: &DMatrix<f64>, metadata: Metadata) -> Self {
        let mut payload = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            payload.extend(m.row(r).iter());
        }
        Container {
            kind,
            rows: m.nrows(),
            cols: m.ncols(),
            payload,
            metadata,
        }
    }

    pub fn from_vector(v: &[f64], metadata: Metadata) -> Self {
        Container {
            kind: ContainerKind::Vector,
            rows: v.len(),
            cols: 1,
            payload: v.to_vec(),
            metadata,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.payload)
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.payload)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Fetch a required metadata entry, reporting `path` on absence.
    pub fn require(&self, key: &str, path: &Path) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::format(path, format!("missing metadata key `{key}`")))
    }

    pub fn require_parsed<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self.require(key, path)?;
        raw.parse()
            .map_err(|_| Error::format(path, format!("metadata `{key}` has invalid value `{raw}`")))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let expected = payload_bytes(self.rows as u64, self.cols as u64)
            .ok_or_else(|| Error::Dimension(format!("{}x{} payload overflows", self.rows, self.cols)))?;
        if self.payload.len() * 8 != expected as usize {
            return Err(Error::Dimension(format!(
                "payload has {} values, header says {}x{}",
                self.payload.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + expected as usize + 64);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (k, v) in &self.metadata {
            if k.is_empty() || k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(Error::Config(format!("metadata entry `{k}` cannot be encoded")));
            }
            out.extend_from_slice(k.as_bytes());
            out.push(b'=');
            out.extend_from_slice(v.as_bytes());
            out.push(b'\n');
        }
        Ok(out)
    }

    /// `path` only labels errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(Error::format(path, "bad magic, expected \"HGMC\""));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "truncated header",
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let kind = ContainerKind::try_from(bytes[6])
            .map_err(|k| Error::format(path, format!("unknown container kind {k}")))?;
        let rows = u64::from_le_bytes(bytes[7..15].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[15..23].try_into().unwrap());
        let len = payload_bytes(rows, cols)
            .ok_or_else(|| Error::format(path, format!("{rows}x{cols} payload overflows")))?;
        let end = (HEADER_LEN as u64)
            .checked_add(len)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| {
                Error::Io(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    format!("payload truncated: need {len} bytes"),
                ))
            })? as usize;
        let payload = bytes[HEADER_LEN..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let text = std::str::from_utf8(&bytes[end..])
            .map_err(|_| Error::format(path, "metadata is not valid UTF-8"))?;
        let mut metadata = Metadata::new();
        for line in text.split_terminator('\n') {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("metadata line `{line}` lacks '='")))?;
            if metadata.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::format(path, format!("duplicate metadata key `{k}`")));
            }
        }
        Ok(Container {
            kind,
            rows: rows as usize,
            cols: cols as usize,
            payload,
            metadata,
        })
    }
}

/// Byte length of a `rows x cols` payload, rejecting anything beyond 2^63.
fn payload_bytes(rows: u64, cols: u64) -> Option<u64> {
    rows.checked_mul(cols)?
        .checked_mul(8)
        .filter(|&b| b <= i64::MAX as u64)
}

pub fn write_container(c: &Container, path: impl AsRef<Path>) -> Result<()> {
    let bytes = c.encode()?;
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    Container::decode(&bytes, path)
}

/// Wall-clock stamp for the `created` key. Honors `SOURCE_DATE_EPOCH` so
/// reproducible runs can pin it.
pub fn created_stamp() -> String {
    if let Ok(s) = std::env::var("SOURCE_DATE_EPOCH") {
        return s;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Container {
        let mut md = Metadata::new();
        md.insert("basis_id".into(), "pca".into());
        md.insert("seed".into(), "3".into());
        Container {
            kind: ContainerKind::Matrix,
            rows: 2,
            cols: 3,
            payload: vec![1.0, -2.0, 3.5, 0.0, f64::MIN_POSITIVE, 1e300],
            metadata: md,
        }
    }

    #[test]
    fn golden_layout() {
        let c = Container {
            kind: ContainerKind::Vector,
            rows: 1,
            cols: 1,
            payload: vec![1.0],
            metadata: [("k".to_string(), "v".to_string())].into(),
        };
        let bytes = c.encode().unwrap();
        let expected: Vec<u8> = [
            &b"HGMC"[..],
            &[1, 0],
            &[3],
            &[1, 0, 0, 0, 0, 0, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0, 0xf0, 0x3f],
            b"k=v\n",
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample().encode().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = Container::decode(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut bytes = sample().encode().unwrap();
        bytes[4] = 2;
        let err = Container::decode(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("unsupported version 2"));
    }

    #[test]
    fn truncated_payload() {
        let bytes = sample().encode().unwrap();
        let err = Container::decode(&bytes[..40], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err}");
        let err = Container::decode(&bytes[..10], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err}");
    }

    #[test]
    fn overflowing_dims_rejected() {
        let mut bytes = sample().encode().unwrap();
        bytes[7..15].copy_from_slice(&(1u64 << 40).to_le_bytes());
        bytes[15..23].copy_from_slice(&(1u64 << 40).to_le_bytes());
        let err = Container::decode(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("overflows"));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let mut bytes = sample().encode().unwrap();
        bytes.extend_from_slice(b"seed=4\n");
        assert!(Container::decode(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn unknown_kind_rejected() {
        let mut bytes = sample().encode().unwrap();
        bytes[6] = 9;
        assert!(Container::decode(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.hgmc");
        let c = sample();
        write_container(&c, &p).unwrap();
        let back = read_container(&p).unwrap();
        assert_eq!(back.encode().unwrap(), c.encode().unwrap());
    }

    proptest! {
        #[test]
        fn bytes_roundtrip(rows in 0usize..6, cols in 0usize..6, bits in proptest::collection::vec(any::<u64>(), 36),
                           key in "[a-z_]{1,8}", val in "[ -~]{0,12}") {
            let payload: Vec<f64> = bits[..rows * cols].iter().map(|b| f64::from_bits(*b)).collect();
            let c = Container { kind: ContainerKind::CoefficientMatrix, rows, cols, payload,
                                metadata: [(key, val)].into() };
            let bytes = c.encode().unwrap();
            let back = Container::decode(&bytes, Path::new("p")).unwrap();
            prop_assert_eq!(back.encode().unwrap(), bytes);
            let back_bits: Vec<u64> = back.payload.iter().map(|v| v.to_bits()).collect();
            let orig_bits: Vec<u64> = c.payload.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(back_bits, orig_bits);
        }
    }
}
