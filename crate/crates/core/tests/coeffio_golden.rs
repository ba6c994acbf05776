//! Golden containers written by an independent Python encoder must decode
//! to the expected values and re-encode to the same bytes.

use std::path::{Path, PathBuf};

use hybridgen::coeffio::{read_container, Container, ContainerKind, Metadata};
use hybridgen::coeffs::{read_coeffs, write_coeffs};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

const COEFFS: [f64; 12] = [
    0.1,
    -0.0,
    1.0 / 3.0,
    5e-324,
    -2.5,
    1e300,
    -1e-300,
    42.0,
    std::f64::consts::PI,
    -7.25,
    0.0,
    9.5367431640625e-7,
];

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn golden_coefficient_matrix_decodes_bit_exactly() {
    let c = read_container(data("golden_coeffs.hgmc")).unwrap();
    assert_eq!(c.kind, ContainerKind::CoefficientMatrix);
    assert_eq!((c.rows, c.cols), (3, 4));
    assert_eq!(bits(&c.payload), bits(&COEFFS));
    assert_eq!(c.meta("basis_id"), Some("ica400"));
    assert_eq!(c.meta("seed"), Some("7"));

    let m = read_coeffs(data("golden_coeffs.hgmc")).unwrap();
    assert_eq!(m.basis_id, "ica400");
    assert_eq!(m.dataset_id, "garments-1k");
    assert_eq!(m.provenance["preprocess"], "logit:0.001:1");
    assert_eq!(m.row(1)[1].to_bits(), 1e300f64.to_bits());
    assert!(m.values()[(0, 1)].is_sign_negative());
}

#[test]
fn rust_encoder_reproduces_golden_bytes() {
    for name in ["golden_coeffs.hgmc", "golden_vector.hgmc"] {
        let bytes = std::fs::read(data(name)).unwrap();
        let c = read_container(data(name)).unwrap();
        assert_eq!(c.encode().unwrap(), bytes, "{name}");
    }

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("again.hgmc");
    write_coeffs(&read_coeffs(data("golden_coeffs.hgmc")).unwrap(), &out).unwrap();
    assert_eq!(std::fs::read(out).unwrap(), std::fs::read(data("golden_coeffs.hgmc")).unwrap());
}

#[test]
fn golden_vector() {
    let c = read_container(data("golden_vector.hgmc")).unwrap();
    assert_eq!(c.kind, ContainerKind::Vector);
    assert_eq!(c.to_vector().as_slice(), &[1.0, -1.0, 0.5, 1e-12, 123456.789]);
    let rebuilt = Container::from_vector(&[1.0, -1.0, 0.5, 1e-12, 123456.789], Metadata::from([("content".into(), "weights".into())]));
    assert_eq!(rebuilt.encode().unwrap(), std::fs::read(data("golden_vector.hgmc")).unwrap());
}

#[test]
fn header_fields_at_fixed_offsets() {
    let bytes = std::fs::read(data("golden_coeffs.hgmc")).unwrap();
    assert_eq!(&bytes[..4], b"HGMC");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(bytes[6], 1);
    assert_eq!(u64::from_le_bytes(bytes[7..15].try_into().unwrap()), 3);
    assert_eq!(u64::from_le_bytes(bytes[15..23].try_into().unwrap()), 4);
    assert_eq!(f64::from_le_bytes(bytes[23..31].try_into().unwrap()), 0.1);
    let text = std::str::from_utf8(&bytes[23 + 12 * 8..]).unwrap();
    assert_eq!(
        text,
        "basis_id=ica400\ncreated=0\ndataset_id=garments-1k\npreprocess=logit:0.001:1\nseed=7\n"
    );
}

#[test]
fn corrupted_golden_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = std::fs::read(data("golden_coeffs.hgmc")).unwrap();
    let p = dir.path().join("v2.hgmc");
    bytes[4] = 2;
    std::fs::write(&p, &bytes).unwrap();
    assert_eq!(read_container(&p).unwrap_err().exit_code(), 3);

    bytes[4] = 1;
    bytes.truncate(23 + 40);
    std::fs::write(&p, &bytes).unwrap();
    assert!(read_container(&p).is_err());
}
