//! End-to-end runs of the `hybridgen` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hybridgen::coeffio::read_container;
use hybridgen::ingest::{encode_idx, read_dataset, synth_garments};

fn hg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn hybridgen")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hg(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    hg(dir, args).status.code().unwrap()
}

fn small_pipeline(dir: &Path) {
    ok(dir, &["synth-garments", "--n", "200", "--seed", "4", "--out", "real.hgmc"]);
    ok(dir, &["fit-basis", "pca", "--data", "real.hgmc", "--d", "20", "--out", "basis"]);
    ok(dir, &["project", "--basis", "basis", "--data", "real.hgmc", "--out", "c.hgmc"]);
    ok(dir, &["fit-gmm", "--coeffs", "c.hgmc", "--k", "2", "--seed", "1", "--out", "gen"]);
    ok(dir, &["sample", "--model", "gen", "--n", "150", "--seed", "2", "--out", "s.hgmc"]);
    ok(dir, &["reconstruct", "--basis", "basis", "--coeffs", "s.hgmc", "--out", "images.hgmc"]);
    ok(dir, &["fit-reference", "--data", "real.hgmc", "--k", "2", "--out", "ref"]);
    ok(
        dir,
        &[
            "evaluate", "--reference", "ref", "--real", "real.hgmc", "--generated", "images.hgmc", "--kde-reduce",
            "10", "--out", "report.txt", "--nll-csv", "nll.csv",
        ],
    );
}

#[test]
fn pipeline_is_deterministic_across_directories() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_pipeline(a.path());
    small_pipeline(b.path());
    for f in ["report.txt", "nll.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    for f in ["s.hgmc", "images.hgmc", "c.hgmc", "gen/gmm.hgmc", "ref/gmm.hgmc"] {
        let mut ca = read_container(a.path().join(f)).unwrap();
        let mut cb = read_container(b.path().join(f)).unwrap();
        assert!(ca.metadata.remove("created").is_some());
        cb.metadata.remove("created");
        assert_eq!(ca, cb, "{f}");
    }

    let report = fs::read_to_string(a.path().join("report.txt")).unwrap();
    assert!(report.starts_with("model_id="));
    assert!(report.contains("\nbasis_id=pca20\n"));
    assert!(report.contains("config.command=evaluate\n"));
    assert!(report.contains("config.curve.grid_points=512\n"));
    assert!(report.contains("config.generated.input.coeffs.param.seed=2\n"));
    assert!(!report.contains(&a.path().display().to_string()));

    let manifest = fs::read_to_string(a.path().join("report.txt.manifest")).unwrap();
    assert!(manifest.contains("path.out=report.txt"));
    assert!(manifest.contains("wall_clock.evaluate="));

    let csv = fs::read_to_string(a.path().join("nll.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("set,index,nll"));
    assert_eq!(csv.lines().count(), 1 + 200 + 150);
}

#[test]
fn artifacts_carry_provenance() {
    let d = tempfile::tempdir().unwrap();
    small_pipeline(d.path());
    let gen = read_container(d.path().join("gen/gmm.hgmc")).unwrap();
    assert_eq!(gen.meta("command"), Some("fit-gmm"));
    assert_eq!(gen.meta("param.k"), Some("2"));
    assert_eq!(gen.meta("role"), Some("generator"));
    assert_eq!(gen.meta("basis_id"), Some("pca20"));
    assert_eq!(gen.meta("config_hash").map(str::len), Some(64));
    let s = read_container(d.path().join("s.hgmc")).unwrap();
    assert_eq!(s.meta("input.model.param.seed"), Some("1"));
    assert!(s.metadata.keys().all(|k| !k.starts_with("path.")));
}

#[test]
fn plot_and_sweep_outputs() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    small_pipeline(p);
    ok(p, &["plot", "--nll-csv", "nll.csv", "--svg", "curves.svg", "--csv", "curves.csv", "--grid-points", "64"]);
    let svg = fs::read_to_string(p.join("curves.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    assert_eq!(fs::read_to_string(p.join("curves.csv")).unwrap().lines().count(), 65);

    let stdout = ok(p, &["sweep-d", "pca", "--data", "real.hgmc", "--dims", "2,5,10,40", "--threshold", "1e9", "--out", "sweep.csv"]);
    assert!(stdout.contains('2'), "{stdout}");
    let sweep = fs::read_to_string(p.join("sweep.csv")).unwrap();
    let errs: Vec<f64> = sweep.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 4);
    assert!(errs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn other_bases_and_sources() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth-xgc", "--n", "40", "--size", "16", "--seed", "1", "--out", "xgc.hgmc"]);
    ok(p, &["fit-basis", "tucker", "--data", "xgc.hgmc", "--ranks", "6x5", "--preprocess", "zscore", "--out", "tk"]);
    ok(p, &["project", "--basis", "tk", "--data", "xgc.hgmc", "--out", "tc.hgmc"]);
    assert_eq!(read_container(p.join("tc.hgmc")).unwrap().cols, 30);
    ok(p, &["fit-basis", "identity", "--data", "xgc.hgmc", "--preprocess", "none", "--out", "id"]);
    ok(p, &["fit-basis", "ica", "--data", "xgc.hgmc", "--d", "8", "--preprocess", "zscore", "--seed", "3", "--out", "ica"]);
    ok(p, &["project", "--basis", "ica", "--data", "xgc.hgmc", "--out", "ic.hgmc"]);
    assert_eq!(read_container(p.join("ic.hgmc")).unwrap().cols, 8);

    let g = synth_garments(5, 2).unwrap();
    fs::write(p.join("g.idx"), encode_idx(&g)).unwrap();
    ok(p, &["ingest", "--idx", "g.idx", "--limit", "3", "--id", "tiny", "--out", "tiny.hgmc"]);
    let (t, _) = read_dataset(p.join("tiny.hgmc")).unwrap();
    assert_eq!((t.id.as_str(), t.n(), t.height(), t.width()), ("tiny", 3, 28, 28));
}

#[test]
fn config_file_with_flag_override() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("run.cfg"), "# garments\nn = 30\nseed = 9\n").unwrap();
    ok(p, &["--config", "run.cfg", "synth-garments", "--out", "a.hgmc"]);
    ok(p, &["--config", "run.cfg", "synth-garments", "--n", "12", "--out", "b.hgmc"]);
    let a = read_container(p.join("a.hgmc")).unwrap();
    let b = read_container(p.join("b.hgmc")).unwrap();
    assert_eq!(a.meta("param.n"), Some("30"));
    assert_eq!(b.meta("param.n"), Some("12"));
    assert_eq!(b.meta("param.seed"), Some("9"));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(p, &["no-such-command"]), 2);
    assert_eq!(code(p, &["synth-garments"]), 2);
    ok(p, &["synth-garments", "--n", "60", "--seed", "1", "--out", "g.hgmc"]);
    ok(p, &["fit-reference", "--data", "g.hgmc", "--k", "1", "--out", "ref"]);
    assert_eq!(code(p, &["sample", "--model", "ref", "--n", "5", "--out", "x.hgmc"]), 2);
    assert_eq!(code(p, &["fit-basis", "svd", "--data", "g.hgmc", "--out", "b"]), 2);
    assert_eq!(code(p, &["fit-basis", "pca", "--data", "g.hgmc", "--d", "4", "--preprocess", "bogus", "--out", "b"]), 2);

    fs::write(p.join("junk.hgmc"), b"XXXXnot a container").unwrap();
    assert_eq!(code(p, &["fit-basis", "pca", "--data", "junk.hgmc", "--d", "4", "--out", "b"]), 3);
    assert_eq!(code(p, &["fit-basis", "pca", "--data", "missing.hgmc", "--d", "4", "--out", "b"]), 3);
    assert_eq!(code(p, &["fit-basis", "pca", "--data", "g.hgmc", "--d", "5000", "--out", "b"]), 3);

    ok(p, &["fit-basis", "pca", "--data", "g.hgmc", "--d", "4", "--out", "b4"]);
    ok(p, &["fit-basis", "pca", "--data", "g.hgmc", "--d", "6", "--out", "b6"]);
    ok(p, &["project", "--basis", "b4", "--data", "g.hgmc", "--out", "c4.hgmc"]);
    assert_eq!(code(p, &["reconstruct", "--basis", "b6", "--coeffs", "c4.hgmc", "--out", "r.hgmc"]), 2);
}
