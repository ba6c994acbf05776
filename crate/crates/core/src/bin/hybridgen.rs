//! Command-line front end for the hybrid generative pipeline.
//!
//! Each subcommand runs one stage, writes its artifact plus a
//! `<artifact>.manifest` sidecar, and exits with 0 (ok), 2 (usage or
//! configuration), 3 (data) or 4 (numerical failure).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use hybridgen::basis::{hosvd, mean_l2_error, BasisModel, IcaBasis, IcaOptions, Nonlinearity, PcaBasis};
use hybridgen::benchmark::{
    build_reference, density_curves, evaluate, IntervalRule, KdeReference, NllCurveConfig, ReferenceConfig,
    ReferenceModel, ReportLabels,
};
use hybridgen::coeffio::{created_stamp, read_container, Metadata};
use hybridgen::coeffs::{read_coeffs, write_coeffs};
use hybridgen::gmm::{fit_em, CovarianceType, GmmConfig, GmmModel};
use hybridgen::ingest::{
    evaluation_view, load_idx, preprocess, read_dataset, synth_garments, synth_xgc, write_dataset, DatasetTensor,
    PreprocessConfig, XgcSurrogateConfig,
};
use hybridgen::kde::BandwidthRule;
use hybridgen::manifest::{digest_values, RunManifest};
use hybridgen::pipeline::coefficients_to_images;
use hybridgen::plot::{curves_csv, curves_svg};
use hybridgen::{CoefficientMatrix, Error, Result};

#[derive(Parser)]
#[command(name = "hybridgen", version, about = "Generative modeling of 2D datasets in representation-basis coefficient space")]
struct Cli {
    /// Flat `key=value` config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load an IDX image file (or a dataset container) into a dataset container.
    Ingest(IngestArgs),
    /// Generate the surrogate velocity-histogram dataset.
    SynthXgc(SynthXgcArgs),
    /// Generate the surrogate garment-silhouette dataset.
    SynthGarments(SynthGarmentsArgs),
    /// Fit a representation basis on a dataset.
    FitBasis(FitBasisArgs),
    /// Project a dataset onto a basis.
    Project(ProjectArgs),
    /// Fit a Gaussian mixture generator on coefficients.
    FitGmm(FitGmmArgs),
    /// Fit the DWT-GMM reference model used by `evaluate`.
    FitReference(FitReferenceArgs),
    /// Draw coefficient samples from a generator mixture.
    Sample(SampleArgs),
    /// Map coefficients back to images.
    Reconstruct(ReconstructArgs),
    /// Score generated images against real ones.
    Evaluate(EvaluateArgs),
    /// Write the NLL density curves of an evaluation as SVG and CSV.
    Plot(PlotArgs),
    /// Reconstruction error as a function of the number of coefficients.
    SweepD(SweepArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// IDX unsigned-byte image file.
    #[arg(long, conflicts_with = "input")]
    idx: Option<PathBuf>,
    /// Existing dataset container.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Keep only the first N images.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthXgcArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthGarmentsArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitBasisArgs {
    /// identity, pca, ica or tucker
    kind: String,
    #[arg(long)]
    data: PathBuf,
    /// Number of coefficients (pca, ica).
    #[arg(long)]
    d: Option<usize>,
    /// Spatial Tucker ranks as ROWSxCOLS.
    #[arg(long)]
    ranks: Option<String>,
    /// `logit[:epsilon:beta]`, `zscore` or `none`.
    #[arg(long)]
    preprocess: Option<String>,
    /// Center the data before PCA.
    #[arg(long)]
    centered: bool,
    #[arg(long)]
    contrast: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    basis: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitGmmArgs {
    #[arg(long)]
    coeffs: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// full, diagonal or auto
    #[arg(long)]
    covariance: Option<String>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitReferenceArgs {
    /// Real images (before preprocessing).
    #[arg(long)]
    data: PathBuf,
    /// Preprocessing whose roundtrip defines the evaluation view.
    #[arg(long)]
    preprocess: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated component counts; the one with the lowest held-out
    /// mean NLL wins.
    #[arg(long)]
    k_candidates: Option<String>,
    #[arg(long)]
    covariance: Option<String>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    basis: PathBuf,
    #[arg(long)]
    coeffs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    reference: PathBuf,
    /// Real images (before preprocessing).
    #[arg(long)]
    real: PathBuf,
    /// Generated images from `reconstruct`.
    #[arg(long)]
    generated: PathBuf,
    /// `percentile:LO:HI` or `fixed:A:B`.
    #[arg(long)]
    interval: Option<String>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// scott, silverman or fixed:H
    #[arg(long)]
    kde_bandwidth: Option<String>,
    /// PCA dimension for the KDE reference; 0 keeps pixel space.
    #[arg(long)]
    kde_reduce: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    nll_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Per-sample NLL CSV written by `evaluate --nll-csv`.
    #[arg(long)]
    nll_csv: PathBuf,
    #[arg(long)]
    interval: Option<String>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    svg: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// pca, ica or tucker
    kind: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    preprocess: Option<String>,
    /// Comma-separated dimensions (for tucker: square ranks r, d = r*r).
    #[arg(long)]
    dims: Option<String>,
    /// Report the smallest d with mean error at or below this value.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    centered: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Resolves flags against the config file and records the result.
struct Params {
    file: BTreeMap<String, String>,
    manifest: RunManifest,
}

impl Params {
    fn new(command: &str, config: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(p) = config {
            let text = fs::read_to_string(p)?;
            for (no, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", p.display(), no + 1)))?;
                file.insert(k.trim().replace('-', "_"), v.trim().trim_matches('"').to_string());
            }
        }
        Ok(Params { file, manifest: RunManifest::new(command) })
    }

    fn get<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw
                    .parse()
                    .map_err(|_| Error::Config(format!("config value `{key}={raw}` is malformed")))?,
                None => default,
            },
        };
        self.manifest.set(key, v.to_string());
        Ok(v)
    }

    fn get_opt<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    raw.parse()
                        .map_err(|_| Error::Config(format!("config value `{key}={raw}` is malformed")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.manifest.set(key, v.to_string());
        }
        Ok(v)
    }

    fn input_dataset(&mut self, name: &str, path: &Path) -> Result<(DatasetTensor, Metadata)> {
        self.manifest.set_path(name, path);
        let (data, md) = read_dataset(path)?;
        self.manifest.add_input(name, &md);
        self.manifest.add_digest(name, digest_values(data.n(), data.area(), data.values()));
        Ok((data, md))
    }

    fn input_coeffs(&mut self, name: &str, path: &Path) -> Result<CoefficientMatrix> {
        self.manifest.set_path(name, path);
        let c = read_coeffs(path)?;
        self.manifest.add_input(name, &c.provenance);
        self.manifest
            .add_digest(name, digest_values(c.n(), c.d(), c.values().transpose().as_slice()));
        Ok(c)
    }

    fn input_dir(&mut self, name: &str, path: &Path, md: &Metadata) {
        self.manifest.set_path(name, path);
        self.manifest.add_input(name, md);
    }

    /// Provenance for an output artifact, with its creation stamp.
    fn stamp(&self) -> Metadata {
        let mut md = self.manifest.provenance();
        md.insert("created".into(), created_stamp());
        md
    }

    fn finish(&mut self, out: &Path) -> Result<()> {
        self.manifest.set_path("out", out);
        self.manifest.write_beside(out)?;
        Ok(())
    }
}

fn parse_interval(s: &str) -> Result<IntervalRule> {
    let bad = || Error::Config(format!("malformed interval `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let (a, b) = match parts[..] {
        [_, a, b] => (a.parse::<f64>().map_err(|_| bad())?, b.parse::<f64>().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    match parts[0] {
        "percentile" => Ok(IntervalRule::Percentile(a, b)),
        "fixed" => Ok(IntervalRule::Fixed(a, b)),
        _ => Err(bad()),
    }
}

fn parse_covariance(s: &str, n: usize, d: usize, k: usize) -> Result<CovarianceType> {
    if s == "auto" {
        let ct = CovarianceType::auto(n, d, k);
        log::info!("covariance type {ct} for N={n}, d={d}, K={k}");
        Ok(ct)
    } else {
        s.parse()
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("malformed list `{s}`"))))
        .collect()
}

fn preprocess_config(p: &mut Params, flag: Option<String>) -> Result<PreprocessConfig> {
    let tag = p.get("preprocess", flag, "logit".to_string())?;
    let tag = if tag == "logit" { PreprocessConfig::default().tag() } else { tag };
    PreprocessConfig::from_tag(&tag)
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Ingest(a) => {
            let mut p = Params::new("ingest", config)?;
            let mut data = match (&a.idx, &a.input) {
                (Some(idx), _) => {
                    p.manifest.set_path("idx", idx);
                    let d = load_idx(idx)?;
                    p.manifest.add_digest("idx", digest_values(d.n(), d.area(), d.values()));
                    d
                }
                (None, Some(input)) => p.input_dataset("input", input)?.0,
                (None, None) => return Err(Error::Config("ingest needs --idx or --input".into())),
            };
            if let Some(limit) = p.get_opt("limit", a.limit)? {
                data = data.head(limit);
            }
            if let Some(id) = p.get_opt("id", a.id)? {
                data.id = id;
            }
            write_dataset(&data, &a.out, &p.stamp())?;
            p.finish(&a.out)
        }
        Command::SynthXgc(a) => {
            let mut p = Params::new("synth-xgc", config)?;
            let d = XgcSurrogateConfig::default();
            let size = p.get("size", a.size, d.height)?;
            let cfg = XgcSurrogateConfig {
                n_nodes: p.get("n", a.n, d.n_nodes)?,
                height: size,
                width: size,
                seed: p.get("seed", a.seed, d.seed)?,
                ..d
            };
            let data = p.manifest.time("generate", || synth_xgc(&cfg))?;
            write_dataset(&data, &a.out, &p.stamp())?;
            p.finish(&a.out)
        }
        Command::SynthGarments(a) => {
            let mut p = Params::new("synth-garments", config)?;
            let n = p.get("n", a.n, 1000)?;
            let seed = p.get("seed", a.seed, 0)?;
            let data = synth_garments(n, seed)?;
            write_dataset(&data, &a.out, &p.stamp())?;
            p.finish(&a.out)
        }
        Command::FitBasis(a) => {
            let mut p = Params::new("fit-basis", config)?;
            p.manifest.set("kind", &a.kind);
            let (data, _) = p.input_dataset("data", &a.data)?;
            let pre = preprocess_config(&mut p, a.preprocess)?;
            let x = preprocess(&data, &pre)?;
            let need_d = |p: &mut Params, flag| -> Result<usize> {
                p.get_opt("d", flag)?.ok_or_else(|| Error::Config(format!("fit-basis {} needs --d", a.kind)))
            };
            let basis = match a.kind.as_str() {
                "identity" | "pixel" => BasisModel::identity(x.area()),
                "pca" => {
                    let d = need_d(&mut p, a.d)?;
                    let centered = p.get("centered", a.centered.then_some(true), false)?;
                    let m = x.to_matrix();
                    BasisModel::Pca(p.manifest.time("fit", || PcaBasis::fit(&m, d, centered))?)
                }
                "ica" => {
                    let d = need_d(&mut p, a.d)?;
                    let opts = IcaOptions {
                        nonlinearity: p.get("contrast", a.contrast.map(|c| c.parse()).transpose()?, Nonlinearity::LogCosh)?,
                        seed: p.get("seed", a.seed, 0)?,
                        ..Default::default()
                    };
                    let m = x.to_matrix();
                    let b = p.manifest.time("fit", || IcaBasis::fit(&m, d, &opts))?;
                    if !b.converged {
                        log::warn!("FastICA stopped after {} iterations without converging", b.iterations_used);
                    }
                    BasisModel::Ica(b)
                }
                "tucker" => {
                    let raw = p
                        .get_opt("ranks", a.ranks)?
                        .ok_or_else(|| Error::Config("fit-basis tucker needs --ranks ROWSxCOLS".into()))?;
                    let (r, c) = raw
                        .split_once('x')
                        .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
                        .ok_or_else(|| Error::Config(format!("malformed ranks `{raw}`")))?;
                    BasisModel::Tucker(p.manifest.time("fit", || hosvd(&x, (0, r, c), false))?.basis)
                }
                other => return Err(Error::Config(format!("unknown basis `{other}`"))),
            };
            let mut md = p.stamp();
            md.insert("preprocess".into(), pre.tag());
            md.insert("height".into(), data.height().to_string());
            md.insert("width".into(), data.width().to_string());
            md.insert("dataset_id".into(), data.id.clone());
            basis.save(&a.out, &md)?;
            p.finish(&a.out.join("basis.hgmc"))
        }
        Command::Project(a) => {
            let mut p = Params::new("project", config)?;
            let (basis, bmd) = BasisModel::load(&a.basis)?;
            p.input_dir("basis", &a.basis, &bmd);
            let (data, _) = p.input_dataset("data", &a.data)?;
            let pre = PreprocessConfig::from_tag(bmd.get("preprocess").map(String::as_str).unwrap_or("none"))?;
            let x = preprocess(&data, &pre)?;
            let coeffs = p.manifest.time("project", || basis.project_dataset(&x))?;
            let mut md = p.stamp();
            md.insert("preprocess".into(), pre.tag());
            md.insert("height".into(), data.height().to_string());
            md.insert("width".into(), data.width().to_string());
            write_coeffs(&coeffs.with_provenance(md), &a.out)?;
            p.finish(&a.out)
        }
        Command::FitGmm(a) => {
            let mut p = Params::new("fit-gmm", config)?;
            let c = p.input_coeffs("coeffs", &a.coeffs)?;
            let k = p.get("k", a.k, 10)?;
            let cov = p.get("covariance", a.covariance, "auto".to_string())?;
            let cfg = GmmConfig {
                k,
                covariance_type: parse_covariance(&cov, c.n(), c.d(), k)?,
                reg: p.get_opt("reg", a.reg)?,
                seed: p.get("seed", a.seed, 0)?,
                max_iter: p.get("max_iter", a.max_iter, 500)?,
                tol: p.get("tol", a.tol, 1e-5)?,
            };
            let gmm = p.manifest.time("fit", || fit_em(c.values(), &cfg))?;
            let mut md = p.stamp();
            md.insert("role".into(), "generator".into());
            md.insert("basis_id".into(), c.basis_id.clone());
            md.insert("dataset_id".into(), c.dataset_id.clone());
            md.insert("resolved_covariance_type".into(), cfg.covariance_type.to_string());
            md.insert("iterations".into(), (gmm.fit_log.len() - 1).to_string());
            gmm.save(&a.out, &md)?;
            p.finish(&a.out.join("gmm.hgmc"))
        }
        Command::FitReference(a) => {
            let mut p = Params::new("fit-reference", config)?;
            let (data, _) = p.input_dataset("data", &a.data)?;
            let pre = preprocess_config(&mut p, a.preprocess)?;
            let view = evaluation_view(&data, &pre)?;
            let cov = p.get("covariance", a.covariance, "auto".to_string())?;
            let seed = p.get("seed", a.seed, 0)?;
            let reg = p.get_opt("reg", a.reg)?;
            let base = |k: usize| ReferenceConfig {
                k,
                covariance_type: if cov == "auto" { None } else { Some(cov.parse().unwrap_or(CovarianceType::Diagonal)) },
                reg,
                seed,
                ..Default::default()
            };
            if cov != "auto" {
                cov.parse::<CovarianceType>()?;
            }
            let k = match p.get_opt::<String>("k_candidates", a.k_candidates)? {
                Some(list) => {
                    let ks: Vec<usize> = parse_list(&list)?;
                    select_reference_k(&view, &ks, &base, &mut p.manifest)?
                }
                None => p.get("k", a.k, 10)?,
            };
            p.manifest.set("k", k);
            let reference = p.manifest.time("fit", || build_reference(&view, &base(k)))?;
            let mut md = p.stamp();
            md.insert("preprocess".into(), pre.tag());
            reference.save(&a.out, &md)?;
            p.finish(&a.out.join("gmm.hgmc"))
        }
        Command::Sample(a) => {
            let mut p = Params::new("sample", config)?;
            let (gmm, md_in) = GmmModel::load(&a.model)?;
            if md_in.get("role").map(String::as_str) == Some("reference") {
                return Err(Error::Config("the DWT reference model is a benchmark and cannot be sampled".into()));
            }
            p.input_dir("model", &a.model, &md_in);
            let n = p.get("n", a.n, 1000)?;
            let seed = p.get("seed", a.seed, 0)?;
            let y = p.manifest.time("sample", || gmm.sample(n, seed));
            let basis_id = md_in.get("basis_id").cloned().unwrap_or_default();
            let dataset_id = format!("{}-gmm-s{seed}", md_in.get("dataset_id").cloned().unwrap_or_default());
            let c = CoefficientMatrix::new(y, basis_id, dataset_id)?.with_provenance(p.stamp());
            write_coeffs(&c, &a.out)?;
            p.finish(&a.out)
        }
        Command::Reconstruct(a) => {
            let mut p = Params::new("reconstruct", config)?;
            let (basis, bmd) = BasisModel::load(&a.basis)?;
            p.input_dir("basis", &a.basis, &bmd);
            let c = p.input_coeffs("coeffs", &a.coeffs)?;
            if !c.basis_id.is_empty() && c.basis_id != basis.id() {
                return Err(Error::Config(format!(
                    "coefficients come from basis `{}`, not `{}`",
                    c.basis_id,
                    basis.id()
                )));
            }
            let hp = a.basis.join("basis.hgmc");
            let header = read_container(&hp)?;
            let h: usize = header.require_parsed("height", &hp)?;
            let w: usize = header.require_parsed("width", &hp)?;
            let pre = PreprocessConfig::from_tag(header.require("preprocess", &hp)?)?;
            let images = p
                .manifest
                .time("reconstruct", || coefficients_to_images(&basis, c.values(), h, w, &pre, &c.dataset_id))?;
            write_dataset(&images, &a.out, &p.stamp())?;
            p.finish(&a.out)
        }
        Command::Evaluate(a) => {
            let mut p = Params::new("evaluate", config)?;
            let (reference, rmd) = ReferenceModel::load(&a.reference)?;
            p.input_dir("reference", &a.reference, &rmd);
            let (real, _) = p.input_dataset("real", &a.real)?;
            let (generated, gmd) = p.input_dataset("generated", &a.generated)?;
            let pre = PreprocessConfig::from_tag(rmd.get("preprocess").map(String::as_str).unwrap_or("none"))?;
            let view = evaluation_view(&real, &pre)?;
            let curve = NllCurveConfig {
                interval: parse_interval(&p.get("interval", a.interval, "percentile:1:99".to_string())?)?,
                grid_points: p.get("grid_points", a.grid_points, 512)?,
                bandwidth: BandwidthRule::Silverman,
            };
            let rule: BandwidthRule = p.get("kde_bandwidth", a.kde_bandwidth, "scott".to_string())?.parse()?;
            let reduce = p.get("kde_reduce", a.kde_reduce, 50)?;
            let kde = p
                .manifest
                .time("kde", || KdeReference::fit(&view, rule, (reduce > 0).then_some(reduce)))?;
            let mut snapshot = p.manifest.provenance();
            for (k, v) in &gmd {
                if k != "created" {
                    snapshot.insert(format!("generated.{k}"), v.clone());
                }
            }
            let labels = ReportLabels {
                model_id: gmd.get("param.model_id").cloned().unwrap_or_else(|| generated.id.clone()),
                basis_id: gmd
                    .get("input.basis.basis_id")
                    .or_else(|| gmd.get("input.coeffs.basis_id"))
                    .cloned()
                    .unwrap_or_default(),
                snapshot,
            };
            let report = p
                .manifest
                .time("evaluate", || evaluate(&reference, &kde, &view, &generated, &curve, &labels))?;
            report.write(&a.out, a.nll_csv.as_deref())?;
            println!("{}", report.to_text().lines().take(11).collect::<Vec<_>>().join("\n"));
            p.finish(&a.out)
        }
        Command::Plot(a) => {
            let mut p = Params::new("plot", config)?;
            p.manifest.set_path("nll_csv", &a.nll_csv);
            let (real, generated) = read_nll_csv(&a.nll_csv)?;
            let curve = NllCurveConfig {
                interval: parse_interval(&p.get("interval", a.interval, "percentile:1:99".to_string())?)?,
                grid_points: p.get("grid_points", a.grid_points, 512)?,
                bandwidth: BandwidthRule::Silverman,
            };
            let title = p.get("title", a.title, "NLL density under the DWT-GMM reference".to_string())?;
            let curves = density_curves(&real, &generated, &curve)?;
            fs::write(&a.svg, curves_svg(&curves, &title))?;
            if let Some(csv) = &a.csv {
                fs::write(csv, curves_csv(&curves))?;
            }
            p.finish(&a.svg)
        }
        Command::SweepD(a) => {
            let mut p = Params::new("sweep-d", config)?;
            p.manifest.set("kind", &a.kind);
            let (data, _) = p.input_dataset("data", &a.data)?;
            let pre = preprocess_config(&mut p, a.preprocess)?;
            let x = preprocess(&data, &pre)?;
            let m = x.to_matrix();
            let default_dims = match a.kind.as_str() {
                "tucker" => (1..=data.height().min(data.width())).map(|r| r.to_string()).collect::<Vec<_>>().join(","),
                _ => {
                    let dmax = m.ncols().min(m.nrows().saturating_sub(1)).max(1);
                    let step = (dmax / 32).max(1);
                    (1..=dmax).step_by(step).map(|d| d.to_string()).collect::<Vec<_>>().join(",")
                }
            };
            let dims: Vec<usize> = parse_list(&p.get("dims", a.dims, default_dims)?)?;
            let centered = p.get("centered", a.centered.then_some(true), false)?;
            let seed = p.get("seed", a.seed, 0)?;
            let threshold = p.get_opt("threshold", a.threshold)?;
            let rows = p.manifest.time("sweep", || sweep(&a.kind, &x, &m, &dims, centered, seed))?;
            let mut csv = String::from("d,mean_l2_error\n");
            for (d, e) in &rows {
                csv.push_str(&format!("{d},{e:?}\n"));
            }
            fs::write(&a.out, csv)?;
            if let Some(t) = threshold {
                match rows.iter().find(|(_, e)| *e <= t) {
                    Some((d, e)) => println!("smallest d with mean l2 error <= {t}: {d} (error {e})"),
                    None => println!("no swept d reaches mean l2 error <= {t}"),
                }
            }
            p.finish(&a.out)
        }
    }
}

/// Pick K by held-out mean NLL: fit on the first 80% of images, score the rest.
fn select_reference_k(
    view: &DatasetTensor,
    ks: &[usize],
    base: &dyn Fn(usize) -> ReferenceConfig,
    manifest: &mut RunManifest,
) -> Result<usize> {
    let n_train = view.n() * 4 / 5;
    let train = view.head(n_train);
    let area = view.area();
    let held = DatasetTensor::new(
        view.id.clone(),
        view.n() - n_train,
        view.height(),
        view.width(),
        view.values()[n_train * area..].to_vec(),
        view.domain(),
    )?;
    let mut best = None;
    for &k in ks {
        let r = build_reference(&train, &base(k))?;
        let (nll, _) = hybridgen::benchmark::dwt_entropy(&r, &held)?;
        log::info!("reference K={k}: held-out mean NLL {nll}");
        manifest.set(format!("k_sweep.{k}"), format!("{nll:?}"));
        if best.is_none_or(|(_, b)| nll < b) {
            best = Some((k, nll));
        }
    }
    best.map(|(k, _)| k).ok_or_else(|| Error::Config("empty --k-candidates".into()))
}

fn sweep(kind: &str, x: &DatasetTensor, m: &DMatrix<f64>, dims: &[usize], centered: bool, seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(dims.len());
    for &d in dims {
        let basis = match kind {
            "pca" => BasisModel::Pca(PcaBasis::fit(m, d, centered)?),
            "ica" => BasisModel::Ica(IcaBasis::fit(m, d, &IcaOptions { seed, ..Default::default() })?),
            "tucker" => BasisModel::Tucker(hosvd(x, (0, d, d), false)?.basis),
            other => return Err(Error::Config(format!("sweep-d supports pca, ica and tucker, not `{other}`"))),
        };
        let rec = basis.reconstruct(&basis.project(m)?)?;
        rows.push((basis.dim_reduced(), mean_l2_error(m, &rec)));
    }
    Ok(rows)
}

fn read_nll_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut real = Vec::new();
    let mut generated = Vec::new();
    for (no, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format { path: path.to_path_buf(), reason: format!("line {}: malformed", no + 1) };
        if f.len() != 3 {
            return Err(bad());
        }
        let v: f64 = f[2].parse().map_err(|_| bad())?;
        match f[0] {
            "real" => real.push(v),
            "generated" => generated.push(v),
            _ => return Err(bad()),
        }
    }
    Ok((real, generated))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
