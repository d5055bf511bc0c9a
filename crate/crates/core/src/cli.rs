//! Command-line front end. Each subcommand is one pipeline stage and writes
//! a JSON report next to its outputs recording the arguments it ran with.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::calib::{calibrate, default_bounds, CalibProblem, DeOptions, Objective};
use crate::error::{file_error, invalid, Error, Result};
use crate::fbp::{fbp_reconstruct, Filter, FilterKind, Weighting};
use crate::geometry::{ray_set, GeometryFile, GeometryParams, ScannerConfig};
use crate::grid::ImageGrid;
use crate::io::{export_pgm, read_image, read_json, read_sinogram, write_image, write_json, write_sinogram};
use crate::metrics::{quality, QualityReport};
use crate::phantoms::{
    make_hole_phantom, make_l_phantom, make_log_phantom, resample_image, HolePhantomSpec, LPhantomSpec,
};
use crate::projector::{add_noise, forward_project, NoiseSpec, Sinogram};
use crate::recon::{
    fbp_init, map_reconstruct, tikhonov_reconstruct, CauchyMapOptions, MapInit, SolveReport, TikhonovOptions,
};

#[derive(Debug, Parser, Serialize)]
#[command(name = "fanbeam", version, about = "Fan-beam CT geometry calibration and reconstruction")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FANBEAM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Render a phantom on a pixel grid.
    SimulatePhantom(PhantomArgs),
    /// Forward-project an image.
    Project(ProjectArgs),
    /// Fine-grid phantom, projection, noise and coarse ground truth in one go.
    Simulate(SimulateArgs),
    /// FBP reconstructions under deliberately misspecified geometries.
    PerturbDemo(PerturbArgs),
    /// Estimate the geometry from a calibration scan.
    Calibrate(CalibrateArgs),
    Reconstruct(ReconstructArgs),
    /// Relative error and SSIM of an image against a reference.
    Metrics(MetricsArgs),
    ExportPgm(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Log,
    L,
    Hole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fbp,
    Tikhonov,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Zeros,
    Fbp,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FilterArgs {
    #[arg(long, default_value = "hann")]
    pub filter: FilterKind,
    /// Fraction of Nyquist.
    #[arg(long, default_value_t = 1.0)]
    pub cutoff: f64,
    #[arg(long, default_value = "exact")]
    pub weighting: Weighting,
}

impl FilterArgs {
    fn filter(&self) -> Result<Filter> {
        let f = Filter { kind: self.filter, cutoff: self.cutoff, weighting: self.weighting };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhantomArgs {
    #[arg(long, value_enum, default_value = "log")]
    pub phantom: PhantomKind,
    /// JSON phantom spec (L and hole phantoms).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 500.0)]
    pub fov: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Geometry JSON (parameters and scanner).
    #[arg(long)]
    pub geometry: PathBuf,
    /// Override the number of projection angles.
    #[arg(long)]
    pub angles: Option<usize>,
    /// Noise standard deviation relative to the data RMS.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "log")]
    pub phantom: PhantomKind,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Geometry JSON; defaults to the reference geometry and scanner.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long, default_value_t = 1013)]
    pub fine_n: usize,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 500.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbArgs {
    #[arg(long)]
    pub sino: PathBuf,
    /// Correct geometry; defaults to the one stored with the sinogram.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Perturbation of r_D in case (e), mm.
    #[arg(long, default_value_t = 5.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 500.0)]
    pub fov: f64,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub sino: PathBuf,
    /// Reference image of the calibration object.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Scanner description; defaults to the one stored with the sinogram.
    /// Any geometry parameters in it are ignored.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// JSON search box; see `ParamBounds`.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub pop: usize,
    #[arg(long, default_value_t = 0.7)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.7)]
    pub pc: f64,
    #[arg(long, default_value_t = 300)]
    pub gens: usize,
    /// Stop once the fitness spread falls below this fraction of its mean.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "fbp")]
    pub objective: ObjectiveArg,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Output prefix: writes `<out>.geometry.json` and `<out>.report.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveArg {
    Fbp,
    Sino,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub sino: PathBuf,
    /// Geometry JSON; defaults to the one stored with the sinogram.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fbp")]
    pub method: Method,
    /// Use this many evenly spaced rows of the sinogram.
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 500.0)]
    pub fov: f64,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Tikhonov weight.
    #[arg(long, default_value_t = 100.0)]
    pub alpha: f64,
    /// Cauchy prior scale.
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    /// Tikhonov residual / MAP gradient tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "fbp")]
    pub init: InitKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Search box file for `calibrate --bounds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub alpha0: [f64; 2],
    #[serde(rename = "r_D")]
    pub r_d: [f64; 2],
    #[serde(rename = "h_S")]
    pub h_s: [f64; 2],
    #[serde(rename = "h_D")]
    pub h_d: [f64; 2],
    #[serde(rename = "alpha_D")]
    pub alpha_d: [f64; 2],
}

impl Default for ParamBounds {
    fn default() -> Self {
        let b = default_bounds();
        Self { alpha0: b[0], r_d: b[1], h_s: b[2], h_d: b[3], alpha_d: b[4] }
    }
}

impl ParamBounds {
    pub fn to_vec(self) -> Vec<[f64; 2]> {
        vec![self.alpha0, self.r_d, self.h_s, self.h_d, self.alpha_d]
    }
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    threads: usize,
    command: &'a Command,
    outputs: Vec<PathBuf>,
    result: Value,
}

fn write_report(path: &Path, cli: &Cli, outputs: Vec<PathBuf>, result: Value) -> Result<()> {
    let report = Report {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        command: &cli.command,
        outputs,
        result,
    };
    write_json(path, &report)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn raster_files(path: &Path) -> [PathBuf; 2] {
    [sibling(path, ".json"), sibling(path, ".bin")]
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(file_error(dir))
}

fn load_geometry(path: &Path) -> Result<GeometryFile> {
    let g: GeometryFile = read_json(path)?;
    g.validate()?;
    Ok(g)
}

fn geometry_for(sino: &Sinogram, stored: Option<GeometryFile>, explicit: Option<&Path>) -> Result<GeometryFile> {
    let g = match explicit {
        Some(p) => load_geometry(p)?,
        None => stored.ok_or_else(|| {
            Error::InvalidArgument("sinogram has no stored geometry; pass --geometry".into())
        })?,
    };
    if g.n_angles != sino.k || g.n_d != sino.m {
        return Err(Error::DimensionMismatch(format!(
            "geometry describes {}x{} data, sinogram is {}x{}",
            g.n_angles, g.n_d, sino.k, sino.m
        )));
    }
    Ok(g)
}

fn make_phantom(kind: PhantomKind, spec: Option<&Path>, n: usize, fov: f64) -> Result<(ImageGrid, Value)> {
    match kind {
        PhantomKind::Log => {
            if spec.is_some() {
                return invalid("the log phantom takes no spec file");
            }
            Ok((make_log_phantom(n, fov)?, Value::Null))
        }
        PhantomKind::L => {
            let s: LPhantomSpec = spec.map(read_json).transpose()?.unwrap_or_else(LPhantomSpec::calibration);
            Ok((make_l_phantom(n, fov, &s)?, serde_json::to_value(s)?))
        }
        PhantomKind::Hole => {
            let s: HolePhantomSpec = spec.map(read_json).transpose()?.unwrap_or_default();
            Ok((make_hole_phantom(n, fov, &s)?, serde_json::to_value(s)?))
        }
    }
}

/// Keeps every `K/k`-th row, starting with the first.
pub fn subsample_angles(sino: &Sinogram, cfg: &ScannerConfig, k: usize) -> Result<(Sinogram, ScannerConfig)> {
    if k == 0 || sino.k % k != 0 {
        return invalid(format!("cannot take {k} evenly spaced rows from {}", sino.k));
    }
    let stride = sino.k / k;
    let mut values = Vec::with_capacity(k * sino.m);
    let mut angles = Vec::with_capacity(k);
    for r in (0..sino.k).step_by(stride) {
        values.extend_from_slice(sino.row(r));
        angles.push(sino.angles[r]);
    }
    Ok((Sinogram::new(k, sino.m, values, angles)?, ScannerConfig { n_angles: k, ..*cfg }))
}

/// The six geometries of the misspecification demo, keyed (a)-(f).
pub fn perturbed_cases(g: &GeometryParams, eps: f64) -> Vec<(char, GeometryParams)> {
    let z = |h_s: bool, h_d: bool, a_d: bool| {
        GeometryParams::new(
            g.alpha0,
            g.r_d,
            if h_s { g.h_s } else { 0.0 },
            if h_d { g.h_d } else { 0.0 },
            if a_d { g.alpha_d } else { 0.0 },
        )
    };
    vec![
        ('a', z(false, false, false)),
        ('b', z(true, false, false)),
        ('c', z(true, true, false)),
        ('d', z(false, false, true)),
        ('e', GeometryParams { r_d: g.r_d + eps, ..*g }),
        ('f', *g),
    ]
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return invalid("--threads must be at least 1");
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::SimulatePhantom(a) => simulate_phantom(cli, a),
        Command::Project(a) => project(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::PerturbDemo(a) => perturb_demo(cli, a),
        Command::Calibrate(a) => cmd_calibrate(cli, a),
        Command::Reconstruct(a) => reconstruct(cli, a),
        Command::Metrics(a) => metrics(cli, a),
        Command::ExportPgm(a) => {
            export_pgm(&read_image(&a.image)?, &a.out)?;
            write_report(&sibling(&a.out, ".report.json"), cli, vec![a.out.clone()], Value::Null)
        }
    }
}

fn simulate_phantom(cli: &Cli, a: &PhantomArgs) -> Result<()> {
    let (img, spec) = make_phantom(a.phantom, a.spec.as_deref(), a.n, a.fov)?;
    write_image(&a.out, &img)?;
    write_report(&sibling(&a.out, ".report.json"), cli, raster_files(&a.out).to_vec(), json!({ "spec": spec }))
}

fn project(cli: &Cli, a: &ProjectArgs) -> Result<()> {
    let img = read_image(&a.image)?;
    let mut gf = load_geometry(&a.geometry)?;
    if let Some(k) = a.angles {
        gf.n_angles = k;
    }
    gf.validate()?;
    let clean = forward_project(&img, &ray_set(&gf.scanner(), &gf.params()));
    let sino = add_noise(&clean, &NoiseSpec { relative_level: a.noise, seed: a.seed })?;
    write_sinogram(&a.out, &sino, Some(&gf))?;
    write_report(&sibling(&a.out, ".report.json"), cli, raster_files(&a.out).to_vec(), json!({ "geometry": gf }))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let mut gf = match &a.geometry {
        Some(p) => load_geometry(p)?,
        None => GeometryFile::new(&ScannerConfig::default(), &GeometryParams::reference()),
    };
    if let Some(k) = a.angles {
        gf.n_angles = k;
    }
    gf.validate()?;
    if a.fine_n < a.n {
        return invalid(format!("fine grid ({}) must not be coarser than the output grid ({})", a.fine_n, a.n));
    }
    create_dir(&a.out_dir)?;
    let (fine, spec) = make_phantom(a.phantom, a.spec.as_deref(), a.fine_n, a.fov)?;
    let clean = forward_project(&fine, &ray_set(&gf.scanner(), &gf.params()));
    let sino = add_noise(&clean, &NoiseSpec { relative_level: a.noise, seed: a.seed })?;
    let truth = resample_image(&fine, a.n)?;

    let sino_path = a.out_dir.join("sinogram");
    let fine_path = a.out_dir.join("truth_fine");
    let truth_path = a.out_dir.join("truth");
    write_sinogram(&sino_path, &sino, Some(&gf))?;
    write_image(&fine_path, &fine)?;
    write_image(&truth_path, &truth)?;
    let outputs = [&sino_path, &fine_path, &truth_path].iter().flat_map(|p| raster_files(p)).collect();
    let result = json!({
        "geometry": gf,
        "spec": spec,
        "noise": { "relative_level": a.noise, "seed": a.seed, "sigma": a.noise * clean.rms() },
    });
    write_report(&a.out_dir.join("provenance.json"), cli, outputs, result)
}

#[derive(Debug, Clone, Serialize)]
struct CaseRow {
    case: char,
    theta: GeometryParams,
    #[serde(flatten)]
    quality: QualityReport,
}

fn perturb_demo(cli: &Cli, a: &PerturbArgs) -> Result<()> {
    let (sino, stored) = read_sinogram(&a.sino)?;
    let gf = geometry_for(&sino, stored, a.geometry.as_deref())?;
    let cfg = gf.scanner();
    let filter = a.filter.filter()?;
    create_dir(&a.out_dir)?;
    let mut images = Vec::new();
    let mut outputs = Vec::new();
    for (case, theta) in perturbed_cases(&gf.params(), a.eps) {
        let img = fbp_reconstruct(&sino, &cfg, &theta, a.n, a.fov, filter)?;
        let path = a.out_dir.join(format!("case_{case}"));
        write_image(&path, &img)?;
        let pgm = a.out_dir.join(format!("case_{case}.pgm"));
        export_pgm(&img, &pgm)?;
        outputs.extend(raster_files(&path));
        outputs.push(pgm);
        images.push((case, theta, img));
    }
    let reference = &images.last().expect("six cases").2;
    let rows = images
        .iter()
        .map(|(case, theta, img)| Ok(CaseRow { case: *case, theta: *theta, quality: quality(img, reference)? }))
        .collect::<Result<Vec<_>>>()?;
    let table = a.out_dir.join("metrics.json");
    write_json(&table, &rows)?;
    outputs.push(table);
    write_report(&a.out_dir.join("report.json"), cli, outputs, json!({ "cases": rows }))
}

fn cmd_calibrate(cli: &Cli, a: &CalibrateArgs) -> Result<()> {
    let (sino, stored) = read_sinogram(&a.sino)?;
    let gf = geometry_for(&sino, stored, a.geometry.as_deref())?;
    let reference = read_image(&a.reference)?;
    let bounds = match &a.bounds {
        Some(p) => read_json::<ParamBounds>(p)?,
        None => ParamBounds::default(),
    };
    let opts = DeOptions {
        pop_size: a.pop,
        mu: a.mu,
        p_cross: a.pc,
        max_gen: a.gens,
        conv_tol: a.tol,
        seed: a.seed,
        bounds: bounds.to_vec(),
    };
    let objective = match a.objective {
        ObjectiveArg::Fbp => Objective::Fbp,
        ObjectiveArg::Sino => Objective::Sino,
    };
    let cfg = gf.scanner();
    let prob = CalibProblem::new(sino, reference, cfg, a.filter.filter()?)?;
    let report = calibrate(&prob, &opts, objective)?;
    let geometry_path = sibling(&a.out, ".geometry.json");
    write_json(&geometry_path, &GeometryFile::new(&cfg, &report.best_theta))?;
    write_report(
        &sibling(&a.out, ".report.json"),
        cli,
        vec![geometry_path],
        json!({ "optimizer": report, "de_options": opts }),
    )
}

fn reconstruct(cli: &Cli, a: &ReconstructArgs) -> Result<()> {
    let (sino, stored) = read_sinogram(&a.sino)?;
    let gf = geometry_for(&sino, stored, a.geometry.as_deref())?;
    let (sino, cfg) = match a.angles {
        Some(k) => subsample_angles(&sino, &gf.scanner(), k)?,
        None => (sino, gf.scanner()),
    };
    let g = gf.params();
    let filter = a.filter.filter()?;
    let (img, solve): (ImageGrid, Option<SolveReport>) = match a.method {
        Method::Fbp => (fbp_reconstruct(&sino, &cfg, &g, a.n, a.fov, filter)?, None),
        Method::Tikhonov => {
            let opts = TikhonovOptions { alpha: a.alpha, max_iter: a.max_iter, tol: a.tol };
            let (img, rep) = tikhonov_reconstruct(&sino, &ray_set(&cfg, &g), a.n, a.fov, &opts)?;
            (img, Some(rep))
        }
        Method::Map => {
            let init = match a.init {
                InitKind::Zeros => MapInit::Zeros,
                InitKind::Fbp => MapInit::Image(fbp_init(&sino, &cfg, &g, a.n, a.fov, filter)?),
            };
            let opts = CauchyMapOptions { beta: a.beta, max_iter: a.max_iter, grad_tol: a.tol, init, ..Default::default() };
            let (img, rep) = map_reconstruct(&sino, &ray_set(&cfg, &g), a.n, a.fov, &opts)?;
            (img, Some(rep))
        }
    };
    write_image(&a.out, &img)?;
    write_report(
        &sibling(&a.out, ".report.json"),
        cli,
        raster_files(&a.out).to_vec(),
        json!({ "geometry": GeometryFile::new(&cfg, &g), "solver": solve }),
    )
}

fn metrics(cli: &Cli, a: &MetricsArgs) -> Result<()> {
    let q = quality(&read_image(&a.image)?, &read_image(&a.reference)?)?;
    println!("{}", serde_json::to_string(&q)?);
    if let Some(out) = &a.out {
        write_report(out, cli, vec![], serde_json::to_value(q)?)?;
    }
    Ok(())
}
