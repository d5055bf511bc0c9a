use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use fanbeam::calib::{calibrate, de_minimize, CalibProblem, DeOptions, DeResult, Objective};
use fanbeam::geometry::ray_set;
use fanbeam::io::{pgm_bytes, read_image, read_sinogram, write_image, write_sinogram};
use fanbeam::metrics::{quality, relative_error, relative_error_values, ssim, SsimOptions};
use fanbeam::phantoms::{make_hole_phantom, make_l_phantom, make_log_phantom, resample_image, HolePhantomSpec, LPhantomSpec};
use fanbeam::projector::{adjoint_project, dense_system_matrix, forward_project, line_integral, add_noise};
use fanbeam::recon::{
    cauchy_gradient, cauchy_neg_log_posterior, fbp_init, map_reconstruct, tikhonov_reconstruct, CauchyMapOptions,
    MapInit, TikhonovOptions,
};
use fanbeam::{
    fbp_reconstruct, Filter, GeometryFile, GeometryParams, ImageGrid, NoiseSpec, Point, ScannerConfig, Sinogram,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const FOV: f64 = 500.0;
const FINE: usize = 1013;
const N: usize = 256;

const ADJOINT_TOL: f64 = 1e-10;
const SIDDON_PIXELS: f64 = 2.0;
const DISK_TOL: f64 = 0.15;
const CALIB_ERR: f64 = 0.10;
const CALIB_SSIM: f64 = 0.75;
const SPARSE_ERR: f64 = 0.15;
const SEEDS_NEEDED: usize = 3;
const DISTINCT_FRACTION: f64 = 0.01;
const GRADIENT_TOL: f64 = 1e-5;
const TIKHONOV_TOL: f64 = 1e-6;
const SPHERE_TOL: f64 = 1e-6;
const ROSENBROCK_TOL: f64 = 1e-4;
const SSIM_ORACLE_TOL: f64 = 1e-10;

const MAP_ALPHA: f64 = 100.0;
const MAP_BETA: f64 = 0.003;

struct Outcome {
    pass: bool,
    detail: String,
    data: Value,
}

impl Outcome {
    fn new(pass: bool, detail: String, data: Value) -> Self {
        Self { pass, detail, data }
    }
}

fn random_image(n: usize, fov: f64, rng: &mut ChaCha8Rng) -> ImageGrid {
    ImageGrid::new(n, fov, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_sino(k: usize, m: usize, angles: Vec<f64>, rng: &mut ChaCha8Rng) -> Sinogram {
    Sinogram::new(k, m, (0..k * m).map(|_| rng.gen_range(-1.0..1.0)).collect(), angles).unwrap()
}

fn noisy(img: &ImageGrid, cfg: &ScannerConfig, g: &GeometryParams, seed: u64) -> Sinogram {
    add_noise(&forward_project(img, &ray_set(cfg, g)), &NoiseSpec { relative_level: 0.02, seed }).unwrap()
}

fn criterion_1() -> Outcome {
    let cfg = ScannerConfig { r_s: 300.0, n_d: 128, det_pixel: 3.0, n_angles: 30, angular_span: 2.0 * PI };
    let rays = ray_set(&cfg, &GeometryParams::new(0.4, 250.0, 12.0, -7.0, 0.1));
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = random_image(64, 200.0, &mut rng);
        let y = random_sino(30, 128, rays.angles.clone(), &mut rng);
        let ax = forward_project(&x, &rays);
        let aty = adjoint_project(&y, &rays, 64, 200.0).unwrap();
        worst = worst.max((ax.dot(&y) - x.dot(&aty)).abs() / (ax.norm() * y.norm()));
    }
    Outcome::new(worst <= ADJOINT_TOL, format!("worst normalised gap {worst:.2e}"), json!({ "worst": worst }))
}

/// Midpoint rule along the segment, reading the pixel under each sample.
fn sampled_integral(img: &ImageGrid, p0: Point, p1: Point, samples: usize) -> f64 {
    let h = img.pixel_size();
    let half = 0.5 * img.fov;
    let mut acc = 0.0;
    for s in 0..samples {
        let p = p0 + (p1 - p0) * ((s as f64 + 0.5) / samples as f64);
        let c = ((p.x + half) / h).floor();
        let r = ((half - p.y) / h).floor();
        if c >= 0.0 && r >= 0.0 && c < img.n as f64 && r < img.n as f64 {
            acc += img.at(r as usize, c as usize);
        }
    }
    acc * (p1 - p0).norm() / samples as f64
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let img = random_image(48, 120.0, &mut rng);
    let max = img.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = SIDDON_PIXELS * img.pixel_size() * max;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = rng.gen_range(0.0..2.0 * PI);
        let b = a + rng.gen_range(2.5..3.8);
        let p0 = Point::new(100.0 * a.cos(), 100.0 * a.sin());
        let p1 = Point::new(100.0 * b.cos(), 100.0 * b.sin());
        worst = worst.max((line_integral(&img, p0, p1) - sampled_integral(&img, p0, p1, 10_000)).abs());
    }
    Outcome::new(worst <= bound, format!("worst deviation {worst:.3e}, bound {bound:.3e}"), json!({ "worst": worst }))
}

fn criterion_3() -> Outcome {
    let cfg = ScannerConfig::default();
    let g = GeometryParams::ideal(715.0);
    let fine = ImageGrid::from_fn(FINE, FOV, |p| if p.norm() <= 150.0 { 0.02 } else { 0.0 });
    let sino = forward_project(&fine, &ray_set(&cfg, &g));
    let rec = fbp_reconstruct(&sino, &cfg, &g, N, FOV, Filter::default()).unwrap();
    let truth = resample_image(&fine, N).unwrap();
    let inside: Vec<usize> =
        (0..N * N).filter(|&i| rec.pixel_center(i / N, i % N).norm() <= 0.45 * FOV).collect();
    let pick = |img: &ImageGrid| inside.iter().map(|&i| img.values[i]).collect::<Vec<_>>();
    let err = relative_error_values(&pick(&rec), &pick(&truth)).unwrap();
    Outcome::new(err <= DISK_TOL, format!("disk eps_rel {err:.4}"), json!({ "rel_error": err }))
}

/// The calibration scan and the log-phantom scan share the true geometry.
struct CalibData {
    /// Full-angle log-phantom sinogram and its FBP at the true geometry.
    log: Sinogram,
    truth: ImageGrid,
    l_fine: ImageGrid,
    l_ref: ImageGrid,
}

impl CalibData {
    fn new() -> Self {
        let g = GeometryParams::reference();
        let full = ScannerConfig::default();
        let l_fine = make_l_phantom(FINE, FOV, &LPhantomSpec::calibration()).unwrap();
        let log = noisy(&make_log_phantom(FINE, FOV).unwrap(), &full, &g, 2);
        let truth = fbp_reconstruct(&log, &full, &g, N, FOV, Filter::default()).unwrap();
        let l_ref = make_l_phantom(N, FOV, &LPhantomSpec::calibration()).unwrap();
        Self { log, truth, l_fine, l_ref }
    }

    fn problem(&self, k: usize) -> CalibProblem {
        let cfg = ScannerConfig::default().with_angles(k);
        let y = noisy(&self.l_fine, &cfg, &GeometryParams::reference(), 1);
        CalibProblem::new(y, self.l_ref.clone(), cfg, Filter::default()).unwrap()
    }

    fn run(&self, prob: &CalibProblem, seed: u64) -> Run {
        let t = Instant::now();
        let report = calibrate(prob, &DeOptions { seed, ..Default::default() }, Objective::Fbp).unwrap();
        let rec = fbp_reconstruct(&self.log, &ScannerConfig::default(), &report.best_theta, N, FOV, Filter::default())
            .unwrap();
        let q = quality(&rec, &self.truth).unwrap();
        Run {
            seed,
            theta: report.best_theta.to_array(),
            generations: report.generations,
            rel_error: q.rel_error,
            ssim: q.ssim,
            seconds: t.elapsed().as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
struct Run {
    seed: u64,
    theta: [f64; 5],
    generations: usize,
    rel_error: f64,
    ssim: f64,
    seconds: f64,
}

impl Run {
    fn full_angle_pass(&self) -> bool {
        self.rel_error <= CALIB_ERR && self.ssim >= CALIB_SSIM
    }
}

fn summarise(runs: &[Run]) -> String {
    runs.iter()
        .map(|r| format!("s{} {:.3}/{:.3}", r.seed, r.rel_error, r.ssim))
        .collect::<Vec<_>>()
        .join(", ")
}

fn criterion_4(data: &CalibData) -> (Outcome, Vec<Run>) {
    let prob = data.problem(360);
    let runs: Vec<Run> = (0..5).map(|seed| data.run(&prob, seed)).collect();
    let passed = runs.iter().filter(|r| r.full_angle_pass()).count();
    let detail = format!("{passed}/5 seeds pass (eps_rel/SSIM: {})", summarise(&runs));
    (Outcome::new(passed >= SEEDS_NEEDED, detail, json!({ "runs": runs })), runs)
}

fn criterion_5(data: &CalibData) -> Outcome {
    let prob = data.problem(20);
    let runs: Vec<Run> = (0..5).map(|seed| data.run(&prob, seed)).collect();
    let passed = runs.iter().filter(|r| r.rel_error <= SPARSE_ERR).count();
    let detail = format!("{passed}/5 seeds pass (eps_rel/SSIM: {})", summarise(&runs));
    Outcome::new(passed >= SEEDS_NEEDED, detail, json!({ "runs": runs }))
}

fn distinct(a: &Run, b: &Run) -> bool {
    a.theta.iter().zip(&b.theta).any(|(x, y)| (x - y).abs() > DISTINCT_FRACTION * x.abs().max(y.abs()))
}

/// Pairs among the passing full-angle runs; more seeds are only spent if
/// no such pair exists yet.
fn criterion_6(data: &CalibData, runs: &[Run]) -> Outcome {
    let mut passing: Vec<Run> = runs.iter().filter(|r| r.full_angle_pass()).cloned().collect();
    let find = |p: &[Run]| {
        (0..p.len()).flat_map(|i| (i + 1..p.len()).map(move |j| (i, j))).find(|&(i, j)| distinct(&p[i], &p[j]))
    };
    let mut pair = find(&passing);
    let mut seed = 5;
    let mut prob = None;
    while pair.is_none() && seed < 10 {
        let prob = prob.get_or_insert_with(|| data.problem(360));
        let run = data.run(prob, seed);
        if run.full_angle_pass() {
            passing.push(run);
        }
        pair = find(&passing);
        seed += 1;
    }
    match pair {
        Some((i, j)) => {
            let (a, b) = (&passing[i], &passing[j]);
            let coord = (0..5)
                .max_by(|&p, &q| {
                    let rel = |k: usize| (a.theta[k] - b.theta[k]).abs() / a.theta[k].abs().max(b.theta[k].abs());
                    rel(p).total_cmp(&rel(q))
                })
                .unwrap();
            let names = ["alpha0", "r_D", "h_S", "h_D", "alpha_D"];
            let detail = format!(
                "seeds {} and {} both pass, {} = {:.2} vs {:.2}",
                a.seed, b.seed, names[coord], a.theta[coord], b.theta[coord]
            );
            Outcome::new(true, detail, json!({ "pair": [a, b] }))
        }
        None => Outcome::new(false, format!("no distinct pair among {} passing runs", passing.len()), Value::Null),
    }
}

fn criterion_7() -> Outcome {
    let g = GeometryParams::reference();
    let cfg = ScannerConfig { n_angles: 20, ..Default::default() };
    let fine = make_log_phantom(FINE, FOV).unwrap();
    let y = noisy(&fine, &cfg, &g, 3);
    let truth = resample_image(&fine, N).unwrap();
    let rays = ray_set(&cfg, &g);
    let fbp = fbp_reconstruct(&y, &cfg, &g, N, FOV, Filter::default()).unwrap();
    let tik_opts = TikhonovOptions { alpha: MAP_ALPHA, max_iter: 200, tol: 1e-4 };
    let (tik, _) = tikhonov_reconstruct(&y, &rays, N, FOV, &tik_opts).unwrap();
    let init = fbp_init(&y, &cfg, &g, N, FOV, Filter::default()).unwrap();
    let map_opts = CauchyMapOptions { beta: MAP_BETA, max_iter: 300, init: MapInit::Image(init), ..Default::default() };
    let (map, _) = map_reconstruct(&y, &rays, N, FOV, &map_opts).unwrap();
    let err = |x: &ImageGrid| relative_error(x, &truth).unwrap();
    let (e_fbp, e_tik, e_map) = (err(&fbp), err(&tik), err(&map));
    let detail = format!("eps_rel MAP {e_map:.3}, Tikhonov {e_tik:.3}, FBP {e_fbp:.3} (alpha {MAP_ALPHA}, beta {MAP_BETA})");
    let data = json!({
        "alpha": MAP_ALPHA,
        "beta": MAP_BETA,
        "map_init": "fbp",
        "map_max_iter": 300,
        "tikhonov": { "max_iter": 200, "tol": 1e-4 },
        "noise": { "relative_level": 0.02, "seed": 3 },
        "rel_error": { "fbp": e_fbp, "tikhonov": e_tik, "map": e_map },
    });
    Outcome::new(e_map < e_fbp && e_map < e_tik, detail, data)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let n = 8;
    let cfg = ScannerConfig { r_s: 40.0, n_d: 16, det_pixel: 1.0, n_angles: 7, angular_span: 2.0 * PI };
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let rays = ray_set(&cfg, &GeometryParams::new(rng.gen_range(0.0..6.0), 30.0, 1.0, -1.0, 0.1));
        let x = random_image(n, 16.0, &mut rng);
        let y = random_sino(7, 16, rays.angles.clone(), &mut rng);
        let beta = rng.gen_range(0.3..2.0);
        let grad = cauchy_gradient(&x, &y, &rays, beta).unwrap();
        let f = |v: &ImageGrid| cauchy_neg_log_posterior(v, &y, &rays, beta).unwrap();
        let scale = grad.values.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for i in 0..n * n {
            let h = 1e-5 * (1.0 + x.values[i].abs());
            let (mut plus, mut minus) = (x.clone(), x.clone());
            plus.values[i] += h;
            minus.values[i] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            worst = worst.max((fd - grad.values[i]).abs() / grad.values[i].abs().max(scale));
        }
    }
    Outcome::new(worst <= GRADIENT_TOL, format!("worst relative component error {worst:.2e}"), json!({ "worst": worst }))
}

fn criterion_9() -> Outcome {
    let (n, fov, alpha) = (16, 32.0, 2.0);
    let cfg = ScannerConfig { r_s: 60.0, n_d: 40, det_pixel: 1.0, n_angles: 20, angular_span: 2.0 * PI };
    let rays = ray_set(&cfg, &GeometryParams::new(0.3, 40.0, 1.5, -2.0, 0.1));
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let y = random_sino(20, 40, rays.angles.clone(), &mut rng);
    let a = DMatrix::from_row_slice(rays.len(), n * n, &dense_system_matrix(&rays, n, fov).unwrap());
    let lhs = a.transpose() * &a + DMatrix::identity(n * n, n * n) * alpha;
    let want = lhs.cholesky().expect("positive definite").solve(&(a.transpose() * DVector::from_column_slice(&y.values)));
    let (x, _) = tikhonov_reconstruct(&y, &rays, n, fov, &TikhonovOptions { alpha, max_iter: 2000, tol: 1e-12 }).unwrap();
    let err = (DVector::from_column_slice(&x.values) - &want).norm() / want.norm();
    Outcome::new(err <= TIKHONOV_TOL, format!("relative difference {err:.2e}"), json!({ "rel_error": err }))
}

fn monotone(r: &DeResult) -> bool {
    r.trace.windows(2).all(|w| w[1] <= w[0])
}

fn criterion_10() -> Outcome {
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let rosenbrock = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let s = de_minimize(sphere, &DeOptions { bounds: vec![[-5.0, 5.0]; 5], ..Default::default() }).unwrap();
    let rs: Vec<DeResult> = (0..3)
        .map(|seed| de_minimize(rosenbrock, &DeOptions { seed, bounds: vec![[-2.0, 2.0]; 2], ..Default::default() }).unwrap())
        .collect();
    // a non-monotone trace is a bug, not a tolerance miss
    assert!(monotone(&s) && rs.iter().all(monotone), "best-fitness trace increased");
    let worst_r = rs.iter().map(|r| r.best_value).fold(0.0f64, f64::max);
    let pass = s.best_value <= SPHERE_TOL && worst_r <= ROSENBROCK_TOL;
    let detail = format!("sphere {:.2e}, Rosenbrock worst of 3 seeds {worst_r:.2e}, traces monotone", s.best_value);
    Outcome::new(pass, detail, json!({ "sphere": s.best_value, "rosenbrock": worst_r }))
}

/// Direct 2-D window sums with an explicitly built Gaussian kernel.
fn ssim_oracle(a: &ImageGrid, b: &ImageGrid, l: f64) -> f64 {
    let (w, sigma, n) = (11, 1.5, a.n);
    let mut kernel = vec![0.0; w * w];
    for i in 0..w {
        for j in 0..w {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            kernel[i * w + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let mut sum = 0.0;
    for r in 0..=n - w {
        for c in 0..=n - w {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..w {
                for j in 0..w {
                    let k = kernel[i * w + j] / total;
                    let (x, y) = (a.at(r + i, c + j), b.at(r + i, c + j));
                    ma += k * x;
                    mb += k * y;
                    saa += k * x * x;
                    sbb += k * y * y;
                    sab += k * x * y;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    sum / ((n - w + 1) * (n - w + 1)) as f64
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let fixed = SsimOptions { data_range: Some(2.0), ..Default::default() };
    let mut failures = Vec::new();
    let mut worst_oracle = 0.0f64;
    for case in 0..100 {
        let a = random_image(16, 1.0, &mut rng);
        let b = random_image(16, 1.0, &mut rng);
        let k = rng.gen_range(-3.0..3.0);
        let mut bumped = a.clone();
        bumped.values[rng.gen_range(0..256)] += rng.gen_range(1e-3..1.0);
        let e_scaled = relative_error(&a.scaled(k), &a).unwrap();
        let (ab, ba) = (ssim(&a, &b, &fixed).unwrap(), ssim(&b, &a, &fixed).unwrap());
        let checks = [
            relative_error(&a, &a).unwrap() == 0.0,
            relative_error(&bumped, &a).unwrap() > 0.0,
            (e_scaled - (k - 1.0).abs()).abs() <= 1e-12 * (1.0 + k.abs()),
            ssim(&a, &a, &SsimOptions::default()).unwrap() == 1.0,
            ssim(&bumped, &a, &SsimOptions::default()).unwrap() < 1.0,
            (ab - ba).abs() <= 1e-12,
            (-1.0..=1.0).contains(&ab),
        ];
        if !checks.iter().all(|&c| c) {
            failures.push(case);
        }
        if case < 5 {
            let big = random_image(32, 1.0, &mut rng);
            let other =
                ImageGrid::new(32, 1.0, big.values.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect()).unwrap();
            let (lo, hi) = other.min_max();
            let got = ssim(&big, &other, &SsimOptions::default()).unwrap();
            worst_oracle = worst_oracle.max((got - ssim_oracle(&big, &other, hi - lo)).abs());
        }
    }
    let pass = failures.is_empty() && worst_oracle <= SSIM_ORACLE_TOL;
    let detail = format!("{} of 100 instances violate an invariant, SSIM oracle gap {worst_oracle:.2e}", failures.len());
    Outcome::new(pass, detail, json!({ "failures": failures, "oracle_gap": worst_oracle }))
}

fn criterion_12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let img = ImageGrid::new(64, 250.0, (0..64 * 64).map(|_| rng.gen_range(-1e3..1e3) * rng.gen::<f64>().powi(9)).collect())
        .unwrap();
    write_image(&dir.path().join("img"), &img).unwrap();
    let back = read_image(&dir.path().join("img")).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let image_ok = bits(&back.values) == bits(&img.values) && back.fov.to_bits() == img.fov.to_bits();

    let cfg = ScannerConfig { n_angles: 9, n_d: 17, ..Default::default() };
    let g = GeometryParams::reference();
    let sino = random_sino(9, 17, ray_set(&cfg, &g).angles, &mut rng);
    let gf = GeometryFile::new(&cfg, &g);
    write_sinogram(&dir.path().join("sino"), &sino, Some(&gf)).unwrap();
    let (sback, gback) = read_sinogram(&dir.path().join("sino")).unwrap();
    let sino_ok = bits(&sback.values) == bits(&sino.values) && bits(&sback.angles) == bits(&sino.angles) && gback == Some(gf);

    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden");
    let cases = [
        ("log_64.pgm", make_log_phantom(64, 500.0).unwrap()),
        ("hole_48.pgm", make_hole_phantom(48, 400.0, &HolePhantomSpec::default()).unwrap()),
        ("ramp_8.pgm", ImageGrid::from_fn(8, 8.0, |p| p.x - 0.5 * p.y)),
    ];
    let stale: Vec<&str> = cases
        .iter()
        .filter(|(name, img)| fs::read(golden.join(name)).ok().as_deref() != Some(pgm_bytes(img).as_slice()))
        .map(|(name, _)| *name)
        .collect();
    let pass = image_ok && sino_ok && stale.is_empty();
    let detail = format!("image bit-exact {image_ok}, sinogram bit-exact {sino_ok}, golden PGM mismatches {stale:?}");
    Outcome::new(pass, detail, json!({ "image": image_ok, "sinogram": sino_ok, "golden_mismatch": stale }))
}

/// Bypasses the test harness capture so the lines show up in plain
/// `cargo test` output.
fn report(id: usize, outcome: &Outcome, seconds: f64) {
    let verdict = if outcome.pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance criterion {id:>2}: {verdict}  {} [{seconds:.1} s]\n", outcome.detail);
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut timed = |id: usize, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        report(id, &outcome, t.elapsed().as_secs_f64());
        results.push((id, outcome));
    };
    timed(1, &mut criterion_1);
    timed(2, &mut criterion_2);
    timed(3, &mut criterion_3);
    let data = CalibData::new();
    let mut runs = Vec::new();
    timed(4, &mut || {
        let (outcome, r) = criterion_4(&data);
        runs = r;
        outcome
    });
    timed(5, &mut || criterion_5(&data));
    timed(6, &mut || criterion_6(&data, &runs));
    timed(7, &mut criterion_7);
    timed(8, &mut criterion_8);
    timed(9, &mut criterion_9);
    timed(10, &mut criterion_10);
    timed(11, &mut criterion_11);
    timed(12, &mut criterion_12);

    let summary: serde_json::Map<String, Value> = results
        .iter()
        .map(|(id, o)| (id.to_string(), json!({ "pass": o.pass, "detail": o.detail, "data": o.data })))
        .collect();
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).unwrap()).unwrap();

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(id, _)| *id).collect();
    assert!(failed.is_empty(), "failed criteria {failed:?}; details in {}", path.display());
}
