//! Matrix-free fan-beam forward model and its exact transpose.
//!
//! Each ray runs from the source to the centre of one detector element. Line
//! integrals are exact for the piecewise-constant pixel model: the segment is
//! split at every pixel boundary it crosses and each piece contributes
//! `length * value`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, RaySet};
use crate::grid::ImageGrid;

/// `k x m` projection data, one row per acquisition angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub k: usize,
    pub m: usize,
    pub values: Vec<f64>,
    pub angles: Vec<f64>,
}

impl Sinogram {
    pub fn new(k: usize, m: usize, values: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        if values.len() != k * m {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {k}x{m} sinogram",
                values.len()
            )));
        }
        if angles.len() != k {
            return Err(Error::DimensionMismatch(format!("{} angles for {k} rows", angles.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("sinogram values must be finite");
        }
        Ok(Self { k, m, values, angles })
    }

    pub fn zeros_like(rays: &RaySet) -> Self {
        Self { k: rays.k(), m: rays.m, values: vec![0.0; rays.len()], angles: rays.angles.clone() }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn rms(&self) -> f64 {
        (self.dot(self) / self.values.len().max(1) as f64).sqrt()
    }

    pub fn matches(&self, rays: &RaySet) -> bool {
        self.k == rays.k() && self.m == rays.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise standard deviation as a fraction of the RMS of the data.
    pub relative_level: f64,
    pub seed: u64,
}

/// Visits every pixel crossed by the segment `p0 -> p1`, calling
/// `visit(pixel_index, length_mm)` in order along the ray.
///
/// Segments that run exactly along a pixel boundary are credited to the
/// pixel on the positive-index side.
pub fn trace_ray(n: usize, fov: f64, p0: Point, p1: Point, mut visit: impl FnMut(usize, f64)) {
    let h = fov / n as f64;
    let nf = n as f64;
    // Continuous (column, row) coordinates in pixel units.
    let g0 = ((p0.x + 0.5 * fov) / h, (0.5 * fov - p0.y) / h);
    let g1 = ((p1.x + 0.5 * fov) / h, (0.5 * fov - p1.y) / h);
    let d = (g1.0 - g0.0, g1.1 - g0.1);
    let length = (p1 - p0).norm();
    if length == 0.0 {
        return;
    }

    let mut a_lo = 0.0f64;
    let mut a_hi = 1.0f64;
    for (start, delta) in [(g0.0, d.0), (g0.1, d.1)] {
        if delta == 0.0 {
            if !(0.0..=nf).contains(&start) {
                return;
            }
        } else {
            let a = -start / delta;
            let b = (nf - start) / delta;
            a_lo = a_lo.max(a.min(b));
            a_hi = a_hi.min(a.max(b));
        }
    }
    if a_lo >= a_hi {
        return;
    }

    // Next boundary crossing along one axis, strictly after `a`.
    struct Axis {
        start: f64,
        delta: f64,
        plane: f64,
    }
    impl Axis {
        fn new(start: f64, delta: f64, a: f64) -> Self {
            let pos = start + a * delta;
            let plane = if delta > 0.0 {
                pos.floor() + 1.0
            } else if delta < 0.0 {
                pos.ceil() - 1.0
            } else {
                f64::NAN
            };
            Self { start, delta, plane }
        }
        fn crossing(&self) -> f64 {
            if self.delta == 0.0 {
                f64::INFINITY
            } else {
                (self.plane - self.start) / self.delta
            }
        }
        fn advance(&mut self) {
            self.plane += self.delta.signum();
        }
    }

    let mut ax = Axis::new(g0.0, d.0, a_lo);
    let mut ay = Axis::new(g0.1, d.1, a_lo);
    let mut a = a_lo;
    while a < a_hi {
        let cx = ax.crossing();
        let cy = ay.crossing();
        let next = cx.min(cy).min(a_hi).max(a);
        if next > a {
            let mid = 0.5 * (a + next);
            let col = (g0.0 + mid * d.0).floor();
            let row = (g0.1 + mid * d.1).floor();
            if col >= 0.0 && row >= 0.0 && col < nf && row < nf {
                visit(row as usize * n + col as usize, (next - a) * length);
            }
        }
        if cx <= next {
            ax.advance();
        }
        if cy <= next {
            ay.advance();
        }
        a = next;
    }
}

pub fn line_integral(img: &ImageGrid, p0: Point, p1: Point) -> f64 {
    let mut acc = 0.0;
    trace_ray(img.n, img.fov, p0, p1, |idx, len| acc += len * img.values[idx]);
    acc
}

pub fn forward_project(img: &ImageGrid, rays: &RaySet) -> Sinogram {
    let mut sino = Sinogram::zeros_like(rays);
    let m = rays.m;
    sino.values.par_chunks_mut(m).enumerate().for_each(|(k, row)| {
        let src = rays.sources[k];
        for (out, &det) in row.iter_mut().zip(rays.row(k)) {
            *out = line_integral(img, src, det);
        }
    });
    sino
}

/// Upper bound on the number of partial images summed by the adjoint.
const ADJOINT_BLOCKS: usize = 16;

/// Transpose of [`forward_project`].
///
/// Angles are split into a fixed set of contiguous blocks whose partial
/// images are summed in block order, so the result does not depend on the
/// number of worker threads.
pub fn adjoint_project(sino: &Sinogram, rays: &RaySet, n: usize, fov: f64) -> Result<ImageGrid> {
    if !sino.matches(rays) {
        return Err(Error::DimensionMismatch(format!(
            "sinogram {}x{} vs rays {}x{}",
            sino.k,
            sino.m,
            rays.k(),
            rays.m
        )));
    }
    if n < 1 || !(fov > 0.0) {
        return invalid("adjoint needs a non-empty grid");
    }
    let k = rays.k();
    let per_block = k.div_ceil(ADJOINT_BLOCKS).max(1);
    let partials: Vec<Vec<f64>> = (0..k)
        .step_by(per_block)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut buf = vec![0.0; n * n];
            for kk in start..(start + per_block).min(k) {
                let src = rays.sources[kk];
                for (&w, &det) in sino.row(kk).iter().zip(rays.row(kk)) {
                    if w != 0.0 {
                        trace_ray(n, fov, src, det, |idx, len| buf[idx] += w * len);
                    }
                }
            }
            buf
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for p in &partials {
        for (v, x) in values.iter_mut().zip(p) {
            *v += x;
        }
    }
    Ok(ImageGrid { n, fov, values })
}

/// Dense system matrix, row-major `(k*m) x n^2`. Only meant for small test
/// problems.
pub fn dense_system_matrix(rays: &RaySet, n: usize, fov: f64) -> Result<Vec<f64>> {
    if n > 64 {
        return invalid(format!("dense system matrix limited to n <= 64, got {n}"));
    }
    let cols = n * n;
    let mut a = vec![0.0; rays.len() * cols];
    for k in 0..rays.k() {
        for i in 0..rays.m {
            let (p0, p1) = rays.ray(k, i);
            let row = &mut a[(k * rays.m + i) * cols..][..cols];
            trace_ray(n, fov, p0, p1, |idx, len| row[idx] += len);
        }
    }
    Ok(a)
}

/// Log transform of transmitted intensities: `y = -ln(I / I0)`.
///
/// `intensity` holds raw detector counts in sinogram layout.
pub fn intensities_to_sinogram(intensity: &Sinogram, i0: f64) -> Result<Sinogram> {
    if !(i0 > 0.0 && i0.is_finite()) {
        return invalid(format!("reference intensity must be positive, got {i0}"));
    }
    if let Some(bad) = intensity.values.iter().find(|&&v| !(v > 0.0)) {
        return invalid(format!("intensities must be positive, found {bad}"));
    }
    Ok(Sinogram {
        values: intensity.values.iter().map(|&v| -(v / i0).ln()).collect(),
        ..intensity.clone()
    })
}

/// Adds white Gaussian noise with standard deviation
/// `relative_level * rms(sino)`.
pub fn add_noise(sino: &Sinogram, spec: &NoiseSpec) -> Result<Sinogram> {
    if !(spec.relative_level >= 0.0 && spec.relative_level.is_finite()) {
        return invalid(format!("noise level must be non-negative, got {}", spec.relative_level));
    }
    let sigma = spec.relative_level * sino.rms();
    if sigma == 0.0 {
        return Ok(sino.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(Sinogram {
        values: sino.values.iter().map(|v| v + normal.sample(&mut rng)).collect(),
        ..sino.clone()
    })
}
