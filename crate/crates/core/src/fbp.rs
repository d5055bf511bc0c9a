//! Fan-beam filtered backprojection for a flat detector.
//!
//! Reconstruction follows the weighted form
//!
//! ```text
//! f(p) = 1/2 * sum_k dbeta * (R d / U^2) * q_k(t(p))
//! q_k  = ramp-filter(cos(gamma) * y_k)
//! ```
//!
//! where `t(p)` is the detector coordinate hit by the ray through `p`. With
//! [`Weighting::Exact`], `R` is the source-to-rotation-centre distance, `d`
//! the perpendicular source-to-detector distance, `U` the depth of `p` along
//! the detector normal and `gamma` the angle between a ray and the
//! source-to-centre line. [`Weighting::Ideal`] always uses the aligned values
//! `R = r_S`, `d = r_S + r_D`, `cos(gamma) = d / sqrt(d^2 + u^2)` and measures
//! `U` along the nominal central ray. Both coincide for the aligned geometry.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{element_offset, view_frames, GeometryParams, Point, ScannerConfig, ViewFrame};
use crate::grid::ImageGrid;
use crate::projector::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    RamLak,
    SheppLogan,
    Cosine,
    Hamming,
    Hann,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] =
        [Self::RamLak, Self::SheppLogan, Self::Cosine, Self::Hamming, Self::Hann];

    /// Window value at `nu`, the frequency as a fraction of the cutoff.
    pub fn window(self, nu: f64) -> f64 {
        if nu > 1.0 {
            return 0.0;
        }
        match self {
            Self::RamLak => 1.0,
            Self::SheppLogan => {
                let x = 0.5 * PI * nu;
                if x == 0.0 {
                    1.0
                } else {
                    x.sin() / x
                }
            }
            Self::Cosine => (0.5 * PI * nu).cos(),
            Self::Hamming => 0.54 + 0.46 * (PI * nu).cos(),
            Self::Hann => 0.5 * (1.0 + (PI * nu).cos()),
        }
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ramlak" => Ok(Self::RamLak),
            "shepplogan" => Ok(Self::SheppLogan),
            "cosine" => Ok(Self::Cosine),
            "hamming" => Ok(Self::Hamming),
            "hann" => Ok(Self::Hann),
            other => invalid(format!("unknown filter {other:?}")),
        }
    }
}

/// Distances used in the fan-beam weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Distances measured in the actual shifted and tilted geometry.
    #[default]
    Exact,
    /// Aligned-geometry distances `r_S` and `r_S + r_D` for every geometry;
    /// only the detector coordinate follows shifts and tilt.
    Ideal,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" => Ok(Weighting::Ideal),
            "exact" => Ok(Weighting::Exact),
            other => Err(Error::InvalidArgument(format!("unknown weighting {other:?} (expected ideal or exact)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub kind: FilterKind,
    /// Fraction of the Nyquist frequency, in (0, 1].
    pub cutoff: f64,
    #[serde(default)]
    pub weighting: Weighting,
}

impl Default for Filter {
    fn default() -> Self {
        Self { kind: FilterKind::Hann, cutoff: 1.0, weighting: Weighting::Exact }
    }
}

impl Filter {
    pub fn new(kind: FilterKind, cutoff: f64) -> Result<Self> {
        let f = Self { kind, cutoff, weighting: Weighting::default() };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return invalid(format!("filter cutoff must lie in (0, 1], got {}", self.cutoff));
        }
        Ok(())
    }
}

/// Ramp filter with a frequency window, applied row by row through a
/// zero-padded FFT.
#[derive(Clone)]
pub struct RampFilter {
    m: usize,
    filter: Filter,
    response: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RampFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RampFilter").field("m", &self.m).field("padded", &self.padded_len()).finish()
    }
}

impl RampFilter {
    pub fn new(m: usize, det_pixel: f64, filter: Filter) -> Result<Self> {
        filter.validate()?;
        if m < 2 {
            return invalid(format!("filtering needs at least 2 detector elements, got {m}"));
        }
        if !(det_pixel > 0.0) {
            return invalid("detector pitch must be positive");
        }
        let padded = (2 * m).next_power_of_two();
        Self::with_padding(padded, m, det_pixel, filter)
    }

    /// Filter operating on rows of exactly `padded` samples (no zero-padding
    /// beyond what the caller supplies). Used to inspect the response as a
    /// circular operator.
    pub fn with_padding(padded: usize, m: usize, det_pixel: f64, filter: Filter) -> Result<Self> {
        filter.validate()?;
        if padded < m {
            return invalid("padded length shorter than the row");
        }
        let half = padded as f64 / 2.0;
        let response = (0..padded)
            .map(|k| {
                let bin = k.min(padded - k) as f64;
                let freq = bin / (padded as f64 * det_pixel);
                freq * filter.kind.window(bin / half / filter.cutoff)
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            m,
            filter,
            response,
            forward: planner.plan_fft_forward(padded),
            inverse: planner.plan_fft_inverse(padded),
        })
    }

    pub fn filter(&self) -> Filter {
        self.filter
    }

    pub fn padded_len(&self) -> usize {
        self.response.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Filters `input` (length `m`) into `out` (length `m`).
    pub fn apply(&self, input: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        let p = self.padded_len();
        buf.clear();
        buf.extend(input.iter().map(|&v| Complex64::new(v, 0.0)));
        buf.resize(p, Complex64::new(0.0, 0.0));
        self.forward.process(buf);
        for (z, &h) in buf.iter_mut().zip(&self.response) {
            *z *= h;
        }
        self.inverse.process(buf);
        let scale = 1.0 / p as f64;
        for (o, z) in out.iter_mut().zip(buf.iter()).take(self.m) {
            *o = z.re * scale;
        }
    }

    /// Filters two rows with one complex transform. The response is real and
    /// even, so the real and imaginary parts do not mix.
    pub fn apply_pair(&self, a: &[f64], b: &[f64], out_a: &mut [f64], out_b: &mut [f64], buf: &mut Vec<Complex64>) {
        let p = self.padded_len();
        buf.clear();
        buf.extend(a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)));
        buf.resize(p, Complex64::new(0.0, 0.0));
        self.forward.process(buf);
        for (z, &h) in buf.iter_mut().zip(&self.response) {
            *z *= h;
        }
        self.inverse.process(buf);
        let scale = 1.0 / p as f64;
        for ((oa, ob), z) in out_a.iter_mut().zip(out_b.iter_mut()).zip(buf.iter()).take(self.m) {
            *oa = z.re * scale;
            *ob = z.im * scale;
        }
    }

    pub fn apply_rows(&self, values: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; values.len()];
        out.par_chunks_mut(2 * m).zip(values.par_chunks(2 * m)).for_each_init(
            || Vec::with_capacity(self.padded_len()),
            |buf, (o, rows)| {
                if rows.len() == 2 * m {
                    let (oa, ob) = o.split_at_mut(m);
                    self.apply_pair(&rows[..m], &rows[m..], oa, ob, buf);
                } else {
                    self.apply(rows, o, buf);
                }
            },
        );
        out
    }
}

pub fn filter_sinogram(sino: &Sinogram, filter: Filter, det_pixel: f64) -> Result<Sinogram> {
    let ramp = RampFilter::new(sino.m, det_pixel, filter)?;
    Ok(Sinogram { values: ramp.apply_rows(&sino.values), ..sino.clone() })
}

/// Per-view constants for pixel-driven backprojection. For a point `p`,
/// `u = u0 + ux*x + uy*y` is its depth along the detector normal, the
/// fractional detector index is `idx0 + idx_scale * (t0 + tx*x + ty*y) / u`
/// and the backprojection weight is `gain / w^2` with `w = w0 + wx*x + wy*y`.
#[derive(Debug, Clone, Copy)]
struct View {
    u0: f64,
    ux: f64,
    uy: f64,
    t0: f64,
    tx: f64,
    ty: f64,
    w0: f64,
    wx: f64,
    wy: f64,
    idx0: f64,
    idx_scale: f64,
    gain: f64,
}

impl View {
    /// Also returns the cos(gamma) pre-weights of the row.
    fn new(f: &ViewFrame, cfg: &ScannerConfig, g: &GeometryParams, weighting: Weighting) -> (Self, Vec<f64>) {
        let (m, pitch) = (cfg.n_d, cfg.det_pixel);
        let mut normal = Point::new(f.axis.y, -f.axis.x);
        if (f.det_center - f.source).dot(normal) < 0.0 {
            normal = normal * -1.0;
        }
        let depth = (f.det_center - f.source).dot(normal);
        let foot = (f.source - f.det_center).dot(f.axis);
        let (w_dir, gain, cos_gamma): (Point, f64, Vec<f64>) = match weighting {
            Weighting::Exact => {
                let to_center = f.source * (-1.0 / f.source.norm());
                let (cn, ca) = (normal.dot(to_center) * depth, f.axis.dot(to_center));
                let cos = (0..m)
                    .map(|i| {
                        let along = element_offset(i, m, pitch) - foot;
                        (cn + ca * along) / (depth * depth + along * along).sqrt()
                    })
                    .collect();
                (normal, f.source.norm() * depth, cos)
            }
            Weighting::Ideal => {
                let d = cfg.r_s + g.r_d;
                let cos = (0..m)
                    .map(|i| {
                        let u = element_offset(i, m, pitch);
                        d / (d * d + u * u).sqrt()
                    })
                    .collect();
                (Point::new(f.angle.cos(), f.angle.sin()), cfg.r_s * d, cos)
            }
        };
        let view = View {
            u0: -f.source.dot(normal),
            ux: normal.x,
            uy: normal.y,
            t0: -f.source.dot(f.axis),
            tx: f.axis.x,
            ty: f.axis.y,
            w0: -f.source.dot(w_dir),
            wx: w_dir.x,
            wy: w_dir.y,
            idx0: foot / pitch + 0.5 * (m as f64 - 1.0),
            idx_scale: depth / pitch,
            gain,
        };
        (view, cos_gamma)
    }

    /// `row` is a filtered row with one zero on each side, so samples past
    /// the detector ends fade to zero without a branch.
    #[inline(always)]
    fn sample(&self, row: &[f64], x: f64, y: f64) -> f64 {
        let u = self.u0 + self.ux * x + self.uy * y;
        if u <= 0.0 {
            return 0.0;
        }
        let inv = 1.0 / u;
        let idx = self.idx0 + self.idx_scale * (self.t0 + self.tx * x + self.ty * y) * inv;
        let last = (row.len() - 1) as f64;
        let pos = (idx + 1.0).max(0.0).min(last);
        let i0 = (pos as usize).min(row.len() - 2);
        let frac = pos - i0 as f64;
        let q = row[i0] + (row[i0 + 1] - row[i0]) * frac;
        let w = 1.0 / (self.w0 + self.wx * x + self.wy * y);
        self.gain * w * w * q
    }
}

/// Filtered data plus view geometry, ready for backprojection at arbitrary
/// points. Built once per parameter vector.
pub struct Backprojector {
    views: Vec<View>,
    filtered: Vec<f64>,
    m: usize,
    /// `dbeta / 2`.
    scale: f64,
}

impl Backprojector {
    pub fn new(sino: &Sinogram, cfg: &ScannerConfig, g: &GeometryParams, filter: Filter) -> Result<Self> {
        let ramp = RampFilter::new(cfg.n_d, cfg.det_pixel, filter)?;
        Self::with_filter(sino, cfg, g, &ramp)
    }

    /// Same as [`Backprojector::new`] with a prebuilt filter, which must
    /// match the detector size.
    pub fn with_filter(sino: &Sinogram, cfg: &ScannerConfig, g: &GeometryParams, ramp: &RampFilter) -> Result<Self> {
        cfg.validate()?;
        g.validate()?;
        if sino.k != cfg.n_angles || sino.m != cfg.n_d {
            return Err(Error::DimensionMismatch(format!(
                "sinogram {}x{} vs scanner {}x{}",
                sino.k, sino.m, cfg.n_angles, cfg.n_d
            )));
        }
        if ramp.m != cfg.n_d {
            return Err(Error::DimensionMismatch(format!(
                "filter built for {} elements, scanner has {}",
                ramp.m, cfg.n_d
            )));
        }
        let m = cfg.n_d;
        let mut views = Vec::with_capacity(cfg.n_angles);
        let mut weighted = sino.values.clone();
        for (f, row) in view_frames(cfg, g).iter().zip(weighted.chunks_mut(m)) {
            let (view, cos_gamma) = View::new(f, cfg, g, ramp.filter.weighting);
            views.push(view);
            row.iter_mut().zip(cos_gamma).for_each(|(y, c)| *y *= c);
        }
        let mut filtered = Vec::with_capacity(cfg.n_angles * (m + 2));
        for row in ramp.apply_rows(&weighted).chunks(m) {
            filtered.push(0.0);
            filtered.extend_from_slice(row);
            filtered.push(0.0);
        }
        Ok(Self { filtered, views, m, scale: 0.5 * cfg.angle_step() })
    }

    /// Filtered (and cos-weighted) projection data for view `k`.
    pub fn filtered_row(&self, k: usize) -> &[f64] {
        let stride = self.m + 2;
        &self.filtered[k * stride + 1..k * stride + 1 + self.m]
    }

    /// Reconstruction at a single point.
    pub fn value_at(&self, p: Point) -> f64 {
        let total: f64 = self
            .views
            .iter()
            .zip(self.filtered.chunks_exact(self.m + 2))
            .map(|(v, row)| v.sample(row, p.x, p.y))
            .sum();
        finite_or_zero(total * self.scale)
    }

    pub fn values_at(&self, points: &[Point]) -> Vec<f64> {
        let mut out = vec![0.0; points.len()];
        out.par_chunks_mut(256).zip(points.par_chunks(256)).for_each(|(o, pts)| {
            for (v, row) in self.views.iter().zip(self.filtered.chunks_exact(self.m + 2)) {
                for (acc, p) in o.iter_mut().zip(pts) {
                    *acc += v.sample(row, p.x, p.y);
                }
            }
            for acc in o.iter_mut() {
                *acc = finite_or_zero(*acc * self.scale);
            }
        });
        out
    }

    pub fn image(&self, n: usize, fov: f64) -> ImageGrid {
        let mut img = ImageGrid::zeros(n, fov);
        let xs: Vec<f64> = (0..n).map(|c| img.pixel_center(0, c).x).collect();
        let ys: Vec<f64> = (0..n).map(|r| img.pixel_center(r, 0).y).collect();
        img.values.par_chunks_mut(n).enumerate().for_each(|(r, out)| {
            let y = ys[r];
            for (v, row) in self.views.iter().zip(self.filtered.chunks_exact(self.m + 2)) {
                for (o, &x) in out.iter_mut().zip(&xs) {
                    *o += v.sample(row, x, y);
                }
            }
            for o in out.iter_mut() {
                *o = finite_or_zero(*o * self.scale);
            }
        });
        img
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

pub fn fbp_reconstruct(
    sino: &Sinogram,
    cfg: &ScannerConfig,
    g: &GeometryParams,
    n: usize,
    fov: f64,
    filter: Filter,
) -> Result<ImageGrid> {
    if n < 1 || !(fov > 0.0) {
        return invalid("reconstruction grid must be non-empty");
    }
    Ok(Backprojector::new(sino, cfg, g, filter)?.image(n, fov))
}
