//! Fan-beam acquisition geometry.
//!
//! The object frame is fixed; the source and flat detector rotate about the
//! centre of rotation (origin). For an acquisition angle `phi` the radial unit
//! vector is `e_r = (cos phi, sin phi)` and the tangential one is
//! `e_t = (-sin phi, cos phi)`. The source sits at `-r_S e_r + h_S e_t`, the
//! detector line is centred at `r_D e_r + h_D e_t` and runs along
//! `normalize(e_t + alpha_D e_r)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotation by `angle` about the origin.
    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Known scanner constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScannerConfig {
    /// Source to centre-of-rotation distance (mm).
    pub r_s: f64,
    /// Number of detector elements.
    pub n_d: usize,
    /// Detector element pitch (mm).
    pub det_pixel: f64,
    pub n_angles: usize,
    /// Total angular sweep (rad).
    pub angular_span: f64,
}

impl Default for ScannerConfig {
    fn default() -> Self {
        Self {
            r_s: 859.46,
            n_d: 768,
            det_pixel: 2.0,
            n_angles: 360,
            angular_span: 2.0 * PI,
        }
    }
}

impl ScannerConfig {
    pub fn with_angles(self, n_angles: usize) -> Self {
        Self { n_angles, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_s.is_finite() && self.r_s > 0.0) {
            return invalid(format!("r_S must be positive, got {}", self.r_s));
        }
        if self.n_d < 2 {
            return invalid(format!("need at least 2 detector elements, got {}", self.n_d));
        }
        if !(self.det_pixel.is_finite() && self.det_pixel > 0.0) {
            return invalid(format!("detector pitch must be positive, got {}", self.det_pixel));
        }
        if self.n_angles < 1 {
            return invalid("need at least one projection angle");
        }
        if !(self.angular_span > 0.0 && self.angular_span <= 2.0 * PI + 1e-12) {
            return invalid(format!("angular span must lie in (0, 2pi], got {}", self.angular_span));
        }
        Ok(())
    }

    pub fn angle_step(&self) -> f64 {
        self.angular_span / self.n_angles as f64
    }
}

/// The five unknown geometry parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// First scanning angle (rad).
    pub alpha0: f64,
    /// Centre-of-rotation to detector distance (mm).
    #[serde(rename = "r_D")]
    pub r_d: f64,
    /// Tangential source shift (mm).
    #[serde(rename = "h_S")]
    pub h_s: f64,
    /// Tangential detector shift (mm).
    #[serde(rename = "h_D")]
    pub h_d: f64,
    /// Detector tilt component.
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
}

impl GeometryParams {
    pub const DIM: usize = 5;

    pub const fn new(alpha0: f64, r_d: f64, h_s: f64, h_d: f64, alpha_d: f64) -> Self {
        Self { alpha0, r_d, h_s, h_d, alpha_d }
    }

    /// True parameters of the synthetic benchmark scanner.
    pub const fn reference() -> Self {
        Self::new(2.55, 715.0, 320.0, 44.0, 0.28)
    }

    /// Aligned geometry: no shifts, no tilt, first angle zero.
    pub const fn ideal(r_d: f64) -> Self {
        Self::new(0.0, r_d, 0.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.alpha0, self.r_d, self.h_s, self.h_d, self.alpha_d]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::DIM, "geometry vector must have 5 entries");
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return invalid("geometry parameters must be finite");
        }
        if self.r_d <= 0.0 {
            return invalid(format!("r_D must be positive, got {}", self.r_d));
        }
        Ok(())
    }
}

/// Source, detector centre and detector axis for one projection angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewFrame {
    pub angle: f64,
    pub source: Point,
    pub det_center: Point,
    /// Unit vector along the detector line, pointing towards increasing
    /// element index.
    pub axis: Point,
}

impl ViewFrame {
    /// Position of detector element `i` of `m`.
    pub fn element(&self, i: usize, m: usize, pitch: f64) -> Point {
        self.det_center + self.axis * element_offset(i, m, pitch)
    }
}

/// Signed coordinate of element `i` along the detector, relative to the
/// line centre.
pub fn element_offset(i: usize, m: usize, pitch: f64) -> f64 {
    (i as f64 - (m as f64 - 1.0) / 2.0) * pitch
}

/// Explicit ray endpoints for every angle and detector element.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySet {
    pub angles: Vec<f64>,
    pub sources: Vec<Point>,
    /// Row-major `angles.len() x m` detector element centres.
    pub det_centers: Vec<Point>,
    pub m: usize,
}

impl RaySet {
    pub fn k(&self) -> usize {
        self.angles.len()
    }

    pub fn len(&self) -> usize {
        self.det_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.det_centers.is_empty()
    }

    pub fn ray(&self, k: usize, i: usize) -> (Point, Point) {
        (self.sources[k], self.det_centers[k * self.m + i])
    }

    pub fn row(&self, k: usize) -> &[Point] {
        &self.det_centers[k * self.m..(k + 1) * self.m]
    }
}

pub fn angle_list(cfg: &ScannerConfig, g: &GeometryParams) -> Vec<f64> {
    let step = cfg.angle_step();
    (0..cfg.n_angles).map(|k| g.alpha0 + k as f64 * step).collect()
}

pub fn view_frame(cfg: &ScannerConfig, g: &GeometryParams, angle: f64) -> ViewFrame {
    let (s, c) = angle.sin_cos();
    let e_r = Point::new(c, s);
    let e_t = Point::new(-s, c);
    let raw_axis = e_t + e_r * g.alpha_d;
    ViewFrame {
        angle,
        source: e_r * -cfg.r_s + e_t * g.h_s,
        det_center: e_r * g.r_d + e_t * g.h_d,
        axis: raw_axis * (1.0 / raw_axis.norm()),
    }
}

pub fn view_frames(cfg: &ScannerConfig, g: &GeometryParams) -> Vec<ViewFrame> {
    angle_list(cfg, g).into_iter().map(|a| view_frame(cfg, g, a)).collect()
}

pub fn ray_set(cfg: &ScannerConfig, g: &GeometryParams) -> RaySet {
    let frames = view_frames(cfg, g);
    let m = cfg.n_d;
    let mut det_centers = Vec::with_capacity(frames.len() * m);
    for f in &frames {
        det_centers.extend((0..m).map(|i| f.element(i, m, cfg.det_pixel)));
    }
    RaySet {
        angles: frames.iter().map(|f| f.angle).collect(),
        sources: frames.iter().map(|f| f.source).collect(),
        det_centers,
        m,
    }
}

/// On-disk geometry description (known constants plus the five unknowns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryFile {
    pub alpha0: f64,
    #[serde(rename = "r_D")]
    pub r_d: f64,
    #[serde(rename = "h_S")]
    pub h_s: f64,
    #[serde(rename = "h_D")]
    pub h_d: f64,
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
    #[serde(rename = "r_S")]
    pub r_s: f64,
    #[serde(rename = "n_D")]
    pub n_d: usize,
    pub det_pixel_mm: f64,
    pub n_angles: usize,
    pub angular_span: f64,
}

impl GeometryFile {
    pub fn new(cfg: &ScannerConfig, g: &GeometryParams) -> Self {
        Self {
            alpha0: g.alpha0,
            r_d: g.r_d,
            h_s: g.h_s,
            h_d: g.h_d,
            alpha_d: g.alpha_d,
            r_s: cfg.r_s,
            n_d: cfg.n_d,
            det_pixel_mm: cfg.det_pixel,
            n_angles: cfg.n_angles,
            angular_span: cfg.angular_span,
        }
    }

    pub fn scanner(&self) -> ScannerConfig {
        ScannerConfig {
            r_s: self.r_s,
            n_d: self.n_d,
            det_pixel: self.det_pixel_mm,
            n_angles: self.n_angles,
            angular_span: self.angular_span,
        }
    }

    pub fn params(&self) -> GeometryParams {
        GeometryParams::new(self.alpha0, self.r_d, self.h_s, self.h_d, self.alpha_d)
    }

    pub fn validate(&self) -> Result<()> {
        self.scanner().validate()?;
        self.params().validate()
    }
}
