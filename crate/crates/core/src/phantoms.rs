//! Digital phantoms: a tree-log cross-section and two calibration objects.
//!
//! Pixels take the phantom value at their centre; there is no anti-aliasing.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Point;
use crate::grid::ImageGrid;

/// L-shaped calibration block: a horizontal arm of `arm_length` and a
/// vertical arm of `short_arm_length` (defaults to `arm_length`), both
/// `arm_width` thick, sharing the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LPhantomSpec {
    pub arm_length: f64,
    pub arm_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_arm_length: Option<f64>,
    pub attenuation: f64,
    /// Centre of the bounding box (mm).
    #[serde(default)]
    pub center_offset: [f64; 2],
}

impl Default for LPhantomSpec {
    fn default() -> Self {
        Self {
            arm_length: 200.0,
            arm_width: 60.0,
            short_arm_length: None,
            attenuation: 0.05,
            center_offset: [0.0, 0.0],
        }
    }
}

impl LPhantomSpec {
    /// The calibration default: arms of unequal length, so that the mirror
    /// image is not a rotated copy.
    pub fn calibration() -> Self {
        Self { short_arm_length: Some(120.0), ..Self::default() }
    }

    fn vertical_length(&self) -> f64 {
        self.short_arm_length.unwrap_or(self.arm_length)
    }

    pub fn validate(&self) -> Result<()> {
        let short = self.vertical_length();
        if !(self.arm_width > 0.0 && self.arm_length > self.arm_width && short > self.arm_width) {
            return invalid("L phantom needs arm lengths greater than arm width > 0");
        }
        if !(self.attenuation > 0.0 && self.attenuation.is_finite()) {
            return invalid("L phantom attenuation must be positive");
        }
        Ok(())
    }

    /// Analytic area (mm^2).
    pub fn area(&self) -> f64 {
        self.arm_length * self.arm_width + (self.vertical_length() - self.arm_width) * self.arm_width
    }
}

/// Square block with a circular hole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolePhantomSpec {
    pub outer_side: f64,
    pub hole_radius: f64,
    pub hole_offset: [f64; 2],
    pub attenuation: f64,
}

impl Default for HolePhantomSpec {
    fn default() -> Self {
        Self { outer_side: 200.0, hole_radius: 30.0, hole_offset: [30.0, 20.0], attenuation: 0.05 }
    }
}

impl HolePhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_side > 0.0 && self.hole_radius > 0.0) {
            return invalid("hole phantom needs positive block side and hole radius");
        }
        if !(self.attenuation > 0.0 && self.attenuation.is_finite()) {
            return invalid("hole phantom attenuation must be positive");
        }
        let half = 0.5 * self.outer_side;
        let [ox, oy] = self.hole_offset;
        if ox.abs() + self.hole_radius >= half || oy.abs() + self.hole_radius >= half {
            return invalid("hole must lie strictly inside the block");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ellipse {
    center: Point,
    semi_a: f64,
    semi_b: f64,
    /// Orientation of the `semi_a` axis (rad).
    angle: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, p: Point) -> bool {
        let q = (p - self.center).rotate(-self.angle);
        (q.x / self.semi_a).powi(2) + (q.y / self.semi_b).powi(2) <= 1.0
    }
}

pub const RING_VALUES: [f64; 2] = [0.04, 0.05];
pub const KNOT_VALUE: f64 = 0.08;
pub const FOREIGN_VALUE: f64 = 0.5;
const N_RINGS: usize = 12;

fn log_features(fov: f64) -> (f64, Vec<Ellipse>) {
    let radius = 0.8 * fov / 2.0;
    // Feature sizes are quoted for a 200 mm log and scale with the radius.
    let s = radius / 200.0;
    let knot = |cx: f64, cy: f64, angle: f64| Ellipse {
        center: Point::new(cx * s, cy * s),
        semi_a: 25.0 * s,
        semi_b: 10.0 * s,
        angle,
        value: KNOT_VALUE,
    };
    let features = vec![
        knot(70.0, 40.0, 0.52),
        knot(-60.0, -75.0, -2.2),
        Ellipse {
            center: Point::new(-90.0 * s, 80.0 * s),
            semi_a: 6.0 * s,
            semi_b: 4.0 * s,
            angle: 0.35,
            value: FOREIGN_VALUE,
        },
    ];
    (radius, features)
}

/// Log cross-section: growth rings, two knots and a dense foreign object.
pub fn make_log_phantom(n: usize, fov: f64) -> Result<ImageGrid> {
    if n < 16 {
        return invalid(format!("log phantom needs n >= 16, got {n}"));
    }
    if !(fov > 0.0 && fov.is_finite()) {
        return invalid("field of view must be positive");
    }
    let (radius, features) = log_features(fov);
    Ok(ImageGrid::from_fn(n, fov, |p| {
        let r = p.norm();
        if r > radius {
            return 0.0;
        }
        if let Some(e) = features.iter().rev().find(|e| e.contains(p)) {
            return e.value;
        }
        let ring = ((r / radius * N_RINGS as f64) as usize).min(N_RINGS - 1);
        RING_VALUES[ring % 2]
    }))
}

pub fn make_l_phantom(n: usize, fov: f64, spec: &LPhantomSpec) -> Result<ImageGrid> {
    spec.validate()?;
    let (w, h) = (spec.arm_length, spec.vertical_length());
    let [cx, cy] = spec.center_offset;
    let (x0, y0) = (cx - 0.5 * w, cy - 0.5 * h);
    let half = 0.5 * fov;
    if x0 <= -half || y0 <= -half || x0 + w >= half || y0 + h >= half {
        return invalid("L phantom does not fit inside the field of view");
    }
    let t = spec.arm_width;
    let inside = |p: Point| {
        let (u, v) = (p.x - x0, p.y - y0);
        let horizontal = (0.0..w).contains(&u) && (0.0..t).contains(&v);
        let vertical = (0.0..t).contains(&u) && (0.0..h).contains(&v);
        horizontal || vertical
    };
    Ok(ImageGrid::from_fn(n, fov, |p| if inside(p) { spec.attenuation } else { 0.0 }))
}

pub fn make_hole_phantom(n: usize, fov: f64, spec: &HolePhantomSpec) -> Result<ImageGrid> {
    spec.validate()?;
    let half = 0.5 * spec.outer_side;
    if half >= 0.5 * fov {
        return invalid("hole phantom does not fit inside the field of view");
    }
    let hole = Point::new(spec.hole_offset[0], spec.hole_offset[1]);
    Ok(ImageGrid::from_fn(n, fov, |p| {
        let in_block = (-half..half).contains(&p.x) && (-half..half).contains(&p.y);
        if in_block && (p - hole).norm() > spec.hole_radius {
            spec.attenuation
        } else {
            0.0
        }
    }))
}

/// Left-right flip.
pub fn mirror_image(img: &ImageGrid) -> ImageGrid {
    let n = img.n;
    let mut values = Vec::with_capacity(n * n);
    for row in img.values.chunks_exact(n) {
        values.extend(row.iter().rev());
    }
    ImageGrid { n, fov: img.fov, values }
}

/// Bilinear resampling onto an `n_out x n_out` grid over the same field of
/// view. Samples beyond the outermost pixel centres are clamped to the edge.
pub fn resample_image(img: &ImageGrid, n_out: usize) -> Result<ImageGrid> {
    if n_out < 2 {
        return invalid(format!("resampled grid needs n >= 2, got {n_out}"));
    }
    let n_in = img.n;
    let scale = n_in as f64 / n_out as f64;
    let last = (n_in - 1) as f64;
    let taps: Vec<(usize, usize, f64)> = (0..n_out)
        .map(|o| {
            let u = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = (u.floor() as usize).min(n_in.saturating_sub(2));
            let frac = u - i0 as f64;
            (i0, (i0 + 1).min(n_in - 1), frac)
        })
        .collect();
    let mut values = Vec::with_capacity(n_out * n_out);
    for &(r0, r1, fr) in &taps {
        for &(c0, c1, fc) in &taps {
            let top = img.at(r0, c0) * (1.0 - fc) + img.at(r0, c1) * fc;
            let bottom = img.at(r1, c0) * (1.0 - fc) + img.at(r1, c1) * fc;
            values.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(ImageGrid { n: n_out, fov: img.fov, values })
}
