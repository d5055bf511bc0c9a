use crate::error::{invalid, Result};
use crate::geometry::Point;

/// Square pixel raster centred on the centre of rotation.
///
/// Row 0 is the top of the image (largest `y`), column 0 the left edge
/// (smallest `x`). Values are attenuation coefficients in 1/mm.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub n: usize,
    /// Side length of the field of view (mm).
    pub fov: f64,
    pub values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(n: usize, fov: f64, values: Vec<f64>) -> Result<Self> {
        if n < 1 {
            return invalid("image must have at least one pixel per side");
        }
        if !(fov.is_finite() && fov > 0.0) {
            return invalid(format!("field of view must be positive, got {fov}"));
        }
        if values.len() != n * n {
            return invalid(format!("{} values for a {n}x{n} grid", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("image values must be finite");
        }
        Ok(Self { n, fov, values })
    }

    pub fn zeros(n: usize, fov: f64) -> Self {
        Self { n, fov, values: vec![0.0; n * n] }
    }

    /// Samples `f` at every pixel centre.
    pub fn from_fn(n: usize, fov: f64, f: impl Fn(Point) -> f64) -> Self {
        let mut img = Self::zeros(n, fov);
        for r in 0..n {
            for c in 0..n {
                img.values[r * n + c] = f(img.pixel_center(r, c));
            }
        }
        img
    }

    pub fn pixel_size(&self) -> f64 {
        self.fov / self.n as f64
    }

    pub fn pixel_center(&self, r: usize, c: usize) -> Point {
        let h = self.pixel_size();
        Point::new(
            -0.5 * self.fov + (c as f64 + 0.5) * h,
            0.5 * self.fov - (r as f64 + 0.5) * h,
        )
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n + c]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.n == other.n && (self.fov - other.fov).abs() <= 1e-12 * self.fov
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, k: f64) -> ImageGrid {
        ImageGrid { values: self.values.iter().map(|v| v * k).collect(), ..self.clone() }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
