//! Image quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::ImageGrid;

/// `||x_hat - x_true|| / ||x_true||` over the flattened images.
pub fn relative_error(x_hat: &ImageGrid, x_true: &ImageGrid) -> Result<f64> {
    relative_error_values(&x_hat.values, &x_true.values)
}

pub fn relative_error_values(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    if x_hat.len() != x_true.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} pixels", x_hat.len(), x_true.len())));
    }
    let reference: f64 = x_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    if reference == 0.0 {
        return invalid("reference image has zero norm");
    }
    let diff: f64 = x_hat.iter().zip(x_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(diff / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimOptions {
    /// Side of the Gaussian window (odd).
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`; `None` uses `max - min` of the reference image.
    pub data_range: Option<f64>,
}

impl Default for SsimOptions {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, data_range: None }
    }
}

impl SsimOptions {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return invalid(format!("SSIM window must be odd and >= 3, got {}", self.window));
        }
        if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0) {
            return invalid("SSIM sigma, k1 and k2 must be positive");
        }
        if let Some(l) = self.data_range {
            if !(l > 0.0 && l.is_finite()) {
                return invalid("SSIM data range must be positive");
            }
        }
        Ok(())
    }

    /// Normalised 1-D Gaussian taps.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    fn constants(&self, reference: &ImageGrid) -> (f64, f64) {
        let l = self.data_range.unwrap_or_else(|| {
            let (lo, hi) = reference.min_max();
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        });
        ((self.k1 * l).powi(2), (self.k2 * l).powi(2))
    }
}

/// Separable "valid" Gaussian filtering: output is `(n-w+1)^2`.
fn blur_valid(values: &[f64], n: usize, taps: &[f64]) -> Vec<f64> {
    let w = taps.len();
    let out_n = n - w + 1;
    let mut rows = vec![0.0; n * out_n];
    for r in 0..n {
        let src = &values[r * n..(r + 1) * n];
        for c in 0..out_n {
            rows[r * out_n + c] = taps.iter().zip(&src[c..c + w]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; out_n * out_n];
    for r in 0..out_n {
        for c in 0..out_n {
            out[r * out_n + c] = taps.iter().enumerate().map(|(i, t)| t * rows[(r + i) * out_n + c]).sum();
        }
    }
    out
}

/// Per-window SSIM values plus the contrast-structure term alone.
fn ssim_maps(x_hat: &ImageGrid, x_true: &ImageGrid, opts: &SsimOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    opts.validate()?;
    if x_hat.n != x_true.n {
        return Err(Error::DimensionMismatch(format!("{} vs {} pixels per side", x_hat.n, x_true.n)));
    }
    let n = x_true.n;
    if n < opts.window {
        return invalid(format!("image side {n} smaller than SSIM window {}", opts.window));
    }
    let (c1, c2) = opts.constants(x_true);
    let taps = opts.taps();
    let (a, b) = (&x_hat.values, &x_true.values);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let mu_a = blur_valid(a, n, &taps);
    let mu_b = blur_valid(b, n, &taps);
    let aa = blur_valid(&sq(a), n, &taps);
    let bb = blur_valid(&sq(b), n, &taps);
    let ab = blur_valid(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>(), n, &taps);

    let mut full = Vec::with_capacity(mu_a.len());
    let mut cs = Vec::with_capacity(mu_a.len());
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let contrast = (2.0 * cov + c2) / (va + vb + c2);
        full.push((2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * contrast);
        cs.push(contrast);
    }
    Ok((full, cs))
}

/// Mean SSIM over all window positions lying fully inside the image.
pub fn ssim(x_hat: &ImageGrid, x_true: &ImageGrid, opts: &SsimOptions) -> Result<f64> {
    let (map, _) = ssim_maps(x_hat, x_true, opts)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Mean of the contrast-structure factor alone (SSIM without the luminance
/// term).
pub fn ssim_contrast_structure(x_hat: &ImageGrid, x_true: &ImageGrid, opts: &SsimOptions) -> Result<f64> {
    let (_, cs) = ssim_maps(x_hat, x_true, opts)?;
    Ok(cs.iter().sum::<f64>() / cs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rel_error: f64,
    pub ssim: f64,
}

pub fn quality(x_hat: &ImageGrid, x_true: &ImageGrid) -> Result<QualityReport> {
    Ok(QualityReport {
        rel_error: relative_error(x_hat, x_true)?,
        ssim: ssim(x_hat, x_true, &SsimOptions::default())?,
    })
}
