//! Geometry self-calibration: find the parameters under which the FBP of a
//! calibration scan correlates best with the known phantom image.

pub mod de;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fbp::{Backprojector, Filter, RampFilter};
use crate::geometry::{ray_set, GeometryParams, Point, ScannerConfig};
use crate::grid::ImageGrid;
use crate::phantoms::mirror_image;
use crate::projector::{adjoint_project, Sinogram};

pub use de::{de_minimize, default_bounds, DeOptions, DeResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Correlation of the FBP image with the reference.
    #[default]
    Fbp,
    /// Correlation of the reprojected reference with the data.
    Sino,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbp" => Ok(Objective::Fbp),
            "sino" => Ok(Objective::Sino),
            other => Err(Error::InvalidArgument(format!("unknown objective {other:?} (expected fbp or sino)"))),
        }
    }
}

/// A calibration scan together with the image of the object scanned.
#[derive(Debug, Clone)]
pub struct CalibProblem {
    pub sino: Sinogram,
    pub reference: ImageGrid,
    pub reference_mirror: ImageGrid,
    pub cfg: ScannerConfig,
    pub filter: Filter,
    ramp: RampFilter,
    // pixels where either reference is non-zero, with both weights
    support: Vec<Point>,
    weights: Vec<[f64; 2]>,
}

impl CalibProblem {
    pub fn new(sino: Sinogram, reference: ImageGrid, cfg: ScannerConfig, filter: Filter) -> Result<Self> {
        cfg.validate()?;
        if sino.k != cfg.n_angles || sino.m != cfg.n_d {
            return Err(Error::DimensionMismatch(format!(
                "sinogram {}x{} vs scanner {}x{}",
                sino.k, sino.m, cfg.n_angles, cfg.n_d
            )));
        }
        if reference.norm() == 0.0 {
            return invalid("calibration reference image is empty");
        }
        let ramp = RampFilter::new(cfg.n_d, cfg.det_pixel, filter)?;
        let reference_mirror = mirror_image(&reference);
        let n = reference.n;
        let mut support = Vec::new();
        let mut weights = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let w = [reference.at(r, c), reference_mirror.at(r, c)];
                if w != [0.0, 0.0] {
                    support.push(reference.pixel_center(r, c));
                    weights.push(w);
                }
            }
        }
        Ok(Self { sino, reference, reference_mirror, cfg, filter, ramp, support, weights })
    }

    pub fn recon_n(&self) -> usize {
        self.reference.n
    }

    pub fn fov(&self) -> f64 {
        self.reference.fov
    }

    /// `(<X_ref, f>, <mirror(X_ref), f>)` for the FBP image `f` at `theta`.
    /// Only the pixels where a reference is non-zero are reconstructed.
    pub fn correlations(&self, theta: &GeometryParams) -> Result<(f64, f64)> {
        let bp = Backprojector::with_filter(&self.sino, &self.cfg, theta, &self.ramp)?;
        let values = bp.values_at(&self.support);
        let mut acc = (0.0, 0.0);
        for (v, [a, b]) in values.iter().zip(&self.weights) {
            acc.0 += a * v;
            acc.1 += b * v;
        }
        Ok(acc)
    }

    /// `((A x_ref)^T y, (A mirror(x_ref))^T y)`, computed as `x^T (A^T y)`.
    pub fn sino_correlations(&self, theta: &GeometryParams) -> Result<(f64, f64)> {
        theta.validate()?;
        let rays = ray_set(&self.cfg, theta);
        let back = adjoint_project(&self.sino, &rays, self.recon_n(), self.fov())?;
        Ok((self.reference.dot(&back), self.reference_mirror.dot(&back)))
    }
}

fn negated_max(c: Result<(f64, f64)>) -> f64 {
    // parameters the geometry rejects score as "no correlation"
    match c {
        Ok((a, b)) => {
            let v = -a.max(b);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        }
        Err(_) => 0.0,
    }
}

/// `-max(<X_ref, f>, <mirror(X_ref), f>)`, `f` the FBP image at `theta`.
pub fn objective_j(theta: &GeometryParams, prob: &CalibProblem) -> f64 {
    negated_max(prob.correlations(theta))
}

/// `-max((A x_ref)^T y, (A mirror(x_ref))^T y)` with `A` built at `theta`.
pub fn objective_j_sino(theta: &GeometryParams, prob: &CalibProblem) -> f64 {
    negated_max(prob.sino_correlations(theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub best_theta: GeometryParams,
    pub best_value: f64,
    pub trace: Vec<f64>,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub seed: u64,
    /// The mirrored reference correlated better at `best_theta`.
    pub mirrored: bool,
    pub objective: Objective,
}

pub fn calibrate(prob: &CalibProblem, opts: &DeOptions, objective: Objective) -> Result<OptimizerReport> {
    if opts.bounds.len() != GeometryParams::DIM {
        return invalid(format!("calibration searches {} parameters, got {} bounds", GeometryParams::DIM, opts.bounds.len()));
    }
    let eval = |x: &[f64]| -> f64 {
        let theta = GeometryParams::from_slice(x);
        match objective {
            Objective::Fbp => objective_j(&theta, prob),
            Objective::Sino => objective_j_sino(&theta, prob),
        }
    };
    let result = de_minimize(eval, opts)?;
    let best_theta = GeometryParams::from_slice(&result.best_x);
    let (a, b) = match objective {
        Objective::Fbp => prob.correlations(&best_theta)?,
        Objective::Sino => prob.sino_correlations(&best_theta)?,
    };
    Ok(OptimizerReport {
        best_theta,
        best_value: result.best_value,
        trace: result.trace,
        generations: result.generations,
        evaluations: result.evaluations,
        converged: result.converged,
        seed: opts.seed,
        mirrored: b > a,
        objective,
    })
}
