//! Fan-beam X-ray CT toolkit: geometry self-calibration from a known
//! calibration object, plus FBP, Tikhonov and Cauchy-prior MAP
//! reconstruction for sparse-angle data.

pub mod calib;
pub mod cli;
pub mod error;
pub mod fbp;
pub mod geometry;
pub mod io;
pub mod grid;
pub mod metrics;
pub mod phantoms;
pub mod projector;
pub mod recon;

pub use error::{Error, Result};
pub use fbp::{fbp_reconstruct, Filter, FilterKind};
pub use geometry::{GeometryFile, GeometryParams, Point, RaySet, ScannerConfig};
pub use grid::ImageGrid;
pub use projector::{NoiseSpec, Sinogram};
