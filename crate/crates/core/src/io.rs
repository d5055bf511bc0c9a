//! On-disk formats. A raster is a JSON header `<path>.json` next to a raw
//! little-endian f64 payload `<path>.bin`; images can also be exported as
//! 16-bit PGM for viewing.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{file_error, invalid, Error, Result};
use crate::geometry::GeometryFile;
use crate::grid::ImageGrid;
use crate::projector::Sinogram;

pub const DTYPE: &str = "f64le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterKind {
    Image,
    Sinogram,
}

impl RasterKind {
    fn name(self) -> &'static str {
        match self {
            RasterKind::Image => "image",
            RasterKind::Sinogram => "sinogram",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub kind: RasterKind,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryFile>,
    /// CRC32 of the payload bytes.
    pub checksum: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Image(ImageGrid),
    Sinogram { sino: Sinogram, geometry: Option<GeometryFile> },
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn header_path(path: &Path) -> PathBuf {
    with_suffix(path, ".json")
}

pub fn payload_path(path: &Path) -> PathBuf {
    with_suffix(path, ".bin")
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn write_parts(path: &Path, header: &RasterHeader, payload: &[u8]) -> Result<()> {
    let bin = payload_path(path);
    fs::write(&bin, payload).map_err(file_error(&bin))?;
    let json = header_path(path);
    fs::write(&json, serde_json::to_vec_pretty(header)?).map_err(file_error(&json))
}

pub fn write_image(path: &Path, img: &ImageGrid) -> Result<()> {
    let payload = encode(&img.values);
    let header = RasterHeader {
        kind: RasterKind::Image,
        rows: img.n,
        cols: img.n,
        dtype: DTYPE.into(),
        fov_mm: Some(img.fov),
        angles: None,
        geometry: None,
        checksum: crc32fast::hash(&payload),
    };
    write_parts(path, &header, &payload)
}

pub fn write_sinogram(path: &Path, sino: &Sinogram, geometry: Option<&GeometryFile>) -> Result<()> {
    let payload = encode(&sino.values);
    let header = RasterHeader {
        kind: RasterKind::Sinogram,
        rows: sino.k,
        cols: sino.m,
        dtype: DTYPE.into(),
        fov_mm: None,
        angles: Some(sino.angles.clone()),
        geometry: geometry.cloned(),
        checksum: crc32fast::hash(&payload),
    };
    write_parts(path, &header, &payload)
}

pub fn read_header(path: &Path) -> Result<RasterHeader> {
    let json = header_path(path);
    let text = fs::read(&json).map_err(file_error(&json))?;
    Ok(serde_json::from_slice(&text)?)
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let header = read_header(path)?;
    if header.dtype != DTYPE {
        return Err(Error::UnknownDtype(header.dtype));
    }
    let bin = payload_path(path);
    let bytes = fs::read(&bin).map_err(file_error(&bin))?;
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::InvalidArgument("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::PayloadLength { expected, actual: bytes.len() });
    }
    let actual = crc32fast::hash(&bytes);
    if actual != header.checksum {
        return Err(Error::Checksum { expected: header.checksum, actual });
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    match header.kind {
        RasterKind::Image => {
            if header.rows != header.cols {
                return Err(Error::DimensionMismatch(format!("image is {}x{}, must be square", header.rows, header.cols)));
            }
            let fov = header.fov_mm.ok_or_else(|| Error::InvalidArgument("image header lacks fov_mm".into()))?;
            Ok(Raster::Image(ImageGrid::new(header.rows, fov, values)?))
        }
        RasterKind::Sinogram => {
            let angles = header.angles.ok_or_else(|| Error::InvalidArgument("sinogram header lacks angles".into()))?;
            let sino = Sinogram::new(header.rows, header.cols, values, angles)?;
            Ok(Raster::Sinogram { sino, geometry: header.geometry })
        }
    }
}

fn wrong_kind(found: RasterKind, wanted: RasterKind) -> Error {
    Error::WrongKind { found: found.name().into(), wanted: wanted.name().into() }
}

pub fn read_image(path: &Path) -> Result<ImageGrid> {
    match read_raster(path)? {
        Raster::Image(img) => Ok(img),
        Raster::Sinogram { .. } => Err(wrong_kind(RasterKind::Sinogram, RasterKind::Image)),
    }
}

pub fn read_sinogram(path: &Path) -> Result<(Sinogram, Option<GeometryFile>)> {
    match read_raster(path)? {
        Raster::Sinogram { sino, geometry } => Ok((sino, geometry)),
        Raster::Image(_) => Err(wrong_kind(RasterKind::Image, RasterKind::Sinogram)),
    }
}

/// 16-bit grey levels: `[min, max]` maps affinely onto `[0, 65535]`, a
/// constant image maps to 32768.
pub fn pgm_levels(img: &ImageGrid) -> Vec<u16> {
    let (lo, hi) = img.min_max();
    if !(hi > lo) {
        return vec![32768; img.values.len()];
    }
    let scale = 65535.0 / (hi - lo);
    img.values.iter().map(|v| ((v - lo) * scale).round().clamp(0.0, 65535.0) as u16).collect()
}

pub fn pgm_bytes(img: &ImageGrid) -> Vec<u8> {
    let mut out = format!("P5 {} {} 65535\n", img.n, img.n).into_bytes();
    for level in pgm_levels(img) {
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

pub fn export_pgm(img: &ImageGrid, path: &Path) -> Result<()> {
    if img.values.iter().any(|v| !v.is_finite()) {
        return invalid("cannot export an image with non-finite values");
    }
    fs::write(path, pgm_bytes(img)).map_err(file_error(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    fs::write(path, text).map_err(file_error(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(file_error(path))?;
    Ok(serde_json::from_slice(&text)?)
}
