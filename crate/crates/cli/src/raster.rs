//! The MSF1 raster file format.
//!
//! A minimal, bit-exact container for 2D fields:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MSF1"
//!      4     1  dtype: 1 = real f32, 2 = complex f32 (interleaved re, im)
//!      5     4  width,  u32 little-endian
//!      9     4  height, u32 little-endian
//!     13     8  pitch (length units per pixel), f64 little-endian
//!     21     8  wavelength, f64 little-endian
//!     29     —  payload, row-major little-endian samples
//! ```
//!
//! Units travel in the header so optical (µm) and electron (nm) scale data
//! share one code path.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::{Complex32, Complex64};

use multislice::wavefield::{ComplexField, Grid};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"MSF1";
pub const HEADER_LEN: usize = 29;

#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    Real(Array2<f32>),
    Complex(Array2<Complex32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub pitch: f64,
    pub wavelength: f64,
    pub data: RasterData,
}

impl Raster {
    pub fn width(&self) -> usize {
        match &self.data {
            RasterData::Real(a) => a.ncols(),
            RasterData::Complex(a) => a.ncols(),
        }
    }

    pub fn height(&self) -> usize {
        match &self.data {
            RasterData::Real(a) => a.nrows(),
            RasterData::Complex(a) => a.nrows(),
        }
    }

    pub fn from_field(field: &ComplexField) -> Self {
        let grid = field.grid();
        Raster {
            pitch: grid.pitch(),
            wavelength: grid.wavelength(),
            data: RasterData::Complex(
                field.values().mapv(|v| Complex32::new(v.re as f32, v.im as f32)),
            ),
        }
    }

    pub fn from_real(grid: Grid, map: &Array2<f64>) -> Self {
        Raster {
            pitch: grid.pitch(),
            wavelength: grid.wavelength(),
            data: RasterData::Real(map.mapv(|v| v as f32)),
        }
    }

    pub fn from_mask(grid: Grid, mask: &Array2<bool>) -> Self {
        Raster {
            pitch: grid.pitch(),
            wavelength: grid.wavelength(),
            data: RasterData::Real(mask.mapv(|b| if b { 1.0 } else { 0.0 })),
        }
    }

    /// Square grid implied by the header; errors if the raster is not square.
    pub fn grid(&self) -> Result<Grid> {
        if self.width() != self.height() {
            return Err(CliError::config(format!(
                "raster is {}x{}, but fields must be square",
                self.width(),
                self.height()
            )));
        }
        Grid::new(self.width(), self.pitch, self.wavelength).map_err(CliError::Core)
    }

    pub fn to_field(&self) -> Result<ComplexField> {
        let grid = self.grid()?;
        let values = match &self.data {
            RasterData::Real(a) => a.mapv(|v| Complex64::new(v as f64, 0.0)),
            RasterData::Complex(a) => a.mapv(|v| Complex64::new(v.re as f64, v.im as f64)),
        };
        ComplexField::from_values(grid, values).map_err(CliError::Core)
    }

    pub fn to_real(&self) -> Result<Array2<f64>> {
        match &self.data {
            RasterData::Real(a) => Ok(a.mapv(|v| v as f64)),
            RasterData::Complex(_) => {
                Err(CliError::config("expected a real raster, found a complex one"))
            }
        }
    }

    pub fn to_mask(&self) -> Result<Array2<bool>> {
        Ok(self.to_real()?.mapv(|v| v > 0.5))
    }
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    let (dtype, sample_bytes, count) = match &raster.data {
        RasterData::Real(a) => (1u8, 4usize, a.len()),
        RasterData::Complex(a) => (2u8, 8usize, a.len()),
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + count * sample_bytes);
    bytes.extend_from_slice(MAGIC);
    bytes.push(dtype);
    bytes.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&raster.pitch.to_le_bytes());
    bytes.extend_from_slice(&raster.wavelength.to_le_bytes());
    match &raster.data {
        RasterData::Real(a) => {
            for v in a.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        RasterData::Complex(a) => {
            for v in a.iter() {
                bytes.extend_from_slice(&v.re.to_le_bytes());
                bytes.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let fmt = |offset: u64, message: String| CliError::Format {
        path: path.display().to_string(),
        offset,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fmt(bytes.len() as u64, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fmt(0, format!("bad magic {:?}, expected \"MSF1\"", &bytes[0..4])));
    }
    let dtype = bytes[4];
    if dtype != 1 && dtype != 2 {
        return Err(fmt(4, format!("unknown dtype {dtype}")));
    }
    let width = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(fmt(5, format!("degenerate dimensions {width}x{height}")));
    }
    let pitch = f64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let wavelength = f64::from_le_bytes(bytes[21..29].try_into().unwrap());
    let sample_bytes = if dtype == 1 { 4 } else { 8 };
    let expected = width
        .checked_mul(height)
        .and_then(|c| c.checked_mul(sample_bytes))
        .ok_or_else(|| fmt(5, "dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(fmt(
            HEADER_LEN as u64,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    let read_f32 =
        |i: usize| f32::from_le_bytes(payload[4 * i..4 * i + 4].try_into().unwrap());
    let data = if dtype == 1 {
        RasterData::Real(Array2::from_shape_fn((height, width), |(r, c)| {
            read_f32(r * width + c)
        }))
    } else {
        RasterData::Complex(Array2::from_shape_fn((height, width), |(r, c)| {
            let i = 2 * (r * width + c);
            Complex32::new(read_f32(i), read_f32(i + 1))
        }))
    };
    Ok(Raster { pitch, wavelength, data })
}
