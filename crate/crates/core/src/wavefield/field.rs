use ndarray::Array2;
use num_complex::Complex64;

use super::grid::Grid;
use crate::error::{Error, Result};

/// A 2D complex-valued field sampled on a [`Grid`].
///
/// Values are row-major with pixel `(0, 0)` at the top-left corner and the
/// physical center at pixel `(n/2, n/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Array2<Complex64>,
}

impl ComplexField {
    pub fn from_values(grid: Grid, values: Array2<Complex64>) -> Result<Self> {
        if values.nrows() != grid.n() || values.ncols() != grid.n() {
            return Err(Error::GridMismatch {
                expected: grid.n(),
                got: values.nrows().max(values.ncols()),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.n();
        Self { grid, values: Array2::zeros((n, n)) }
    }

    /// Field with the same value at every pixel.
    pub fn constant(grid: Grid, value: Complex64) -> Self {
        let n = grid.n();
        Self { grid, values: Array2::from_elem((n, n), value) }
    }

    /// Unit-amplitude plane wave (all ones).
    pub fn plane_wave(grid: Grid) -> Self {
        Self::constant(grid, Complex64::new(1.0, 0.0))
    }

    /// Builds a field from a per-pixel function of `(row, col)`.
    pub fn from_fn<F: FnMut(usize, usize) -> Complex64>(grid: Grid, mut f: F) -> Self {
        let n = grid.n();
        Self { grid, values: Array2::from_shape_fn((n, n), |(r, c)| f(r, c)) }
    }

    /// Real field promoted to a complex one (zero imaginary part).
    pub fn from_real(grid: Grid, real: &Array2<f64>) -> Result<Self> {
        if real.nrows() != grid.n() || real.ncols() != grid.n() {
            return Err(Error::GridMismatch { expected: grid.n(), got: real.nrows() });
        }
        Ok(Self { grid, values: real.mapv(|x| Complex64::new(x, 0.0)) })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    /// `|u|^2` per pixel.
    pub fn intensity(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm_sqr())
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm())
    }

    /// Principal-value argument per pixel, in `(-pi, pi]`.
    pub fn phase(&self) -> Array2<f64> {
        self.values.mapv(|v| v.arg())
    }

    /// Total power `sum |u|^2`.
    pub fn total_power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Elementwise product; both fields must share the grid.
    pub fn mul_elementwise(&self, other: &ComplexField) -> Result<ComplexField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { expected: self.n(), got: other.n() });
        }
        Ok(ComplexField { grid: self.grid, values: &self.values * &other.values })
    }

    /// Largest relative pointwise deviation `max |a - b| / max |b|`;
    /// zero reference fields compare by absolute deviation.
    pub fn max_rel_diff(&self, other: &ComplexField) -> f64 {
        let scale = other
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max)
            / scale
    }
}
