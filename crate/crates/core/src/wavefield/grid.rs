use crate::error::{Error, Result};

/// Square sampling grid shared by all fields of one imaging setup.
///
/// `pitch` and `wavelength` carry the same length unit (µm for the optical
/// cases, nm for the electron case); all distances passed to propagators must
/// use that unit too. Frequency coordinates run over
/// `{-n/2, ..., n/2 - 1} / (n * pitch)` in cycles per length, so the zero
/// frequency sits at pixel `n/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    pitch: f64,
    wavelength: f64,
}

impl Grid {
    /// `n` must be even and at least 2; `pitch` and `wavelength` positive.
    pub fn new(n: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be even and >= 2, got {n}"
            )));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pixel pitch must be positive and finite, got {pitch}"
            )));
        }
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be positive and finite, got {wavelength}"
            )));
        }
        Ok(Self { n, pitch, wavelength })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Index of the center pixel (both axes).
    pub fn center(&self) -> usize {
        self.n / 2
    }

    /// Physical side length of the field of view.
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.pitch
    }

    /// Spatial frequency of pixel index `k` along either axis, cycles/length.
    pub fn freq(&self, k: usize) -> f64 {
        (k as f64 - self.center() as f64) / (self.n as f64 * self.pitch)
    }

    /// Physical coordinate of pixel index `k` relative to the grid center.
    pub fn coord(&self, k: usize) -> f64 {
        (k as f64 - self.center() as f64) * self.pitch
    }

    /// True if pixel `(row, col)` lies in the central `n/2 x n/2` region.
    ///
    /// Generators confine samples to this region so far-field patterns are at
    /// least twofold oversampled per axis.
    pub fn in_central_quarter(&self, row: usize, col: usize) -> bool {
        let lo = self.n / 4;
        let hi = 3 * self.n / 4;
        row >= lo && row < hi && col >= lo && col < hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_tiny_sizes() {
        assert!(Grid::new(3, 1.0, 0.5).is_err());
        assert!(Grid::new(0, 1.0, 0.5).is_err());
        assert!(Grid::new(2, 1.0, 0.5).is_ok());
    }

    #[test]
    fn rejects_nonpositive_lengths() {
        assert!(Grid::new(4, 0.0, 0.5).is_err());
        assert!(Grid::new(4, 1.0, -1.0).is_err());
        assert!(Grid::new(4, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn frequency_axis_is_centered() {
        let g = Grid::new(8, 0.5, 0.5).unwrap();
        assert_eq!(g.freq(4), 0.0);
        assert_eq!(g.freq(0), -4.0 / (8.0 * 0.5));
        assert_eq!(g.freq(7), 3.0 / (8.0 * 0.5));
    }

    #[test]
    fn central_quarter_bounds() {
        let g = Grid::new(8, 1.0, 0.5).unwrap();
        assert!(g.in_central_quarter(2, 2));
        assert!(g.in_central_quarter(5, 5));
        assert!(!g.in_central_quarter(1, 4));
        assert!(!g.in_central_quarter(6, 4));
    }
}
