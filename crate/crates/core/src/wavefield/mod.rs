//! Complex 2D wavefields and free-space propagation.
//!
//! Fields live on square, even-sized grids with a physical pixel pitch and a
//! wavelength in the same length unit. Transforms are centered: the zero
//! frequency (and the physical field center) sit at pixel `(n/2, n/2)`.

mod fft;
mod field;
mod grid;
mod propagate;

pub use fft::{dft2, idft2};
pub use field::ComplexField;
pub use grid::Grid;
pub use propagate::{
    asm_propagate, electron_wavelength_nm, far_field, far_field_inv, r_axial,
};
