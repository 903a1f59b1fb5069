//! Free-space propagators and resolution helpers.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;

use super::fft::apply_spectral_kernel;
use super::field::ComplexField;
use super::grid::Grid;
use crate::error::{Error, Result};

/// Transfer functions are reused across iterations; a reconstruction loop
/// revisits the same few inter-plane distances thousands of times.
static ASM_KERNELS: Lazy<Mutex<HashMap<(usize, u64, u64, u64), Arc<Vec<Complex64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

const ASM_KERNEL_CACHE_CAP: usize = 64;

/// Kernel in natural (wrapped) frequency order with the inverse-transform
/// normalization `1/n^2` folded in.
fn asm_kernel(grid: Grid, dz: f64) -> Arc<Vec<Complex64>> {
    let key = (
        grid.n(),
        grid.pitch().to_bits(),
        grid.wavelength().to_bits(),
        dz.to_bits(),
    );
    let mut cache = ASM_KERNELS.lock().unwrap();
    if let Some(k) = cache.get(&key) {
        return k.clone();
    }
    let n = grid.n();
    let lambda = grid.wavelength();
    let norm = 1.0 / (n * n) as f64;
    // natural-order frequency for index m: m/(n*pitch) up to n/2, then negative
    let freq = |m: usize| -> f64 {
        let signed = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
        signed / (n as f64 * grid.pitch())
    };
    let mut kernel = Vec::with_capacity(n * n);
    for ky in 0..n {
        let sy = lambda * freq(ky);
        for kx in 0..n {
            let sx = lambda * freq(kx);
            let arg = 1.0 - sx * sx - sy * sy;
            if arg < 0.0 {
                kernel.push(Complex64::new(0.0, 0.0));
            } else {
                kernel.push(
                    Complex64::from_polar(norm, 2.0 * PI * dz / lambda * arg.sqrt()),
                );
            }
        }
    }
    if cache.len() >= ASM_KERNEL_CACHE_CAP {
        cache.clear();
    }
    let kernel = Arc::new(kernel);
    cache.insert(key, kernel.clone());
    kernel
}

/// Angular-spectrum propagation over a distance `dz` (negative for backward).
///
/// Multiplies the centered spectrum by
/// `H(f) = exp(i 2π dz/λ sqrt(1 - (λ f_x)^2 - (λ f_y)^2))` on the propagating
/// band and by zero where the square-root argument is negative. Evanescent
/// components are dropped rather than decayed so that backward propagation
/// stays bounded. `dz == 0` returns the input unchanged.
pub fn asm_propagate(u: &ComplexField, dz: f64) -> ComplexField {
    assert!(dz.is_finite(), "propagation distance must be finite");
    if dz == 0.0 {
        return u.clone();
    }
    let kernel = asm_kernel(u.grid(), dz);
    ComplexField::from_values(u.grid(), apply_spectral_kernel(u.values(), &kernel))
        .expect("same grid")
}

/// Far-field (Fraunhofer) pattern: the centered forward transform of `u`.
///
/// Constant phase and scale factors are omitted since only `|·|^2` is ever
/// recorded. Meaningful when the sample support is confined to the central
/// quarter of the grid (twofold oversampling per axis).
pub fn far_field(u: &ComplexField) -> ComplexField {
    super::fft::dft2(u)
}

/// Inverse of [`far_field`]; `far_field_inv(far_field(u)) == u`.
pub fn far_field_inv(u: &ComplexField) -> ComplexField {
    super::fft::idft2(u)
}

/// Classical axial resolution limit `2 λ / NA^2`.
pub fn r_axial(wavelength: f64, na: f64) -> Result<f64> {
    if !(na > 0.0 && na <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "numerical aperture must lie in (0, 1], got {na}"
        )));
    }
    Ok(2.0 * wavelength / (na * na))
}

/// Relativistic de Broglie wavelength of an electron, in nanometers.
///
/// `λ = h / sqrt(2 m0 e V (1 + e V / (2 m0 c^2)))` with CODATA constants;
/// `energy_kev` is the accelerating energy in keV. 80 keV gives 4.176e-3 nm.
pub fn electron_wavelength_nm(energy_kev: f64) -> Result<f64> {
    if !(energy_kev > 0.0) || !energy_kev.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "electron energy must be positive, got {energy_kev} keV"
        )));
    }
    const H: f64 = 6.626_070_15e-34; // J s
    const M0: f64 = 9.109_383_701_5e-31; // kg
    const E: f64 = 1.602_176_634e-19; // C
    const C: f64 = 2.997_924_58e8; // m/s
    let ev_joule = energy_kev * 1e3 * E;
    let rest = M0 * C * C;
    let p = (2.0 * M0 * ev_joule * (1.0 + ev_joule / (2.0 * rest))).sqrt();
    Ok(H / p * 1e9)
}
