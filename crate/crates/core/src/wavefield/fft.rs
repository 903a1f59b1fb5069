//! Centered 2D discrete Fourier transforms.
//!
//! Convention: the forward transform is unnormalized, the inverse carries
//! `1/n^2`, and both are centered — the zero frequency and the physical
//! origin sit at pixel `(n/2, n/2)`. Centering is done by index shifting
//! (quadrant swap), which is exact for even grids.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::field::ComplexField;

static PLANS: Lazy<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = PLANS.lock().unwrap();
    cache
        .entry((n, forward))
        .or_insert_with(|| {
            let dir = if forward { FftDirection::Forward } else { FftDirection::Inverse };
            FftPlanner::new().plan_fft(n, dir)
        })
        .clone()
}

thread_local! {
    static TRANSPOSE_BUF: RefCell<HashMap<usize, Array2<Complex64>>> =
        RefCell::new(HashMap::new());
}

/// Quadrant swap moving pixel `(n/2, n/2)` to `(0, 0)` and back.
/// An involution for even `n`.
pub(crate) fn shift2_inplace(a: &mut Array2<Complex64>) {
    let n = a.nrows();
    debug_assert_eq!(n % 2, 0);
    let half = n / 2;
    let (mut top, mut bottom) = a.view_mut().split_at(Axis(0), half);
    for (mut rt, mut rb) in top.rows_mut().into_iter().zip(bottom.rows_mut()) {
        let st = rt.as_slice_mut().expect("contiguous row");
        let sb = rb.as_slice_mut().expect("contiguous row");
        let (tl, tr) = st.split_at_mut(half);
        let (bl, br) = sb.split_at_mut(half);
        tl.swap_with_slice(br);
        tr.swap_with_slice(bl);
    }
}

/// Blocked transpose, parallel over destination row bands.
fn transpose_into(src: &Array2<Complex64>, dst: &mut Array2<Complex64>) {
    let n = src.nrows();
    const BLOCK: usize = 32;
    dst.axis_chunks_iter_mut(Axis(0), BLOCK)
        .into_par_iter()
        .enumerate()
        .for_each(|(chunk_idx, mut band)| {
            let j0 = chunk_idx * BLOCK;
            for bi in (0..n).step_by(BLOCK) {
                for i in bi..(bi + BLOCK).min(n) {
                    for (dj, j) in (j0..j0 + band.nrows()).enumerate() {
                        band[[dj, i]] = src[[i, j]];
                    }
                }
            }
        });
}

fn fft_rows(a: &mut Array2<Complex64>, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    a.axis_chunks_iter_mut(Axis(0), 16).into_par_iter().for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, mut band| {
            for mut row in band.rows_mut() {
                fft.process_with_scratch(row.as_slice_mut().expect("contiguous row"), scratch);
            }
        },
    );
}

/// Unnormalized, uncentered 2D FFT over rows then columns.
fn fft2_inplace(a: &mut Array2<Complex64>, forward: bool) {
    let n = a.nrows();
    let fft = plan(n, forward);
    fft_rows(a, &fft);
    TRANSPOSE_BUF.with(|cell| {
        let mut map = cell.borrow_mut();
        let buf = map.entry(n).or_insert_with(|| Array2::zeros((n, n)));
        transpose_into(a, buf);
        fft_rows(buf, &fft);
        transpose_into(buf, a);
    });
}

pub(crate) fn dft2_values(values: &Array2<Complex64>) -> Array2<Complex64> {
    let mut v = values.clone();
    shift2_inplace(&mut v);
    fft2_inplace(&mut v, true);
    shift2_inplace(&mut v);
    v
}

pub(crate) fn idft2_values(values: &Array2<Complex64>) -> Array2<Complex64> {
    let mut v = values.clone();
    shift2_inplace(&mut v);
    fft2_inplace(&mut v, false);
    shift2_inplace(&mut v);
    let norm = 1.0 / (v.nrows() * v.ncols()) as f64;
    v.mapv_inplace(|x| x * norm);
    v
}

/// Applies a frequency-domain transfer function stored in natural (wrapped)
/// order: `shift -> FFT -> multiply -> IFFT -> shift`, skipping the two
/// inner shifts a centered round trip would need. The kernel must be
/// symmetric under transposition (radial kernels are) and must already
/// include the `1/n^2` inverse normalization; the multiplication happens in
/// the transposed orientation, saving two transpose passes.
pub(crate) fn apply_spectral_kernel(
    values: &Array2<Complex64>,
    kernel: &[Complex64],
) -> Array2<Complex64> {
    let n = values.nrows();
    let fwd = plan(n, true);
    let inv = plan(n, false);
    let mut v = values.clone();
    shift2_inplace(&mut v);
    fft_rows(&mut v, &fwd);
    TRANSPOSE_BUF.with(|cell| {
        let mut map = cell.borrow_mut();
        let buf = map.entry(n).or_insert_with(|| Array2::zeros((n, n)));
        transpose_into(&v, buf);
        fft_rows(buf, &fwd);
        for (x, h) in buf.iter_mut().zip(kernel.iter()) {
            *x *= *h;
        }
        fft_rows(buf, &inv);
        transpose_into(buf, &mut v);
        fft_rows(&mut v, &inv);
    });
    shift2_inplace(&mut v);
    v
}

/// Centered forward transform. `idft2(dft2(u)) == u` to machine precision.
pub fn dft2(u: &ComplexField) -> ComplexField {
    ComplexField::from_values(u.grid(), dft2_values(u.values())).expect("same grid")
}

/// Centered inverse transform, normalized by `1/n^2`.
pub fn idft2(u: &ComplexField) -> ComplexField {
    ComplexField::from_values(u.grid(), idft2_values(u.values())).expect("same grid")
}

/// O(n^4) direct evaluation of the centered DFT, used as an independent
/// oracle by transform tests. Test-only.
#[cfg(test)]
pub(crate) fn brute_force_dft2(u: &Array2<Complex64>) -> Array2<Complex64> {
    use std::f64::consts::PI;
    let n = u.nrows();
    let c = (n / 2) as f64;
    Array2::from_shape_fn((n, n), |(ky, kx)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for y in 0..n {
            for x in 0..n {
                let ph = -2.0 * PI
                    * ((ky as f64 - c) * (y as f64 - c) + (kx as f64 - c) * (x as f64 - c))
                    / n as f64;
                acc += u[[y, x]] * Complex64::from_polar(1.0, ph);
            }
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::Grid;

    fn pseudo_random_field(grid: Grid, seed: u64) -> ComplexField {
        // splitmix64 keeps the oracle tests free of RNG crate coupling
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z = z ^ (z >> 31);
            (z as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        ComplexField::from_fn(grid, |_, _| Complex64::new(next(), next()))
    }

    #[test]
    fn impulse_at_center_transforms_to_ones() {
        let grid = Grid::new(8, 1.0, 0.5).unwrap();
        let mut u = ComplexField::zeros(grid);
        u.values_mut()[[4, 4]] = Complex64::new(1.0, 0.0);
        let f = dft2(&u);
        for v in f.values().iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn ones_transform_to_center_impulse() {
        let grid = Grid::new(8, 1.0, 0.5).unwrap();
        let u = ComplexField::plane_wave(grid);
        let f = dft2(&u);
        for ((r, c), v) in f.values().indexed_iter() {
            let expect = if (r, c) == (4, 4) { 64.0 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn matches_brute_force_on_random_4x4() {
        let grid = Grid::new(4, 1.0, 0.5).unwrap();
        let u = pseudo_random_field(grid, 11);
        let f = dft2(&u);
        let oracle = brute_force_dft2(u.values());
        let scale = oracle.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
        for (a, b) in f.values().iter().zip(oracle.iter()) {
            assert!((a - b).norm() / scale < 1e-12);
        }
    }

    #[test]
    fn inverse_recovers_input() {
        let grid = Grid::new(16, 1.0, 0.5).unwrap();
        let u = pseudo_random_field(grid, 3);
        let back = idft2(&dft2(&u));
        assert!(back.max_rel_diff(&u) < 1e-12);
    }

    #[test]
    fn parseval_holds() {
        let grid = Grid::new(32, 1.0, 0.5).unwrap();
        let u = pseudo_random_field(grid, 7);
        let f = dft2(&u);
        let lhs = u.total_power();
        let rhs = f.total_power() / (32.0 * 32.0);
        assert!((lhs - rhs).abs() / lhs < 1e-12);
    }

    #[test]
    fn shift_is_involution() {
        let grid = Grid::new(6, 1.0, 0.5).unwrap();
        let u = pseudo_random_field(grid, 5);
        let mut v = u.values().clone();
        shift2_inplace(&mut v);
        shift2_inplace(&mut v);
        assert_eq!(&v, u.values());
    }

    #[test]
    fn spectral_kernel_path_matches_centered_round_trip() {
        let grid = Grid::new(32, 1.0, 0.5).unwrap();
        let u = pseudo_random_field(grid, 17);
        // identity kernel (with folded normalization) must reproduce idft2(dft2(u))
        let n = grid.n();
        let kernel = vec![Complex64::new(1.0 / (n * n) as f64, 0.0); n * n];
        let out = apply_spectral_kernel(u.values(), &kernel);
        let reference = idft2_values(&dft2_values(u.values()));
        let scale = u.values().iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
        for (a, b) in out.iter().zip(reference.iter()) {
            assert!((a - b).norm() / scale < 1e-12);
        }
    }
}
