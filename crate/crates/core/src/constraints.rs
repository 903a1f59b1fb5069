//! Per-plane projection operators and support-mask builders.
//!
//! Constraints are applied in a fixed order — amplitude, then phase, then
//! support — so the region outside a support mask is exactly the configured
//! outside value. The projection is idempotent.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::wavefield::ComplexField;

/// Phase rule applied to a transmission function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseMode {
    Free,
    /// Force the phase to zero (real, nonnegative transmission).
    Zero,
    /// Clamp the phase into `[0, max]` radians.
    Clamp(f64),
}

/// Projection rules for one plane's transmission function.
#[derive(Debug, Clone)]
pub struct PlaneConstraint {
    /// Pixels outside this mask are set to `outside_value`; `None` keeps
    /// every pixel inside.
    pub support: Option<Array2<bool>>,
    pub outside_value: Complex64,
    /// Upper bound on `|t|` (a passive sample cannot amplify).
    pub amplitude_max: Option<f64>,
    /// Force `|t|` to this value (pure-phase samples).
    pub amplitude_fixed: Option<f64>,
    pub phase_mode: PhaseMode,
}

impl Default for PlaneConstraint {
    fn default() -> Self {
        Self {
            support: None,
            outside_value: Complex64::new(1.0, 0.0),
            amplitude_max: None,
            amplitude_fixed: None,
            phase_mode: PhaseMode::Free,
        }
    }
}

impl PlaneConstraint {
    /// Opaque-object rule: phase zero, amplitude capped at one.
    pub fn positive_absorption() -> Self {
        Self { amplitude_max: Some(1.0), phase_mode: PhaseMode::Zero, ..Self::default() }
    }

    /// Pure-phase rule: unit amplitude, phase clamped into `[0, max]`.
    pub fn pure_phase_clamped(phase_max: f64) -> Self {
        Self {
            amplitude_fixed: Some(1.0),
            phase_mode: PhaseMode::Clamp(phase_max),
            ..Self::default()
        }
    }

    pub fn with_support(mut self, mask: Array2<bool>) -> Self {
        self.support = Some(mask);
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(a) = self.amplitude_max {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "amplitude bound must be positive, got {a}"
                )));
            }
        }
        if let Some(a) = self.amplitude_fixed {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "fixed amplitude must be positive, got {a}"
                )));
            }
        }
        if let PhaseMode::Clamp(m) = self.phase_mode {
            if m < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "phase clamp must be nonnegative, got {m}"
                )));
            }
        }
        if let Some(s) = &self.support {
            if s.dim() != (n, n) {
                return Err(Error::GridMismatch { expected: n, got: s.nrows() });
            }
        }
        Ok(())
    }
}

/// One [`PlaneConstraint`] per plane of a stack.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    planes: Vec<PlaneConstraint>,
}

impl ConstraintSet {
    pub fn new(planes: Vec<PlaneConstraint>) -> Self {
        Self { planes }
    }

    /// The same rule for every one of `count` planes.
    pub fn uniform(constraint: PlaneConstraint, count: usize) -> Self {
        Self { planes: vec![constraint; count] }
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn plane(&self, p: usize) -> &PlaneConstraint {
        &self.planes[p]
    }

    pub fn planes(&self) -> &[PlaneConstraint] {
        &self.planes
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for c in &self.planes {
            c.validate(n)?;
        }
        Ok(())
    }
}

/// Projects a transmission estimate onto the constraint set: amplitude
/// rules first, then the phase rule, then the support rule.
///
/// Pixels already satisfying the rules pass through bit-identical, which
/// keeps the projection exactly idempotent.
pub fn apply(constraint: &PlaneConstraint, estimate: &ComplexField) -> ComplexField {
    let mut out = estimate.clone();
    for v in out.values_mut().iter_mut() {
        let amp = v.norm();
        let phase = if amp > 0.0 { v.arg() } else { 0.0 };
        let mut amp2 = amp;
        let mut phase2 = phase;
        if let Some(fixed) = constraint.amplitude_fixed {
            amp2 = fixed;
        } else if let Some(max) = constraint.amplitude_max {
            amp2 = amp2.min(max);
        }
        match constraint.phase_mode {
            PhaseMode::Free => {}
            PhaseMode::Zero => phase2 = 0.0,
            PhaseMode::Clamp(max) => phase2 = phase2.clamp(0.0, max),
        }
        if amp2 != amp || phase2 != phase {
            *v = Complex64::from_polar(amp2, phase2);
        }
    }
    if let Some(mask) = &constraint.support {
        for (v, &inside) in out.values_mut().iter_mut().zip(mask.iter()) {
            if !inside {
                *v = constraint.outside_value;
            }
        }
    }
    out
}

/// One 8-neighborhood dilation step.
fn dilate_once(mask: &Array2<bool>) -> Array2<bool> {
    let (rows, cols) = mask.dim();
    let mut out = mask.clone();
    for r in 0..rows {
        for c in 0..cols {
            if mask[[r, c]] {
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let rr = r as i64 + dr;
                        let cc = c as i64 + dc;
                        if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                            out[[rr as usize, cc as usize]] = true;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn dilate(mask: &Array2<bool>, steps: usize) -> Array2<bool> {
    let mut out = mask.clone();
    for _ in 0..steps {
        out = dilate_once(&out);
    }
    out
}

/// Labels 8-connected components of `mask`. Returns per-pixel labels
/// (0 = background) and the component count.
pub fn label_components(mask: &Array2<bool>) -> (Array2<u32>, usize) {
    let (rows, cols) = mask.dim();
    let mut labels = Array2::zeros((rows, cols));
    let mut next = 0u32;
    let mut queue = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if mask[[r, c]] && labels[[r, c]] == 0 {
                next += 1;
                labels[[r, c]] = next;
                queue.push((r, c));
                while let Some((qr, qc)) = queue.pop() {
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            let rr = qr as i64 + dr;
                            let cc = qc as i64 + dc;
                            if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols
                            {
                                let (rr, cc) = (rr as usize, cc as usize);
                                if mask[[rr, cc]] && labels[[rr, cc]] == 0 {
                                    labels[[rr, cc]] = next;
                                    queue.push((rr, cc));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Deviation of each pixel from the background transmission (assumed 1).
fn deviation_map(field: &ComplexField) -> Array2<f64> {
    field.values().mapv(|v| (v - Complex64::new(1.0, 0.0)).norm())
}

/// Builds a loose support: the thresholded object footprint grown until its
/// area is about `scale` times the footprint area (at least one dilation).
/// An empty footprint yields a full mask with a warning.
pub fn loose_mask(reference: &ComplexField, scale: f64) -> Result<Array2<bool>> {
    if !(scale >= 1.0) {
        return Err(Error::InvalidParameter(format!("mask scale must be >= 1, got {scale}")));
    }
    let dev = deviation_map(reference);
    let max_dev = dev.iter().fold(0.0_f64, |a, &b| a.max(b));
    let n = reference.n();
    if max_dev < 1e-12 {
        log::warn!("loose mask reference has no object footprint; using full support");
        return Ok(Array2::from_elem((n, n), true));
    }
    let footprint = dev.mapv(|d| d > 0.5 * max_dev);
    let target = (scale * footprint.iter().filter(|&&b| b).count() as f64).round() as usize;
    let mut mask = dilate_once(&footprint);
    while mask.iter().filter(|&&b| b).count() < target {
        let grown = dilate_once(&mask);
        if grown == mask {
            break; // saturated the grid
        }
        mask = grown;
    }
    Ok(mask)
}

fn box_filter3(map: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = map.dim();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            let mut count = 0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let rr = r as i64 + dr;
                    let cc = c as i64 + dc;
                    if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                        acc += map[[rr as usize, cc as usize]];
                        count += 1;
                    }
                }
            }
            out[[r, c]] = acc / count as f64;
        }
    }
    out
}

/// Builds tight supports from an initial reconstruction: connected
/// components whose (3x3-smoothed) deviation exceeds `threshold` times the
/// maximum deviation, each dilated by two pixels. Smoothing keeps
/// single-pixel measurement noise from spawning spurious components.
pub fn tight_mask(initial_recon: &ComplexField, threshold: f64) -> Result<Array2<bool>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let dev = box_filter3(&deviation_map(initial_recon));
    let max_dev = dev.iter().fold(0.0_f64, |a, &b| a.max(b));
    if max_dev < 1e-12 {
        return Err(Error::NoComponent);
    }
    let core = dev.mapv(|d| d > threshold * max_dev);
    let (_, count) = label_components(&core);
    if count == 0 {
        return Err(Error::NoComponent);
    }
    Ok(dilate(&core, 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::Grid;

    fn grid() -> Grid {
        Grid::new(128, 1.0, 0.5).unwrap()
    }

    fn disc_field(cr: usize, cc: usize, radius: f64, value: Complex64) -> ComplexField {
        ComplexField::from_fn(grid(), |r, c| {
            let dr = r as f64 - cr as f64;
            let dc = c as f64 - cc as f64;
            if (dr * dr + dc * dc).sqrt() <= radius {
                value
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    #[test]
    fn projection_is_identity_on_satisfying_input() {
        let c = PlaneConstraint::positive_absorption();
        let t = disc_field(64, 64, 10.0, Complex64::new(0.4, 0.0));
        let out = apply(&c, &t);
        assert_eq!(out.values(), t.values());
    }

    #[test]
    fn amplitude_threshold_caps_modulus() {
        let c = PlaneConstraint { amplitude_max: Some(1.0), ..Default::default() };
        let t = ComplexField::constant(grid(), Complex64::from_polar(1.3, 0.7));
        let out = apply(&c, &t);
        for v in out.values().iter() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!((v.arg() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_phase_clamp_matches_expected_projection() {
        let c = PlaneConstraint::pure_phase_clamped(0.5);
        let t = ComplexField::constant(grid(), Complex64::from_polar(0.8, 0.9));
        let out = apply(&c, &t);
        for v in out.values().iter() {
            assert!((v - Complex64::from_polar(1.0, 0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_is_idempotent() {
        let mask = Array2::from_shape_fn((128, 128), |(r, c)| (r + 2 * c) % 7 != 0);
        let c = PlaneConstraint {
            support: Some(mask),
            amplitude_max: Some(1.0),
            phase_mode: PhaseMode::Clamp(0.4),
            ..Default::default()
        };
        let t = ComplexField::from_fn(grid(), |r, c| {
            Complex64::from_polar(0.3 + (r as f64 / 40.0), (c as f64 / 20.0) - 2.0)
        });
        let once = apply(&c, &t);
        let twice = apply(&c, &once);
        assert_eq!(once.values(), twice.values());
    }

    #[test]
    fn support_sets_outside_exactly() {
        let mut mask = Array2::from_elem((128, 128), false);
        mask[[64, 64]] = true;
        let c = PlaneConstraint {
            support: Some(mask),
            outside_value: Complex64::new(1.0, 0.0),
            ..Default::default()
        };
        let t = ComplexField::constant(grid(), Complex64::new(0.25, 0.25));
        let out = apply(&c, &t);
        for ((r, col), v) in out.values().indexed_iter() {
            if (r, col) == (64, 64) {
                assert_eq!(*v, Complex64::new(0.25, 0.25));
            } else {
                assert_eq!(*v, Complex64::new(1.0, 0.0));
            }
        }
    }

    #[test]
    fn loose_mask_area_tracks_scale() {
        let t = disc_field(64, 64, 10.0, Complex64::new(0.0, 0.0));
        let footprint_area = t
            .values()
            .iter()
            .filter(|v| (*v - Complex64::new(1.0, 0.0)).norm() > 0.5)
            .count() as f64;
        let mask = loose_mask(&t, 4.0).unwrap();
        let area = mask.iter().filter(|&&b| b).count() as f64;
        let ratio = area / footprint_area;
        assert!((3.5..=4.5).contains(&ratio), "mask/footprint ratio {ratio}");
    }

    #[test]
    fn loose_mask_scale_one_is_single_dilation() {
        let t = disc_field(40, 80, 6.0, Complex64::new(0.0, 0.0));
        let footprint = t.values().mapv(|v| (v - Complex64::new(1.0, 0.0)).norm() > 0.5);
        let mask = loose_mask(&t, 1.0).unwrap();
        assert_eq!(mask, dilate_once(&footprint));
    }

    #[test]
    fn loose_mask_saturates_on_full_footprint() {
        let t = ComplexField::constant(grid(), Complex64::new(0.0, 0.0));
        let mask = loose_mask(&t, 4.0).unwrap();
        assert!(mask.iter().all(|&b| b));
    }

    #[test]
    fn loose_mask_on_empty_reference_returns_full_support() {
        let t = ComplexField::plane_wave(grid());
        let mask = loose_mask(&t, 4.0).unwrap();
        assert!(mask.iter().all(|&b| b));
    }

    #[test]
    fn tight_mask_on_uniform_field_fails() {
        let t = ComplexField::plane_wave(grid());
        assert!(matches!(tight_mask(&t, 0.5), Err(Error::NoComponent)));
    }

    #[test]
    fn tight_mask_separates_two_spheres() {
        let g = grid();
        let t = ComplexField::from_fn(g, |r, c| {
            let d1 = ((r as f64 - 40.0).powi(2) + (c as f64 - 40.0).powi(2)).sqrt();
            let d2 = ((r as f64 - 90.0).powi(2) + (c as f64 - 90.0).powi(2)).sqrt();
            if d1 < 8.0 || d2 < 8.0 {
                Complex64::from_polar(1.0, 0.5)
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        let mask = tight_mask(&t, 0.5).unwrap();
        let (_, count) = label_components(&mask);
        assert_eq!(count, 2);
    }

    #[test]
    fn component_labeling_counts_diagonal_as_connected() {
        let mut m = Array2::from_elem((5, 5), false);
        m[[0, 0]] = true;
        m[[1, 1]] = true;
        m[[3, 4]] = true;
        let (_, count) = label_components(&m);
        assert_eq!(count, 2);
    }
}
