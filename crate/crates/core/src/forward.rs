//! Multislice forward model and intensity recording.
//!
//! A unit plane wave enters the first plane, is multiplied by each plane's
//! transmission function, and propagates between planes by the angular
//! spectrum method. The exit wave is taken to the detector either by a
//! further angular-spectrum hop (in-line hologram) or by a far-field
//! transform (diffraction pattern), where only the intensity is kept.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::samplegen::{add_noise, NoiseSpec, SliceStack};
use crate::wavefield::{asm_propagate, far_field, ComplexField, Grid};

/// How the detector records the exit wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecordingGeometry {
    /// Near-field intensity a fixed distance downstream of the last plane.
    Hologram { detector_distance: f64 },
    /// Far-field intensity with an optional central beamstop (radius in
    /// pixels; 0 disables it).
    Diffraction { beamstop_radius: f64 },
}

impl RecordingGeometry {
    /// Beamstop covering `n/40` pixels, the default for simulated patterns.
    pub fn diffraction_with_default_beamstop(grid: Grid) -> Self {
        RecordingGeometry::Diffraction { beamstop_radius: grid.n() as f64 / 40.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RecordingGeometry::Hologram { detector_distance } => {
                if !(*detector_distance > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "detector distance must be positive, got {detector_distance}"
                    )));
                }
            }
            RecordingGeometry::Diffraction { beamstop_radius } => {
                if *beamstop_radius < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "beamstop radius must be nonnegative, got {beamstop_radius}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A recorded 2D intensity with its geometry and validity mask.
///
/// `valid_mask` is false where no intensity was measured (beamstop);
/// intensity is zero there. `z_list` records the plane positions used in
/// simulation (provenance; empty for external data).
#[derive(Debug, Clone)]
pub struct Measurement {
    pub grid: Grid,
    pub intensity: Array2<f64>,
    pub valid_mask: Array2<bool>,
    pub geometry: RecordingGeometry,
    pub z_list: Vec<f64>,
}

impl Measurement {
    pub fn new(
        grid: Grid,
        intensity: Array2<f64>,
        valid_mask: Array2<bool>,
        geometry: RecordingGeometry,
        z_list: Vec<f64>,
    ) -> Result<Self> {
        geometry.validate()?;
        let n = grid.n();
        if intensity.dim() != (n, n) || valid_mask.dim() != (n, n) {
            return Err(Error::GridMismatch { expected: n, got: intensity.nrows() });
        }
        for (i, &valid) in intensity.iter().zip(valid_mask.iter()) {
            if !i.is_finite() || *i < 0.0 {
                return Err(Error::InvalidParameter("intensity must be finite and >= 0".into()));
            }
            if !valid && *i != 0.0 {
                return Err(Error::InvalidParameter(
                    "intensity must be zero on invalid pixels".into(),
                ));
            }
        }
        Ok(Self { grid, intensity, valid_mask, geometry, z_list })
    }

    /// Axial position of the detector plane (hologram mode).
    pub fn detector_z(&self) -> f64 {
        match self.geometry {
            RecordingGeometry::Hologram { detector_distance } => {
                self.z_list.last().copied().unwrap_or(0.0) + detector_distance
            }
            RecordingGeometry::Diffraction { .. } => f64::NAN,
        }
    }

    /// Measured amplitude `sqrt(I)` as a real field.
    pub fn amplitude_field(&self) -> ComplexField {
        ComplexField::from_fn(self.grid, |r, c| {
            Complex64::new(self.intensity[[r, c]].sqrt(), 0.0)
        })
    }
}

/// All intermediate wavefronts of one forward pass: `incident[p]` enters
/// plane `p`, `transmitted[p]` leaves it, and `exit` is the wave behind the
/// last plane.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub incident: Vec<ComplexField>,
    pub transmitted: Vec<ComplexField>,
    pub exit: ComplexField,
}

/// Propagates `incident` through every plane of the stack.
pub fn multislice_forward(stack: &SliceStack, incident: &ComplexField) -> Result<ForwardPass> {
    if incident.grid() != stack.grid() {
        return Err(Error::GridMismatch { expected: stack.grid().n(), got: incident.n() });
    }
    let planes = stack.planes();
    let mut before = Vec::with_capacity(planes.len());
    let mut after = Vec::with_capacity(planes.len());
    let mut wave = incident.clone();
    for (p, plane) in planes.iter().enumerate() {
        if p > 0 {
            wave = asm_propagate(&wave, plane.z - planes[p - 1].z);
        }
        let transmitted = plane.transmission.mul_elementwise(&wave)?;
        before.push(wave);
        wave = transmitted.clone();
        after.push(transmitted);
    }
    let exit = after.last().cloned().unwrap_or_else(|| incident.clone());
    Ok(ForwardPass { incident: before, transmitted: after, exit })
}

fn beamstop_mask(grid: Grid, radius: f64) -> Array2<bool> {
    let n = grid.n();
    let c = grid.center() as f64;
    if radius <= 0.0 {
        return Array2::from_elem((n, n), true);
    }
    Array2::from_shape_fn((n, n), |(r, col)| {
        let dr = r as f64 - c;
        let dc = col as f64 - c;
        (dr * dr + dc * dc).sqrt() > radius
    })
}

fn warn_on_support_violation(stack: &SliceStack) {
    for (p, plane) in stack.planes().iter().enumerate() {
        for ((r, c), v) in plane.transmission.values().indexed_iter() {
            if !stack.grid().in_central_quarter(r, c)
                && (v - Complex64::new(1.0, 0.0)).norm() > 1e-9
            {
                log::warn!(
                    "plane {p} deviates from unit transmission outside the central quarter; \
                     far-field patterns may be undersampled"
                );
                return;
            }
        }
    }
}

/// Simulates the intensity a detector would record for this stack.
///
/// Hologram mode: `I = |asm(exit, detector_distance)|^2`. Diffraction mode:
/// `I = |far_field(exit)|^2` with pixels within the beamstop radius of the
/// center zeroed and flagged invalid. Noise is applied last; invalid pixels
/// stay exactly zero.
pub fn record(
    stack: &SliceStack,
    geometry: RecordingGeometry,
    noise: &NoiseSpec,
) -> Result<Measurement> {
    geometry.validate()?;
    if stack.is_empty() {
        return Err(Error::EmptyStack);
    }
    warn_on_support_violation(stack);
    let incident = ComplexField::plane_wave(stack.grid());
    let pass = multislice_forward(stack, &incident)?;
    let (mut intensity, valid_mask) = match geometry {
        RecordingGeometry::Hologram { detector_distance } => {
            let det = asm_propagate(&pass.exit, detector_distance);
            (det.intensity(), Array2::from_elem((stack.grid().n(), stack.grid().n()), true))
        }
        RecordingGeometry::Diffraction { beamstop_radius } => {
            let det = far_field(&pass.exit);
            let mask = beamstop_mask(stack.grid(), beamstop_radius);
            let mut i = det.intensity();
            for (v, &ok) in i.iter_mut().zip(mask.iter()) {
                if !ok {
                    *v = 0.0;
                }
            }
            (i, mask)
        }
    };
    intensity = add_noise(&intensity, noise);
    for (v, &ok) in intensity.iter_mut().zip(valid_mask.iter()) {
        if !ok {
            *v = 0.0;
        }
    }
    Measurement::new(stack.grid(), intensity, valid_mask, geometry, stack.z_list())
}

/// Conventional holographic reconstruction: propagates the measured
/// amplitude back to the plane at `z`, phase-referenced to the incident
/// plane wave so an empty-sample hologram gives exactly 1 at any z.
pub fn backpropagate(m: &Measurement, z: f64) -> Result<ComplexField> {
    match m.geometry {
        RecordingGeometry::Hologram { .. } => {}
        RecordingGeometry::Diffraction { .. } => {
            return Err(Error::UnsupportedGeometry(
                "backpropagation needs a hologram; diffraction reconstructions start from \
                 a random-phase initialization"
                    .into(),
            ))
        }
    }
    let distance = m.detector_z() - z;
    let field = asm_propagate(&m.amplitude_field(), -distance);
    // remove the plane-wave phase accumulated over the backward hop
    let reference = Complex64::from_polar(
        1.0,
        2.0 * std::f64::consts::PI * distance / m.grid.wavelength(),
    );
    let mut out = field;
    out.values_mut().mapv_inplace(|v| v * reference);
    Ok(out)
}

/// Squared finite-difference gradient of the amplitude; a focus metric for
/// z-sweeps (in-focus planes score higher).
pub fn gradient_energy(u: &ComplexField) -> f64 {
    let amp = u.amplitude();
    let n = amp.nrows();
    let mut acc = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r + 1 < n {
                let d = amp[[r + 1, c]] - amp[[r, c]];
                acc += d * d;
            }
            if c + 1 < n {
                let d = amp[[r, c + 1]] - amp[[r, c]];
                acc += d * d;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplegen::{letters_phantom, Plane};

    fn grid() -> Grid {
        Grid::new(128, 1.0, 0.532).unwrap()
    }

    fn uniform_stack(values: &[Complex64], z: &[f64]) -> SliceStack {
        let planes = values
            .iter()
            .zip(z)
            .map(|(&v, &z)| Plane { transmission: ComplexField::constant(grid(), v), z })
            .collect();
        SliceStack::new(grid(), planes).unwrap()
    }

    #[test]
    fn empty_sample_exit_is_plane_wave() {
        let stack = uniform_stack(
            &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
            &[0.0, 40.0],
        );
        let pass = multislice_forward(&stack, &ComplexField::plane_wave(grid())).unwrap();
        for v in pass.exit.values().iter() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_planes_multiply() {
        let g = grid();
        let t1 = ComplexField::from_fn(g, |r, c| {
            if g.in_central_quarter(r, c) && (r + c) % 3 == 0 {
                Complex64::from_polar(0.8, 0.3)
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        let t2 = ComplexField::from_fn(g, |r, c| {
            if g.in_central_quarter(r, c) && (r % 5) == 0 {
                Complex64::from_polar(0.6, -0.2)
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        let two = SliceStack::new(
            g,
            vec![
                Plane { transmission: t1.clone(), z: 10.0 },
                Plane { transmission: t2.clone(), z: 10.0 },
            ],
        )
        .unwrap();
        let product = t1.mul_elementwise(&t2).unwrap();
        let one = SliceStack::new(g, vec![Plane { transmission: product, z: 10.0 }]).unwrap();
        let incident = ComplexField::plane_wave(g);
        let exit_two = multislice_forward(&two, &incident).unwrap().exit;
        let exit_one = multislice_forward(&one, &incident).unwrap().exit;
        assert!(exit_two.max_rel_diff(&exit_one) < 1e-12);
    }

    #[test]
    fn single_absorbing_pixel_conserves_flux_deficit() {
        let g = grid();
        let mut t = ComplexField::plane_wave(g);
        t.values_mut()[[64, 64]] = Complex64::new(0.0, 0.0);
        let stack = SliceStack::new(g, vec![Plane { transmission: t, z: 0.0 }]).unwrap();
        let pass = multislice_forward(&stack, &ComplexField::plane_wave(g)).unwrap();
        let downstream = asm_propagate(&pass.exit, 50.0);
        let n2 = (g.n() * g.n()) as f64;
        let deficit = n2 - downstream.total_power();
        assert!((deficit - 1.0).abs() < 0.01, "flux deficit {deficit}");
        // the shadow fills back in well past the Fresnel distance of one pixel
        let centre = downstream.intensity()[[64, 64]];
        assert!(centre > 0.5, "diffraction filled the shadow, got {centre}");
    }

    #[test]
    fn plane_order_matters_with_finite_spacing() {
        let g = grid();
        let blob = |cr: usize, cc: usize| {
            ComplexField::from_fn(g, |r, c| {
                let dr = r as f64 - cr as f64;
                let dc = c as f64 - cc as f64;
                if (dr * dr + dc * dc).sqrt() < 6.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
        };
        let (a, b) = (blob(60, 60), blob(68, 68));
        let incident = ComplexField::plane_wave(g);
        let ab = SliceStack::new(
            g,
            vec![
                Plane { transmission: a.clone(), z: 0.0 },
                Plane { transmission: b.clone(), z: 60.0 },
            ],
        )
        .unwrap();
        let ba = SliceStack::new(
            g,
            vec![Plane { transmission: b, z: 0.0 }, Plane { transmission: a, z: 60.0 }],
        )
        .unwrap();
        let ea = multislice_forward(&ab, &incident).unwrap().exit;
        let eb = multislice_forward(&ba, &incident).unwrap().exit;
        let rms = (ea
            .values()
            .iter()
            .zip(eb.values().iter())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            / (g.n() * g.n()) as f64)
            .sqrt();
        assert!(rms > 1e-3, "multiple scattering should be order-dependent, rms {rms}");
    }

    #[test]
    fn empty_sample_hologram_is_unit_intensity() {
        let stack = uniform_stack(&[Complex64::new(1.0, 0.0)], &[0.0]);
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 200.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        for v in m.intensity.iter() {
            assert!((v - 1.0).abs() < 1e-10);
        }
        assert!(m.valid_mask.iter().all(|&b| b));
    }

    #[test]
    fn empty_sample_diffraction_is_center_impulse() {
        let stack = uniform_stack(&[Complex64::new(1.0, 0.0)], &[0.0]);
        let m = record(
            &stack,
            RecordingGeometry::Diffraction { beamstop_radius: 0.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let n = grid().n();
        let n4 = (n * n) as f64 * (n * n) as f64;
        for ((r, c), v) in m.intensity.indexed_iter() {
            if (r, c) == (n / 2, n / 2) {
                assert!((v - n4).abs() / n4 < 1e-9);
            } else {
                assert!(v.abs() / n4 < 1e-9);
            }
        }
    }

    #[test]
    fn beamstop_invalidates_exact_disc() {
        let stack = uniform_stack(&[Complex64::new(1.0, 0.0)], &[0.0]);
        let radius = 3.2;
        let m = record(
            &stack,
            RecordingGeometry::Diffraction { beamstop_radius: radius },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let c = grid().center() as f64;
        for ((r, col), &ok) in m.valid_mask.indexed_iter() {
            let d = ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
            assert_eq!(ok, d > radius, "pixel ({r},{col}) at distance {d}");
            if !ok {
                assert_eq!(m.intensity[[r, col]], 0.0);
            }
        }
    }

    #[test]
    fn record_rejects_empty_stack() {
        let stack = SliceStack::empty(grid());
        let res = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 200.0 },
            &NoiseSpec::noiseless(),
        );
        assert!(matches!(res, Err(Error::EmptyStack)));
    }

    #[test]
    fn backpropagation_of_empty_hologram_is_unity() {
        let stack = uniform_stack(&[Complex64::new(1.0, 0.0)], &[0.0]);
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 200.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        for z in [0.0, 37.0, 200.0] {
            let f = backpropagate(&m, z).unwrap();
            for v in f.values().iter() {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-9, "z {z}: {v}");
            }
        }
    }

    #[test]
    fn backpropagation_at_detector_plane_returns_sqrt_intensity() {
        let stack = letters_phantom(grid(), &[0.0], "T").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 80.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let f = backpropagate(&m, m.detector_z()).unwrap();
        for (v, i) in f.values().iter().zip(m.intensity.iter()) {
            assert!((v - Complex64::new(i.sqrt(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn backpropagation_focuses_at_true_plane() {
        let z0 = 60.0;
        let stack = letters_phantom(grid(), &[z0], "K").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 100.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let sharp = gradient_energy(&backpropagate(&m, z0).unwrap());
        let before = gradient_energy(&backpropagate(&m, z0 - 50.0).unwrap());
        let after = gradient_energy(&backpropagate(&m, z0 + 50.0).unwrap());
        assert!(sharp > before && sharp > after, "{sharp} vs {before}/{after}");
    }

    #[test]
    fn diffraction_backpropagation_refused() {
        let stack = uniform_stack(&[Complex64::new(1.0, 0.0)], &[0.0]);
        let m = record(
            &stack,
            RecordingGeometry::Diffraction { beamstop_radius: 0.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        assert!(matches!(backpropagate(&m, 0.0), Err(Error::UnsupportedGeometry(_))));
    }
}
