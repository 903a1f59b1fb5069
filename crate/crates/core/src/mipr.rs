//! Multislice iterative phase retrieval.
//!
//! One iteration runs the multislice forward model with the current
//! per-plane transmission estimates, replaces the detector amplitude with
//! the measured one, and walks back through the planes updating each
//! transmission (constrained ratio of wavefronts) and each incident wave.
//! Repeating this drives the stack toward transmissions consistent with
//! both the measurement and the per-plane constraints, recovering the 3D
//! distribution — multiple scattering included — from a single 2D intensity.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constraints::{apply, ConstraintSet};
use crate::error::{Error, Result};
use crate::forward::{backpropagate, Measurement, RecordingGeometry};
use crate::samplegen::{Plane, SliceStack};
use crate::wavefield::{asm_propagate, far_field, far_field_inv, ComplexField};

/// How the first transmission estimates are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Backpropagate the measured amplitude plane by plane (holograms).
    Backpropagate,
    /// Combine the measured amplitude with a random phase (diffraction).
    RandomPhase,
}

/// Residual definition. The ratio-of-sums form is the default; the
/// per-pixel ratio sum is kept for comparison but diverges at dark pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    RatioOfSums,
    SumOfRatios,
}

#[derive(Debug, Clone)]
pub struct MiprConfig {
    pub iterations: usize,
    pub constraints: ConstraintSet,
    pub init_mode: InitMode,
    pub restarts: usize,
    pub seed: u64,
    /// Relative regularizer for wavefront divisions:
    /// `x/y = x conj(y) / (|y|^2 + eps max|y|^2)`.
    pub division_epsilon: f64,
    pub error_mode: ErrorMode,
    /// Stop once the recorded error falls below this value (off by default;
    /// the fixed iteration count is the reference behaviour).
    pub early_stop: Option<f64>,
}

impl MiprConfig {
    /// Hologram defaults: backpropagation init, a single run.
    pub fn hologram(constraints: ConstraintSet) -> Self {
        Self {
            iterations: 1000,
            constraints,
            init_mode: InitMode::Backpropagate,
            restarts: 1,
            seed: 0,
            division_epsilon: 1e-8,
            error_mode: ErrorMode::RatioOfSums,
            early_stop: None,
        }
    }

    /// Diffraction defaults: random-phase init, 100 restarts.
    pub fn diffraction(constraints: ConstraintSet) -> Self {
        Self {
            iterations: 1000,
            constraints,
            init_mode: InitMode::RandomPhase,
            restarts: 100,
            seed: 0,
            division_epsilon: 1e-8,
            error_mode: ErrorMode::RatioOfSums,
            early_stop: None,
        }
    }

    fn validate(&self, m: &Measurement, z_list: &[f64]) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iteration count must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restart count must be >= 1".into()));
        }
        if !(self.division_epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "division epsilon must be positive, got {}",
                self.division_epsilon
            )));
        }
        if z_list.len() != self.constraints.len() {
            return Err(Error::ConstraintMismatch {
                planes: z_list.len(),
                constraints: self.constraints.len(),
            });
        }
        if z_list.is_empty() {
            return Err(Error::EmptyStack);
        }
        if z_list.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "plane positions must be nondecreasing".into(),
            ));
        }
        self.constraints.validate(m.grid.n())?;
        match (m.geometry, self.init_mode) {
            (RecordingGeometry::Diffraction { .. }, InitMode::Backpropagate) => {
                Err(Error::UnsupportedGeometry(
                    "diffraction measurements require the random-phase initialization".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Output of one reconstruction run.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub stack: SliceStack,
    /// Residual recorded from each iteration's own forward pass.
    pub error_history: Vec<f64>,
    pub final_error: f64,
    pub seed_used: u64,
}

/// `x / y` with the denominator regularized relative to its peak power.
fn divide_regularized(num: &ComplexField, den: &ComplexField, eps: f64) -> ComplexField {
    let max_sq = den.values().iter().map(|v| v.norm_sqr()).fold(0.0_f64, f64::max);
    if max_sq == 0.0 {
        return ComplexField::zeros(num.grid());
    }
    let reg = eps * max_sq;
    let mut out = num.clone();
    for (x, y) in out.values_mut().iter_mut().zip(den.values().iter()) {
        *x = *x * y.conj() / (y.norm_sqr() + reg);
    }
    out
}

fn amplitude_residual(
    model: &ComplexField,
    sqrt_i: &Array2<f64>,
    valid: &Array2<bool>,
    mode: ErrorMode,
) -> f64 {
    match mode {
        ErrorMode::RatioOfSums => {
            let mut num = 0.0;
            let mut den = 0.0;
            for ((v, s), &ok) in model.values().iter().zip(sqrt_i.iter()).zip(valid.iter()) {
                if ok {
                    let fit = v.norm();
                    num += (s - fit).abs();
                    den += fit;
                }
            }
            if den == 0.0 {
                if num == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                num / den
            }
        }
        ErrorMode::SumOfRatios => {
            let mut acc = 0.0;
            for ((v, s), &ok) in model.values().iter().zip(sqrt_i.iter()).zip(valid.iter()) {
                if ok {
                    let fit = v.norm();
                    if fit > 0.0 {
                        acc += (s - fit).abs() / fit;
                    } else if *s > 0.0 {
                        acc = f64::INFINITY;
                    }
                }
            }
            acc
        }
    }
}

/// Propagates the exit wave to the detector plane.
fn to_detector(exit: &ComplexField, geometry: RecordingGeometry) -> ComplexField {
    match geometry {
        RecordingGeometry::Hologram { detector_distance } => {
            asm_propagate(exit, detector_distance)
        }
        RecordingGeometry::Diffraction { .. } => far_field(exit),
    }
}

/// Propagates a detector field back to the last sample plane.
fn from_detector(det: &ComplexField, geometry: RecordingGeometry) -> ComplexField {
    match geometry {
        RecordingGeometry::Hologram { detector_distance } => {
            asm_propagate(det, -detector_distance)
        }
        RecordingGeometry::Diffraction { .. } => far_field_inv(det),
    }
}

/// Forms the initial transmission stack: the measured amplitude (hologram)
/// or amplitude-plus-random-phase (diffraction) is propagated backward
/// plane by plane, constraining a snapshot at each plane.
pub fn initialize(m: &Measurement, z_list: &[f64], cfg: &MiprConfig) -> Result<SliceStack> {
    cfg.validate(m, z_list)?;
    let planes_count = z_list.len();
    let mut transmissions: Vec<Option<ComplexField>> = vec![None; planes_count];

    match m.geometry {
        RecordingGeometry::Hologram { .. } if cfg.init_mode == InitMode::Backpropagate => {
            for (p, &z) in z_list.iter().enumerate() {
                let estimate = backpropagate_with_z(m, z, z_list)?;
                transmissions[p] = Some(apply(cfg.constraints.plane(p), &estimate));
            }
        }
        _ => {
            // random phase on the measured amplitude, then backward hops
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let grid = m.grid;
            let det = ComplexField::from_fn(grid, |r, c| {
                let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(m.intensity[[r, c]].sqrt(), phase)
            });
            let mut wave = from_detector(&det, m.geometry);
            if let RecordingGeometry::Hologram { detector_distance } = m.geometry {
                reference_to_plane_wave(&mut wave, detector_distance);
            }
            for p in (0..planes_count).rev() {
                transmissions[p] = Some(apply(cfg.constraints.plane(p), &wave));
                if p > 0 {
                    let dz = z_list[p] - z_list[p - 1];
                    wave = asm_propagate(&wave, -dz);
                    reference_to_plane_wave(&mut wave, dz);
                }
            }
        }
    }

    let planes = transmissions
        .into_iter()
        .zip(z_list)
        .map(|(t, &z)| Plane { transmission: t.expect("filled above"), z })
        .collect();
    SliceStack::new(m.grid, planes)
}

/// Removes the plane-wave phase a backward hop of `distance` accumulates.
fn reference_to_plane_wave(field: &mut ComplexField, distance: f64) {
    let phase = Complex64::from_polar(
        1.0,
        2.0 * std::f64::consts::PI * distance / field.grid().wavelength(),
    );
    field.values_mut().mapv_inplace(|v| v * phase);
}

/// [`crate::forward::backpropagate`] against an explicit plane list, so
/// initializations can try plane positions other than the recorded ones.
fn backpropagate_with_z(m: &Measurement, z: f64, z_list: &[f64]) -> Result<ComplexField> {
    match m.geometry {
        RecordingGeometry::Hologram { detector_distance } => {
            let detector_z = z_list.last().copied().unwrap_or(0.0) + detector_distance;
            let distance = detector_z - z;
            let mut field = asm_propagate(&m.amplitude_field(), -distance);
            reference_to_plane_wave(&mut field, distance);
            Ok(field)
        }
        RecordingGeometry::Diffraction { .. } => backpropagate(m, z),
    }
}

/// Runs the iteration loop from a given initial stack.
pub fn iterate(m: &Measurement, stack: &SliceStack, cfg: &MiprConfig) -> Result<ReconstructionResult> {
    let z_list = stack.z_list();
    cfg.validate(m, &z_list)?;
    if stack.grid() != m.grid {
        return Err(Error::GridMismatch { expected: m.grid.n(), got: stack.grid().n() });
    }
    let planes_count = stack.len();
    let sqrt_i = m.intensity.mapv(f64::sqrt);
    let incident = ComplexField::plane_wave(m.grid);
    let eps = cfg.division_epsilon;

    let mut t: Vec<ComplexField> =
        stack.planes().iter().map(|p| p.transmission.clone()).collect();
    let mut error_history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        // forward pass through the current estimates
        let mut b: Vec<ComplexField> = Vec::with_capacity(planes_count);
        let mut wave = incident.clone();
        for p in 0..planes_count {
            if p > 0 {
                wave = asm_propagate(&wave, z_list[p] - z_list[p - 1]);
            }
            b.push(wave.clone());
            wave = t[p].mul_elementwise(&wave)?;
        }
        let detector = to_detector(&wave, m.geometry);

        let err = amplitude_residual(&detector, &sqrt_i, &m.valid_mask, cfg.error_mode);
        if !err.is_finite() && err != f64::INFINITY {
            return Err(Error::Diverged { iteration: it, seed: cfg.seed });
        }
        error_history.push(err);

        // measured amplitude on valid pixels, model values inside the beamstop
        let mut updated = detector;
        for ((v, s), &ok) in
            updated.values_mut().iter_mut().zip(sqrt_i.iter()).zip(m.valid_mask.iter())
        {
            if ok {
                let norm = v.norm();
                *v = if norm > 0.0 {
                    *v * (*s / norm)
                } else {
                    Complex64::new(*s, 0.0)
                };
            }
        }

        // backward pass: update transmissions and incident waves
        let mut back = from_detector(&updated, m.geometry);
        for p in (0..planes_count).rev() {
            if p > 0 {
                let estimate = divide_regularized(&back, &b[p], eps);
                t[p] = apply(cfg.constraints.plane(p), &estimate);
                let incident_update = divide_regularized(&back, &t[p], eps);
                back = asm_propagate(&incident_update, -(z_list[p] - z_list[p - 1]));
            } else {
                // with a unit incident wave the arriving field is the
                // transmission estimate itself
                t[0] = apply(cfg.constraints.plane(0), &back);
            }
        }

        if !t.iter().all(|f| f.is_finite()) {
            return Err(Error::Diverged { iteration: it, seed: cfg.seed });
        }
        if let Some(stop) = cfg.early_stop {
            if err < stop {
                break;
            }
        }
    }

    let final_error = *error_history.last().expect("at least one iteration");
    let planes = t
        .into_iter()
        .zip(&z_list)
        .map(|(transmission, &z)| Plane { transmission, z })
        .collect();
    Ok(ReconstructionResult {
        stack: SliceStack::new(m.grid, planes)?,
        error_history,
        final_error,
        seed_used: cfg.seed,
    })
}

/// Amplitude residual of a stack against a measurement, from one fresh
/// forward pass, using the ratio-of-sums definition.
pub fn residual_error(m: &Measurement, stack: &SliceStack) -> Result<f64> {
    residual_error_with_mode(m, stack, ErrorMode::RatioOfSums)
}

pub fn residual_error_with_mode(
    m: &Measurement,
    stack: &SliceStack,
    mode: ErrorMode,
) -> Result<f64> {
    if m.valid_mask.iter().all(|&ok| !ok) {
        return Err(Error::AllPixelsInvalid);
    }
    let pass = crate::forward::multislice_forward(stack, &ComplexField::plane_wave(m.grid))?;
    let detector = to_detector(&pass.exit, m.geometry);
    let sqrt_i = m.intensity.mapv(f64::sqrt);
    Ok(amplitude_residual(&detector, &sqrt_i, &m.valid_mask, mode))
}

/// Final error of one restart; diverged runs score infinity.
#[derive(Debug, Clone, Copy)]
pub struct RestartScore {
    pub seed: u64,
    pub final_error: f64,
}

/// Runs `initialize` + `iterate` for seeds `seed, seed+1, ...` and returns
/// the run with the smallest final error (ties broken by seed order) plus
/// the per-restart error table. Restarts are independent and run in
/// parallel; only if every restart diverges does the whole search fail.
pub fn multi_start_with_scores(
    m: &Measurement,
    z_list: &[f64],
    cfg: &MiprConfig,
) -> Result<(ReconstructionResult, Vec<RestartScore>)> {
    cfg.validate(m, z_list)?;
    let runs: Vec<Result<ReconstructionResult>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = cfg.seed.wrapping_add(k as u64);
            run_cfg.restarts = 1;
            let init = initialize(m, z_list, &run_cfg)?;
            iterate(m, &init, &run_cfg)
        })
        .collect();

    let mut best: Option<ReconstructionResult> = None;
    let mut scores = Vec::with_capacity(cfg.restarts);
    let mut first_err: Option<Error> = None;
    for (k, run) in runs.into_iter().enumerate() {
        let seed = cfg.seed.wrapping_add(k as u64);
        match run {
            Ok(r) => {
                scores.push(RestartScore { seed, final_error: r.final_error });
                let better = match &best {
                    None => true,
                    Some(b) => r.final_error < b.final_error,
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                log::warn!("restart diverged: {e}");
                scores.push(RestartScore { seed, final_error: f64::INFINITY });
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some(b) => Ok((b, scores)),
        None => Err(first_err.expect("at least one restart ran")),
    }
}

/// [`multi_start_with_scores`] without the score table.
pub fn multi_start(m: &Measurement, z_list: &[f64], cfg: &MiprConfig) -> Result<ReconstructionResult> {
    multi_start_with_scores(m, z_list, cfg).map(|(best, _)| best)
}

/// Error score of one z-spacing candidate.
#[derive(Debug, Clone)]
pub struct ZCandidateScore {
    pub z_list: Vec<f64>,
    pub final_error: f64,
    pub seed_used: u64,
}

/// Outcome of a z-spacing refinement: the winning candidate's
/// reconstruction plus the full error table.
#[derive(Debug)]
pub struct RefineZResult {
    pub best_index: usize,
    pub best: ReconstructionResult,
    pub scores: Vec<ZCandidateScore>,
}

/// Reconstructs at every candidate plane-position list and keeps the one
/// with the minimal final error.
pub fn refine_z(
    m: &Measurement,
    z_candidates: &[Vec<f64>],
    cfg: &MiprConfig,
) -> Result<RefineZResult> {
    if z_candidates.is_empty() {
        return Err(Error::InvalidParameter("need at least one z candidate".into()));
    }
    let mut scores = Vec::with_capacity(z_candidates.len());
    let mut best: Option<(usize, ReconstructionResult)> = None;
    let mut first_err: Option<Error> = None;
    for (idx, z_list) in z_candidates.iter().enumerate() {
        match multi_start(m, z_list, cfg) {
            Ok(r) => {
                scores.push(ZCandidateScore {
                    z_list: z_list.clone(),
                    final_error: r.final_error,
                    seed_used: r.seed_used,
                });
                let better = match &best {
                    None => true,
                    Some((_, b)) => r.final_error < b.final_error,
                };
                if better {
                    best = Some((idx, r));
                }
            }
            Err(e) => {
                log::warn!("z candidate {idx} failed: {e}");
                scores.push(ZCandidateScore {
                    z_list: z_list.clone(),
                    final_error: f64::INFINITY,
                    seed_used: cfg.seed,
                });
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some((best_index, best)) => Ok(RefineZResult { best_index, best, scores }),
        None => Err(first_err.expect("at least one candidate ran")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::PlaneConstraint;
    use crate::forward::record;
    use crate::samplegen::{letters_phantom, NoiseSpec};
    use crate::wavefield::Grid;

    fn grid() -> Grid {
        Grid::new(64, 1.0, 0.532).unwrap()
    }

    fn empty_hologram(planes: usize) -> (Measurement, Vec<f64>) {
        let z: Vec<f64> = (0..planes).map(|p| 20.0 * p as f64).collect();
        let stack = SliceStack::new(
            grid(),
            z.iter()
                .map(|&z| Plane { transmission: ComplexField::plane_wave(grid()), z })
                .collect(),
        )
        .unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 100.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        (m, z)
    }

    #[test]
    fn empty_sample_is_a_fixed_point() {
        let (m, z) = empty_hologram(2);
        let mut cfg = MiprConfig::hologram(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            2,
        ));
        cfg.iterations = 20;
        let init = initialize(&m, &z, &cfg).unwrap();
        let result = iterate(&m, &init, &cfg).unwrap();
        // the division regularizer (1e-8 relative) sets the convergence floor
        assert!(result.final_error < 1e-6, "final error {}", result.final_error);
        for plane in result.stack.planes() {
            for v in plane.transmission.values().iter() {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn initialization_is_deterministic_per_seed() {
        let stack = letters_phantom(grid(), &[0.0, 20.0], "AB").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Diffraction { beamstop_radius: 1.6 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let mut cfg = MiprConfig::diffraction(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            2,
        ));
        cfg.seed = 99;
        let a = initialize(&m, &[0.0, 20.0], &cfg).unwrap();
        let b = initialize(&m, &[0.0, 20.0], &cfg).unwrap();
        for (pa, pb) in a.planes().iter().zip(b.planes()) {
            assert_eq!(pa.transmission.values(), pb.transmission.values());
        }
        cfg.seed = 100;
        let c = initialize(&m, &[0.0, 20.0], &cfg).unwrap();
        assert_ne!(a.plane(0).transmission.values(), c.plane(0).transmission.values());
    }

    #[test]
    fn initialization_focuses_each_plane_on_its_own_letter() {
        let g = Grid::new(200, 1.0, 0.532).unwrap();
        let z = [0.0, 30.0, 60.0, 90.0];
        let stack = letters_phantom(g, &z, "ABCD").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 100.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let cfg = MiprConfig::hologram(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            4,
        ));
        let init = initialize(&m, &z, &cfg).unwrap();
        let absorb = |f: &ComplexField| f.values().mapv(|v| 1.0 - v.norm());
        let pearson = |a: &Array2<f64>, b: &Array2<f64>| {
            let ma = a.mean().unwrap();
            let mb = b.mean().unwrap();
            let mut num = 0.0;
            let mut da = 0.0;
            let mut db = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                num += (x - ma) * (y - mb);
                da += (x - ma) * (x - ma);
                db += (y - mb) * (y - mb);
            }
            num / (da * db).sqrt()
        };
        for p in 0..4 {
            let est = absorb(&init.plane(p).transmission);
            let own = pearson(&est, &absorb(&stack.plane(p).transmission));
            for q in 0..4 {
                if q != p {
                    let other = pearson(&est, &absorb(&stack.plane(q).transmission));
                    assert!(
                        own > other,
                        "plane {p}: own corr {own} vs plane {q} corr {other}"
                    );
                }
            }
        }
    }

    #[test]
    fn residual_error_closed_forms() {
        let (m, z) = empty_hologram(1);
        let stack = SliceStack::new(
            grid(),
            vec![Plane { transmission: ComplexField::plane_wave(grid()), z: z[0] }],
        )
        .unwrap();
        // perfect fit
        assert!(residual_error(&m, &stack).unwrap() < 1e-12);
        // measured amplitude half the model everywhere -> 0.5
        let quarter = Measurement::new(
            m.grid,
            Array2::from_elem((64, 64), 0.25),
            m.valid_mask.clone(),
            m.geometry,
            m.z_list.clone(),
        )
        .unwrap();
        let err = residual_error(&quarter, &stack).unwrap();
        assert!((err - 0.5).abs() < 1e-12, "{err}");
    }

    #[test]
    fn in_loop_error_is_consistent_with_fresh_residual() {
        let g = grid();
        let z = [0.0, 20.0];
        let stack = letters_phantom(g, &z, "AB").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 60.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let mut cfg = MiprConfig::hologram(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            2,
        ));
        cfg.iterations = 5;
        let init = initialize(&m, &z, &cfg).unwrap();
        let result = iterate(&m, &init, &cfg).unwrap();
        // the first recorded error is exactly the fresh residual of the init
        let fresh = residual_error(&m, &init).unwrap();
        assert!((result.error_history[0] - fresh).abs() < 1e-12);
        assert_eq!(result.error_history.len(), 5);
        assert_eq!(result.final_error, *result.error_history.last().unwrap());
    }

    #[test]
    fn returned_transmissions_are_constraint_fixed_points() {
        let g = grid();
        let z = [0.0, 20.0];
        let stack = letters_phantom(g, &z, "XY").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Hologram { detector_distance: 60.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let mut cfg = MiprConfig::hologram(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            2,
        ));
        cfg.iterations = 10;
        let init = initialize(&m, &z, &cfg).unwrap();
        let result = iterate(&m, &init, &cfg).unwrap();
        for (p, plane) in result.stack.planes().iter().enumerate() {
            let reapplied = apply(cfg.constraints.plane(p), &plane.transmission);
            assert_eq!(reapplied.values(), plane.transmission.values());
        }
    }

    #[test]
    fn multi_start_returns_minimum_and_is_deterministic() {
        let g = grid();
        let z = [0.0, 20.0];
        let stack = letters_phantom(g, &z, "AB").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Diffraction { beamstop_radius: 1.6 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let mut cfg = MiprConfig::diffraction(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            2,
        ));
        cfg.iterations = 15;
        cfg.restarts = 3;
        cfg.seed = 5;
        let best = multi_start(&m, &z, &cfg).unwrap();
        let mut finals = Vec::new();
        for k in 0..3 {
            let mut single = cfg.clone();
            single.seed = 5 + k;
            single.restarts = 1;
            let init = initialize(&m, &z, &single).unwrap();
            finals.push(iterate(&m, &init, &single).unwrap().final_error);
        }
        let min = finals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(best.final_error, min);
        let again = multi_start(&m, &z, &cfg).unwrap();
        assert_eq!(best.final_error, again.final_error);
        assert_eq!(best.seed_used, again.seed_used);
    }

    #[test]
    fn restarts_one_matches_single_run() {
        let (m, z) = empty_hologram(1);
        let mut cfg = MiprConfig::hologram(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            1,
        ));
        cfg.iterations = 3;
        let best = multi_start(&m, &z, &cfg).unwrap();
        let init = initialize(&m, &z, &cfg).unwrap();
        let single = iterate(&m, &init, &cfg).unwrap();
        assert_eq!(best.final_error, single.final_error);
        assert_eq!(
            best.stack.plane(0).transmission.values(),
            single.stack.plane(0).transmission.values()
        );
    }

    #[test]
    fn refine_z_single_candidate_passthrough() {
        let (m, z) = empty_hologram(2);
        let mut cfg = MiprConfig::hologram(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            2,
        ));
        cfg.iterations = 3;
        let refine = refine_z(&m, &[z.clone()], &cfg).unwrap();
        assert_eq!(refine.best_index, 0);
        assert_eq!(refine.scores.len(), 1);
        assert_eq!(refine.scores[0].z_list, z);
        assert_eq!(refine.scores[0].final_error, refine.best.final_error);
    }

    #[test]
    fn diffraction_with_backpropagate_init_is_rejected() {
        let g = grid();
        let stack = letters_phantom(g, &[0.0], "A").unwrap();
        let m = record(
            &stack,
            RecordingGeometry::Diffraction { beamstop_radius: 0.0 },
            &NoiseSpec::noiseless(),
        )
        .unwrap();
        let mut cfg = MiprConfig::diffraction(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            1,
        ));
        cfg.init_mode = InitMode::Backpropagate;
        assert!(matches!(
            initialize(&m, &[0.0], &cfg),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn constraint_plane_count_mismatch_is_rejected() {
        let (m, z) = empty_hologram(2);
        let cfg = MiprConfig::hologram(ConstraintSet::uniform(
            PlaneConstraint::positive_absorption(),
            3,
        ));
        assert!(matches!(
            initialize(&m, &z, &cfg),
            Err(Error::ConstraintMismatch { planes: 2, constraints: 3 })
        ));
    }

    #[test]
    fn all_invalid_mask_rejected_by_residual() {
        let g = grid();
        let intensity = Array2::zeros((64, 64));
        let mask = Array2::from_elem((64, 64), false);
        let m = Measurement::new(
            g,
            intensity,
            mask,
            RecordingGeometry::Diffraction { beamstop_radius: 100.0 },
            vec![0.0],
        )
        .unwrap();
        let stack = SliceStack::new(
            g,
            vec![Plane { transmission: ComplexField::plane_wave(g), z: 0.0 }],
        )
        .unwrap();
        assert!(matches!(residual_error(&m, &stack), Err(Error::AllPixelsInvalid)));
    }
}
