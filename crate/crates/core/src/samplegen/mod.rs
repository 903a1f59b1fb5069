//! Phantom sample stacks and calibrated intensity noise.
//!
//! Generators confine all structure to the central quarter of the grid so
//! that far-field patterns are at least twofold oversampled per axis; the
//! transmission is exactly one outside the object footprint.

mod font;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::wavefield::{ComplexField, Grid};

pub use font::{glyph_bitmap, rasterize};

/// One sample plane: a transmission function and its axial position.
#[derive(Debug, Clone)]
pub struct Plane {
    pub transmission: ComplexField,
    pub z: f64,
}

/// An ordered stack of transmission planes — the 3D sample model and the
/// reconstruction output. Positions are nondecreasing; equal positions
/// (zero spacing) are legal.
#[derive(Debug, Clone)]
pub struct SliceStack {
    grid: Grid,
    planes: Vec<Plane>,
}

impl SliceStack {
    pub fn new(grid: Grid, planes: Vec<Plane>) -> Result<Self> {
        for p in &planes {
            if p.transmission.grid() != grid {
                return Err(Error::GridMismatch { expected: grid.n(), got: p.transmission.n() });
            }
            if !p.z.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite plane position {}", p.z)));
            }
        }
        if planes.windows(2).any(|w| w[1].z < w[0].z) {
            return Err(Error::InvalidParameter(
                "plane positions must be nondecreasing".into(),
            ));
        }
        Ok(Self { grid, planes })
    }

    pub fn empty(grid: Grid) -> Self {
        Self { grid, planes: Vec::new() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, p: usize) -> &Plane {
        &self.planes[p]
    }

    pub fn z_list(&self) -> Vec<f64> {
        self.planes.iter().map(|p| p.z).collect()
    }

    /// Replaces the transmission of plane `p`, keeping its position.
    pub fn set_transmission(&mut self, p: usize, t: ComplexField) -> Result<()> {
        if t.grid() != self.grid {
            return Err(Error::GridMismatch { expected: self.grid.n(), got: t.n() });
        }
        self.planes[p].transmission = t;
        Ok(())
    }
}

/// Gaussian intensity-noise specification. `target_snr` is the mean signal
/// divided by the noise standard deviation; infinity disables noise.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub target_snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(target_snr: f64, seed: u64) -> Result<Self> {
        if !(target_snr > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "target SNR must be positive, got {target_snr}"
            )));
        }
        Ok(Self { target_snr, seed })
    }

    pub fn noiseless() -> Self {
        Self { target_snr: f64::INFINITY, seed: 0 }
    }
}

/// Adds zero-mean Gaussian noise with `sigma = mean(I) / target_snr`,
/// clamping negative results to zero. Deterministic given the seed.
pub fn add_noise(intensity: &Array2<f64>, spec: &NoiseSpec) -> Array2<f64> {
    assert!(spec.target_snr > 0.0, "target SNR must be positive");
    let mut out = intensity.clone();
    if spec.target_snr.is_infinite() {
        return out;
    }
    let mean = intensity.iter().sum::<f64>() / intensity.len() as f64;
    let sigma = mean / spec.target_snr;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for v in out.iter_mut() {
        *v = (*v + normal.sample(&mut rng)).max(0.0);
    }
    out
}

fn check_central_quarter_extent(grid: Grid, half_extent: f64, what: &str) -> Result<()> {
    let limit = grid.extent() / 4.0;
    if half_extent > limit {
        return Err(Error::SupportViolation(format!(
            "{what} reaches {half_extent} from center but the central quarter ends at {limit}"
        )));
    }
    Ok(())
}

/// Opaque letter planes: `t = 0` on the rasterized glyph, `t = 1` elsewhere.
///
/// One glyph per plane, placed on a deterministic slot grid inside the
/// central quarter; glyph height defaults to `n/8` pixels.
pub fn letters_phantom(grid: Grid, z_list: &[f64], glyphs: &str) -> Result<SliceStack> {
    let chars: Vec<char> = glyphs.chars().collect();
    if chars.len() != z_list.len() {
        return Err(Error::InvalidParameter(format!(
            "{} glyphs but {} plane positions",
            chars.len(),
            z_list.len()
        )));
    }
    let n = grid.n();
    let count = chars.len();
    let mut planes = Vec::with_capacity(count);
    if count == 0 {
        return SliceStack::new(grid, planes);
    }

    // Slot grid inside the central quarter; glyphs never touch slot borders.
    let slots_per_side = (count as f64).sqrt().ceil() as usize;
    let slot = (n / 2) / slots_per_side;
    let height = (n / 8).min(slot * 7 / 10).max(font::GLYPH_ROWS);

    for (k, (&ch, &z)) in chars.iter().zip(z_list).enumerate() {
        let (rows, cols, bits) = font::rasterize(ch, height)?;
        let slot_r = k / slots_per_side;
        let slot_c = k % slots_per_side;
        let center_r = n / 4 + slot_r * slot + slot / 2;
        let center_c = n / 4 + slot_c * slot + slot / 2;
        let top = center_r - rows / 2;
        let left = center_c - cols / 2;
        if top < n / 4 || top + rows > 3 * n / 4 || left < n / 4 || left + cols > 3 * n / 4 {
            return Err(Error::SupportViolation(format!(
                "glyph {ch:?} does not fit its slot inside the central quarter"
            )));
        }
        let mut t = Array2::from_elem((n, n), Complex64::new(1.0, 0.0));
        for r in 0..rows {
            for c in 0..cols {
                if bits[r * cols + c] {
                    t[[top + r, left + c]] = Complex64::new(0.0, 0.0);
                }
            }
        }
        planes.push(Plane { transmission: ComplexField::from_values(grid, t)?, z });
    }
    SliceStack::new(grid, planes)
}

/// A sphere placed on its own plane: lateral center in physical units
/// relative to the grid center, and the plane's axial position.
#[derive(Debug, Clone, Copy)]
pub struct SpherePlane {
    pub center: (f64, f64),
    pub z: f64,
}

/// Projected homogeneous spheres: `t = exp(-a_max c) exp(i phi_max c)` with
/// the chord profile `c = sqrt(1 - r^2/R^2)` inside radius `R`, one sphere
/// per plane.
pub fn sphere_phantom(
    grid: Grid,
    spheres: &[SpherePlane],
    diameter: f64,
    a_max: f64,
    phi_max: f64,
) -> Result<SliceStack> {
    if !(diameter > 0.0) {
        return Err(Error::InvalidParameter(format!("diameter must be positive, got {diameter}")));
    }
    if a_max < 0.0 || !a_max.is_finite() || !phi_max.is_finite() {
        return Err(Error::InvalidParameter(
            "absorption must be nonnegative and phase finite".into(),
        ));
    }
    let radius = diameter / 2.0;
    let n = grid.n();
    let mut planes = Vec::with_capacity(spheres.len());
    for s in spheres {
        let reach = s.center.0.abs().max(s.center.1.abs()) + radius;
        check_central_quarter_extent(grid, reach, "sphere")?;
        let mut t = Array2::from_elem((n, n), Complex64::new(1.0, 0.0));
        for ((r, c), v) in t.indexed_iter_mut() {
            let dy = grid.coord(r) - s.center.1;
            let dx = grid.coord(c) - s.center.0;
            let rr = (dx * dx + dy * dy) / (radius * radius);
            if rr <= 1.0 {
                let chord = (1.0 - rr).sqrt();
                *v = Complex64::from_polar((-a_max * chord).exp(), phi_max * chord);
            }
        }
        planes.push(Plane { transmission: ComplexField::from_values(grid, t)?, z: s.z });
    }
    SliceStack::new(grid, planes)
}

/// Honeycomb lattice constant used by [`bilayer_phantom`], nanometers.
pub const HONEYCOMB_CONSTANT_NM: f64 = 0.246;
/// Gaussian bump width at each lattice site, nanometers.
pub const SITE_SIGMA_NM: f64 = 0.05;

/// Names one honeycomb site: integer cell coordinates plus sublattice 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSite {
    pub i: i32,
    pub j: i32,
    pub sublattice: u8,
}

/// Position of a honeycomb site before any twist, grid lengths (nm).
pub fn lattice_site_position(site: LatticeSite) -> (f64, f64) {
    let a = HONEYCOMB_CONSTANT_NM;
    let (a1x, a1y) = (a, 0.0);
    let (a2x, a2y) = (a * 0.5, a * 3.0_f64.sqrt() / 2.0);
    let mut x = site.i as f64 * a1x + site.j as f64 * a2x;
    let mut y = site.i as f64 * a1y + site.j as f64 * a2y;
    if site.sublattice == 1 {
        x += (a1x + a2x) / 3.0;
        y += (a1y + a2y) / 3.0;
    }
    (x, y)
}

/// Two pure-phase honeycomb layers, the second rotated by `twist_deg` and
/// offset axially by `spacing`; each plane's phase is a sum of Gaussian
/// bumps normalized to peak at `phi_peak`, zero outside the round patch.
/// `defects` are sites deleted from layer 2. Grid lengths are nanometers.
pub fn bilayer_phantom(
    grid: Grid,
    twist_deg: f64,
    spacing: f64,
    phi_peak: f64,
    patch_diameter: f64,
    defects: &[LatticeSite],
) -> Result<SliceStack> {
    if !(spacing >= 0.0) || !(patch_diameter > 0.0) || !(phi_peak >= 0.0) {
        return Err(Error::InvalidParameter(
            "spacing, patch diameter and peak phase must be nonnegative".into(),
        ));
    }
    let patch_radius = patch_diameter / 2.0;
    check_central_quarter_extent(grid, patch_radius, "lattice patch")?;

    let layer = |twist: f64, skip: &[LatticeSite]| -> ComplexField {
        let (sin_t, cos_t) = twist.to_radians().sin_cos();
        let range = (patch_radius / HONEYCOMB_CONSTANT_NM).ceil() as i32 + 2;
        let mut sites = Vec::new();
        for i in -range..=range {
            for j in -range..=range {
                for sub in 0..2u8 {
                    let site = LatticeSite { i, j, sublattice: sub };
                    if skip.contains(&site) {
                        continue;
                    }
                    let (x0, y0) = lattice_site_position(site);
                    let x = cos_t * x0 - sin_t * y0;
                    let y = sin_t * x0 + cos_t * y0;
                    if (x * x + y * y).sqrt() <= patch_radius {
                        sites.push((x, y));
                    }
                }
            }
        }
        let n = grid.n();
        let inv_two_sigma_sq = 1.0 / (2.0 * SITE_SIGMA_NM * SITE_SIGMA_NM);
        let mut phase = Array2::zeros((n, n));
        for ((r, c), v) in phase.indexed_iter_mut() {
            let y = grid.coord(r);
            let x = grid.coord(c);
            if (x * x + y * y).sqrt() > patch_radius {
                continue;
            }
            let mut acc = 0.0;
            for &(sx, sy) in &sites {
                let d2 = (x - sx) * (x - sx) + (y - sy) * (y - sy);
                if d2 < 25.0 * SITE_SIGMA_NM * SITE_SIGMA_NM {
                    acc += (-d2 * inv_two_sigma_sq).exp();
                }
            }
            *v = acc;
        }
        let max = phase.iter().fold(0.0_f64, |a, &b| a.max(b));
        if max > 0.0 {
            let scale = phi_peak / max;
            phase.mapv_inplace(|p| p * scale);
        }
        ComplexField::from_fn(grid, |r, c| Complex64::from_polar(1.0, phase[[r, c]]))
    };

    let planes = vec![
        Plane { transmission: layer(0.0, &[]), z: 0.0 },
        Plane { transmission: layer(twist_deg, defects), z: spacing },
    ];
    SliceStack::new(grid, planes)
}
