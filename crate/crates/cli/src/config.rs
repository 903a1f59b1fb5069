//! Run configuration: one JSON document drives simulation, reconstruction
//! and rendering. Unknown keys are rejected so typos fail loudly, and all
//! physical quantities carry the grid's length unit.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use multislice::constraints::{loose_mask, tight_mask, ConstraintSet, PhaseMode, PlaneConstraint};
use multislice::forward::RecordingGeometry;
use multislice::mipr::{ErrorMode, InitMode, MiprConfig};
use multislice::samplegen::{
    bilayer_phantom, letters_phantom, sphere_phantom, LatticeSite, NoiseSpec, SliceStack,
    SpherePlane,
};
use multislice::wavefield::{ComplexField, Grid};

use crate::error::{CliError, Result};
use crate::raster::read_raster;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleConfig>,
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mipr: Option<MiprSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Vec<ConstraintConfig>>,
    pub z: ZConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub pitch: f64,
    pub wavelength: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleConfig {
    Letters {
        glyphs: String,
    },
    Spheres {
        diameter: f64,
        absorption_max: f64,
        phase_max: f64,
        /// One `[x, y]` lateral center per plane, grid lengths from center.
        centers: Vec<[f64; 2]>,
    },
    Bilayer {
        twist_deg: f64,
        phase_peak: f64,
        patch_diameter: f64,
        #[serde(default)]
        defects: Vec<DefectSite>,
    },
    /// Externally supplied transmission planes, one raster per plane.
    Files {
        planes: Vec<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSite {
    pub i: i32,
    pub j: i32,
    pub sublattice: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Hologram { detector_distance: f64 },
    Diffraction { beamstop_radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiprSection {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub division_epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_mode: Option<InitModeConfig>,
    #[serde(default)]
    pub error_mode: ErrorModeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<f64>,
}

fn default_iterations() -> usize {
    1000
}
fn default_restarts() -> usize {
    1
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for MiprSection {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            restarts: default_restarts(),
            seed: 0,
            division_epsilon: default_epsilon(),
            init_mode: None,
            error_mode: ErrorModeConfig::RatioOfSums,
            early_stop: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitModeConfig {
    Backpropagate,
    RandomPhase,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModeConfig {
    #[default]
    RatioOfSums,
    SumOfRatios,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    #[serde(default)]
    pub support: SupportConfig,
    #[serde(default)]
    pub amplitude: AmplitudeConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    /// Real value written outside the support mask (default 1).
    #[serde(default = "default_outside")]
    pub outside_value: f64,
}

fn default_outside() -> f64 {
    1.0
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            support: SupportConfig::None,
            amplitude: AmplitudeConfig::Free,
            phase: PhaseConfig::Free,
            outside_value: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SupportConfig {
    #[default]
    None,
    /// Boolean mask from a raster file (nonzero = inside).
    File {
        file: String,
    },
    /// Loose mask grown from a reference field to `scale` times its
    /// footprint; `from` is a raster path or `"init"` for the plane's
    /// initial backpropagation.
    Loose {
        loose: LooseSpec,
    },
    /// Tight mask thresholded from a reference field; same `from` choices.
    Tight {
        tight: TightSpec,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LooseSpec {
    pub from: String,
    #[serde(default = "default_loose_scale")]
    pub scale: f64,
}

fn default_loose_scale() -> f64 {
    4.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TightSpec {
    pub from: String,
    #[serde(default = "default_tight_threshold")]
    pub threshold: f64,
}

fn default_tight_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeConfig {
    #[default]
    Free,
    Max {
        max: f64,
    },
    Fixed {
        fixed: f64,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConfig {
    #[default]
    Free,
    Zero,
    Clamp {
        clamp: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ZConfig {
    /// Plane positions (simulate/reconstruct) or distances from the
    /// hologram plane (backprop).
    List { list: Vec<f64> },
    /// Candidate plane-position lists for z refinement.
    Candidates { candidates: Vec<Vec<f64>> },
    /// Inclusive sweep, `start..=stop` in steps of `step`.
    Sweep { sweep: SweepSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || self.stop < self.start {
            return Err(CliError::config(format!(
                "sweep needs step > 0 and stop >= start, got {self:?}"
            )));
        }
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let v = self.start + self.step * k as f64;
            if v > self.stop + 1e-9 * self.step {
                break;
            }
            out.push(v);
            k += 1;
        }
        Ok(out)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.grid.n, self.grid.pitch, self.grid.wavelength).map_err(CliError::Core)?;
        if let ZConfig::Sweep { sweep } = &self.z {
            sweep.values()?;
        }
        if let Some(noise) = &self.noise {
            if !(noise.snr > 0.0) {
                return Err(CliError::config(format!(
                    "noise.snr must be positive, got {}",
                    noise.snr
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid.n, self.grid.pitch, self.grid.wavelength).expect("validated")
    }

    pub fn geometry(&self) -> Result<RecordingGeometry> {
        let g = match self.geometry {
            GeometryConfig::Hologram { detector_distance } => {
                RecordingGeometry::Hologram { detector_distance }
            }
            GeometryConfig::Diffraction { beamstop_radius } => {
                RecordingGeometry::Diffraction { beamstop_radius }
            }
        };
        g.validate().map_err(CliError::Core)?;
        Ok(g)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        match &self.noise {
            None => Ok(NoiseSpec::noiseless()),
            Some(n) => NoiseSpec::new(n.snr, n.seed).map_err(CliError::Core),
        }
    }

    /// Plane positions; `z.list` is required for simulate and reconstruct.
    pub fn z_list(&self) -> Result<Vec<f64>> {
        match &self.z {
            ZConfig::List { list } => Ok(list.clone()),
            _ => Err(CliError::config("this command needs z.list in the config")),
        }
    }

    pub fn z_candidates(&self) -> Result<Vec<Vec<f64>>> {
        match &self.z {
            ZConfig::Candidates { candidates } if !candidates.is_empty() => {
                Ok(candidates.clone())
            }
            ZConfig::Candidates { .. } => {
                Err(CliError::config("z.candidates must not be empty"))
            }
            _ => Err(CliError::config("refine-z needs z.candidates in the config")),
        }
    }

    /// Distances for backprop: an explicit list or a sweep.
    pub fn z_distances(&self) -> Result<Vec<f64>> {
        match &self.z {
            ZConfig::List { list } => Ok(list.clone()),
            ZConfig::Sweep { sweep } => sweep.values(),
            ZConfig::Candidates { .. } => {
                Err(CliError::config("backprop takes z.list or z.sweep, not candidates"))
            }
        }
    }

    /// Builds the sample stack for simulation.
    pub fn build_stack(&self, config_dir: &Path) -> Result<SliceStack> {
        let grid = self.grid();
        let z = self.z_list()?;
        let sample = self
            .sample
            .as_ref()
            .ok_or_else(|| CliError::config("simulate needs a sample section"))?;
        let stack = match sample {
            SampleConfig::Letters { glyphs } => {
                letters_phantom(grid, &z, glyphs).map_err(CliError::Core)?
            }
            SampleConfig::Spheres { diameter, absorption_max, phase_max, centers } => {
                if centers.len() != z.len() {
                    return Err(CliError::config(format!(
                        "{} sphere centers but {} plane positions",
                        centers.len(),
                        z.len()
                    )));
                }
                let spheres: Vec<SpherePlane> = centers
                    .iter()
                    .zip(&z)
                    .map(|(c, &z)| SpherePlane { center: (c[0], c[1]), z })
                    .collect();
                sphere_phantom(grid, &spheres, *diameter, *absorption_max, *phase_max)
                    .map_err(CliError::Core)?
            }
            SampleConfig::Bilayer { twist_deg, phase_peak, patch_diameter, defects } => {
                if z.len() != 2 {
                    return Err(CliError::config(
                        "bilayer samples need exactly two entries in z.list",
                    ));
                }
                let spacing = z[1] - z[0];
                let sites: Vec<LatticeSite> = defects
                    .iter()
                    .map(|d| LatticeSite { i: d.i, j: d.j, sublattice: d.sublattice })
                    .collect();
                bilayer_phantom(grid, *twist_deg, spacing, *phase_peak, *patch_diameter, &sites)
                    .map_err(CliError::Core)?
            }
            SampleConfig::Files { planes } => {
                if planes.len() != z.len() {
                    return Err(CliError::config(format!(
                        "{} plane files but {} plane positions",
                        planes.len(),
                        z.len()
                    )));
                }
                let mut loaded = Vec::new();
                for (path, &zp) in planes.iter().zip(&z) {
                    let raster = read_raster(&config_dir.join(path))?;
                    let field = raster.to_field()?;
                    if field.grid() != grid {
                        return Err(CliError::config(format!(
                            "plane {path} is {} px, config grid is {} px",
                            field.n(),
                            grid.n()
                        )));
                    }
                    loaded.push(multislice::samplegen::Plane { transmission: field, z: zp });
                }
                SliceStack::new(grid, loaded).map_err(CliError::Core)?
            }
        };
        Ok(stack)
    }

    pub fn mipr_config(
        &self,
        constraints: ConstraintSet,
        geometry: RecordingGeometry,
    ) -> MiprConfig {
        let section = self.mipr.clone().unwrap_or_default();
        let init_mode = match section.init_mode {
            Some(InitModeConfig::Backpropagate) => InitMode::Backpropagate,
            Some(InitModeConfig::RandomPhase) => InitMode::RandomPhase,
            None => match geometry {
                RecordingGeometry::Hologram { .. } => InitMode::Backpropagate,
                RecordingGeometry::Diffraction { .. } => InitMode::RandomPhase,
            },
        };
        MiprConfig {
            iterations: section.iterations,
            constraints,
            init_mode,
            restarts: section.restarts,
            seed: section.seed,
            division_epsilon: section.division_epsilon,
            error_mode: match section.error_mode {
                ErrorModeConfig::RatioOfSums => ErrorMode::RatioOfSums,
                ErrorModeConfig::SumOfRatios => ErrorMode::SumOfRatios,
            },
            early_stop: section.early_stop,
        }
    }

    /// Builds the per-plane constraint set. `initial` supplies the plane's
    /// unconstrained initial reconstruction for `"from": "init"` masks.
    pub fn constraint_set(
        &self,
        config_dir: &Path,
        plane_count: usize,
        initial: &dyn Fn(usize) -> Result<ComplexField>,
    ) -> Result<ConstraintSet> {
        let configs = match &self.constraints {
            None => vec![ConstraintConfig::default(); plane_count],
            Some(list) if list.len() == 1 => vec![list[0].clone(); plane_count],
            Some(list) => {
                if list.len() != plane_count {
                    return Err(CliError::config(format!(
                        "{} constraint entries but {} planes (use 1 entry to apply to all)",
                        list.len(),
                        plane_count
                    )));
                }
                list.clone()
            }
        };
        let mut planes = Vec::with_capacity(plane_count);
        for (p, c) in configs.iter().enumerate() {
            let mut constraint = PlaneConstraint {
                outside_value: Complex64::new(c.outside_value, 0.0),
                ..Default::default()
            };
            match &c.amplitude {
                AmplitudeConfig::Free => {}
                AmplitudeConfig::Max { max } => constraint.amplitude_max = Some(*max),
                AmplitudeConfig::Fixed { fixed } => constraint.amplitude_fixed = Some(*fixed),
            }
            match &c.phase {
                PhaseConfig::Free => {}
                PhaseConfig::Zero => constraint.phase_mode = PhaseMode::Zero,
                PhaseConfig::Clamp { clamp } => {
                    constraint.phase_mode = PhaseMode::Clamp(*clamp)
                }
            }
            let reference = |from: &str| -> Result<ComplexField> {
                if from == "init" {
                    initial(p)
                } else {
                    read_raster(&config_dir.join(from))?.to_field()
                }
            };
            constraint.support = match &c.support {
                SupportConfig::None => None,
                SupportConfig::File { file } => {
                    Some(read_raster(&config_dir.join(file))?.to_mask()?)
                }
                SupportConfig::Loose { loose } => Some(
                    loose_mask(&reference(&loose.from)?, loose.scale).map_err(CliError::Core)?,
                ),
                SupportConfig::Tight { tight } => Some(
                    tight_mask(&reference(&tight.from)?, tight.threshold)
                        .map_err(CliError::Core)?,
                ),
            };
            planes.push(constraint);
        }
        let set = ConstraintSet::new(planes);
        set.validate(self.grid.n).map_err(CliError::Core)?;
        Ok(set)
    }
}
