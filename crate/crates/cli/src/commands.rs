//! Command implementations: simulate, reconstruct, backprop, refine-z,
//! render. Every command writes a `manifest.json` from which the run can be
//! reproduced byte for byte; wall-clock timings go to a separate
//! `timing.json` so reruns stay binary-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use multislice::forward::{
    backpropagate, gradient_energy, record, Measurement, RecordingGeometry,
};
use multislice::mipr::{multi_start_with_scores, refine_z, ReconstructionResult, RestartScore};
use multislice::wavefield::ComplexField;

use crate::config::{RunConfig, ZConfig};
use crate::error::{CliError, Result};
use crate::raster::{read_raster, write_raster, Raster, RasterData};

pub const INTENSITY_FILE: &str = "intensity.msf";
pub const MASK_FILE: &str = "valid_mask.msf";
pub const MANIFEST_FILE: &str = "manifest.json";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
}

fn write_manifest(out: &Path, command: &str, config: &RunConfig) -> Result<()> {
    write_json(&out.join(MANIFEST_FILE), &Manifest { command, config })
}

fn write_timing(out: &Path, seconds: f64) -> Result<()> {
    #[derive(Serialize)]
    struct Timing {
        wall_time_s: f64,
    }
    write_json(&out.join("timing.json"), &Timing { wall_time_s: seconds })
}

/// Simulates the configured sample and writes the measurement, the truth
/// planes, the validity mask, and the manifest.
pub fn cmd_simulate(config: &RunConfig, config_dir: &Path, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let start = std::time::Instant::now();
    let stack = config.build_stack(config_dir)?;
    let geometry = config.geometry()?;
    let noise = config.noise_spec()?;
    let measurement = record(&stack, geometry, &noise)?;

    for (p, plane) in stack.planes().iter().enumerate() {
        write_raster(
            &out.join(format!("truth_plane_{p:02}.msf")),
            &Raster::from_field(&plane.transmission),
        )?;
    }
    write_raster(
        &out.join(INTENSITY_FILE),
        &Raster::from_real(stack.grid(), &measurement.intensity),
    )?;
    write_raster(
        &out.join(MASK_FILE),
        &Raster::from_mask(stack.grid(), &measurement.valid_mask),
    )?;
    write_manifest(out, "simulate", config)?;
    write_timing(out, start.elapsed().as_secs_f64())?;
    if config.noise.is_none() {
        log::info!("noise-free simulation (no noise section in config)");
    }
    println!(
        "simulate: wrote {} planes + measurement to {}",
        stack.len(),
        out.display()
    );
    Ok(())
}

/// Loads a measurement directory written by `cmd_simulate` (or assembled by
/// hand: intensity raster plus optional mask raster).
pub fn load_measurement(dir: &Path, config: &RunConfig) -> Result<Measurement> {
    let grid = config.grid();
    let intensity_raster = read_raster(&dir.join(INTENSITY_FILE))?;
    let raster_grid = intensity_raster.grid()?;
    if raster_grid.n() != grid.n() {
        return Err(CliError::config(format!(
            "measurement grid is {} px but config grid is {} px",
            raster_grid.n(),
            grid.n()
        )));
    }
    if (raster_grid.pitch() - grid.pitch()).abs() > 1e-12 * grid.pitch()
        || (raster_grid.wavelength() - grid.wavelength()).abs() > 1e-12 * grid.wavelength()
    {
        return Err(CliError::config(format!(
            "measurement pitch/wavelength ({}, {}) disagree with config ({}, {})",
            raster_grid.pitch(),
            raster_grid.wavelength(),
            grid.pitch(),
            grid.wavelength()
        )));
    }
    let intensity = intensity_raster.to_real()?.mapv(|v| v.max(0.0));
    let mask_path = dir.join(MASK_FILE);
    let valid_mask = if mask_path.exists() {
        read_raster(&mask_path)?.to_mask()?
    } else {
        ndarray::Array2::from_elem((grid.n(), grid.n()), true)
    };
    let mut intensity = intensity;
    for (v, &ok) in intensity.iter_mut().zip(valid_mask.iter()) {
        if !ok {
            *v = 0.0;
        }
    }
    Measurement::new(grid, intensity, valid_mask, config.geometry()?, config.z_list().unwrap_or_default())
        .map_err(CliError::Core)
}

fn plane_initializer<'a>(
    m: &'a Measurement,
    z_list: &'a [f64],
) -> impl Fn(usize) -> Result<ComplexField> + 'a {
    move |p: usize| match m.geometry {
        RecordingGeometry::Hologram { .. } => {
            backpropagate(m, z_list[p]).map_err(CliError::Core)
        }
        RecordingGeometry::Diffraction { .. } => Err(CliError::config(
            "\"from\": \"init\" masks need a hologram measurement; supply mask files for \
             diffraction data",
        )),
    }
}

fn write_reconstruction(
    out: &Path,
    result: &ReconstructionResult,
    per_seed: &[RestartScore],
    iterations: usize,
    restarts: usize,
) -> Result<()> {
    for (p, plane) in result.stack.planes().iter().enumerate() {
        write_raster(
            &out.join(format!("plane_{p:02}.msf")),
            &Raster::from_field(&plane.transmission),
        )?;
    }
    let mut csv = String::from("iteration,error\n");
    for (i, e) in result.error_history.iter().enumerate() {
        csv.push_str(&format!("{i},{e}\n"));
    }
    write_text(&out.join("error_history.csv"), &csv)?;

    #[derive(Serialize)]
    struct Summary {
        final_error: f64,
        best_seed: u64,
        iterations: usize,
        restarts: usize,
        per_seed_errors: Vec<(u64, f64)>,
        z_list: Vec<f64>,
    }
    write_json(
        &out.join("summary.json"),
        &Summary {
            final_error: result.final_error,
            best_seed: result.seed_used,
            iterations,
            restarts,
            per_seed_errors: per_seed.iter().map(|s| (s.seed, s.final_error)).collect(),
            z_list: result.stack.z_list(),
        },
    )
}

/// Reconstructs the per-plane transmissions from a measurement.
pub fn cmd_reconstruct(
    config: &RunConfig,
    config_dir: &Path,
    measurement_dir: &Path,
    out: &Path,
) -> Result<()> {
    ensure_dir(out)?;
    let start = std::time::Instant::now();
    let m = load_measurement(measurement_dir, config)?;
    let z_list = config.z_list()?;
    let init_fn = plane_initializer(&m, &z_list);
    let constraints = config.constraint_set(config_dir, z_list.len(), &init_fn)?;
    let cfg = config.mipr_config(constraints, m.geometry);

    let (result, per_seed) = multi_start_with_scores(&m, &z_list, &cfg)?;
    write_reconstruction(out, &result, &per_seed, cfg.iterations, cfg.restarts)?;
    write_manifest(out, "reconstruct", config)?;
    write_timing(out, start.elapsed().as_secs_f64())?;
    println!(
        "reconstruct: {} planes, best error {:.6} (seed {}) -> {}",
        result.stack.len(),
        result.final_error,
        result.seed_used,
        out.display()
    );
    Ok(())
}

/// Conventional backpropagation at one or many distances from the hologram
/// plane, with a focus-metric table.
pub fn cmd_backprop(
    config: &RunConfig,
    measurement_dir: &Path,
    out: &Path,
) -> Result<()> {
    ensure_dir(out)?;
    let start = std::time::Instant::now();
    let m = load_measurement(measurement_dir, config)?;
    if matches!(m.geometry, RecordingGeometry::Diffraction { .. }) {
        return Err(CliError::Core(multislice::Error::UnsupportedGeometry(
            "backprop needs a hologram-mode measurement".into(),
        )));
    }
    let distances = config.z_distances()?;
    if distances.is_empty() {
        return Err(CliError::config("backprop needs at least one distance"));
    }
    let mut csv = String::from("index,distance_from_detector,gradient_energy\n");
    for (i, &d) in distances.iter().enumerate() {
        let z = m.detector_z() - d;
        let field = backpropagate(&m, z)?;
        write_raster(
            &out.join(format!("backprop_{i:03}_amp.msf")),
            &Raster::from_real(m.grid, &field.amplitude()),
        )?;
        write_raster(
            &out.join(format!("backprop_{i:03}_phase.msf")),
            &Raster::from_real(m.grid, &field.phase()),
        )?;
        csv.push_str(&format!("{i},{d},{}\n", gradient_energy(&field)));
    }
    write_text(&out.join("focus.csv"), &csv)?;
    write_manifest(out, "backprop", config)?;
    write_timing(out, start.elapsed().as_secs_f64())?;
    println!("backprop: {} distances -> {}", distances.len(), out.display());
    Ok(())
}

/// Reconstructs at every z candidate and keeps the best by final error.
pub fn cmd_refine_z(
    config: &RunConfig,
    config_dir: &Path,
    measurement_dir: &Path,
    out: &Path,
) -> Result<()> {
    ensure_dir(out)?;
    let start = std::time::Instant::now();
    let m = load_measurement(measurement_dir, config)?;
    let candidates = config.z_candidates()?;
    let plane_count = candidates[0].len();
    if candidates.iter().any(|c| c.len() != plane_count) {
        return Err(CliError::config("all z candidates must have the same plane count"));
    }
    // "init"-derived masks use the first candidate's plane positions
    let first = candidates[0].clone();
    let init_fn = plane_initializer(&m, &first);
    let constraints = config.constraint_set(config_dir, plane_count, &init_fn)?;
    let cfg = config.mipr_config(constraints, m.geometry);

    let refined = refine_z(&m, &candidates, &cfg)?;
    let mut csv = String::from("index,final_error,z_list\n");
    for (i, score) in refined.scores.iter().enumerate() {
        let zs: Vec<String> = score.z_list.iter().map(|z| z.to_string()).collect();
        csv.push_str(&format!("{i},{},{}\n", score.final_error, zs.join(";")));
    }
    write_text(&out.join("refine_z.csv"), &csv)?;
    write_reconstruction(out, &refined.best, &[], cfg.iterations, cfg.restarts)?;
    #[derive(Serialize)]
    struct Best {
        best_index: usize,
        best_z: Vec<f64>,
        final_error: f64,
    }
    write_json(
        &out.join("best_z.json"),
        &Best {
            best_index: refined.best_index,
            best_z: refined.scores[refined.best_index].z_list.clone(),
            final_error: refined.best.final_error,
        },
    )?;
    write_manifest(out, "refine-z", config)?;
    write_timing(out, start.elapsed().as_secs_f64())?;
    println!(
        "refine-z: best candidate {} (error {:.6}) -> {}",
        refined.best_index,
        refined.best.final_error,
        out.display()
    );
    Ok(())
}

fn to_u16_png(map: &ndarray::Array2<f64>, lo: f64, hi: f64) -> image::ImageBuffer<image::Luma<u16>, Vec<u16>> {
    let (rows, cols) = map.dim();
    let span = if hi > lo { hi - lo } else { 1.0 };
    image::ImageBuffer::from_fn(cols as u32, rows as u32, |x, y| {
        let v = map[[y as usize, x as usize]];
        let t = ((v - lo) / span).clamp(0.0, 1.0);
        image::Luma([(t * 65535.0).round() as u16])
    })
}

fn render_map(
    path: &Path,
    map: &ndarray::Array2<f64>,
    mapping: &str,
    range: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    let (lo, hi) = range.unwrap_or_else(|| {
        map.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    });
    let img = to_u16_png(map, lo, hi);
    img.save(path)
        .map_err(|e| CliError::io(path.display().to_string(), std::io::Error::other(e)))?;
    let _ = mapping;
    Ok((lo, hi))
}

#[derive(Serialize)]
struct RenderSidecar {
    source: String,
    output: Vec<String>,
    mapping: String,
    min: f64,
    max: f64,
}

/// Renders rasters to 16-bit grayscale PNGs. Real rasters map linearly over
/// their value range (or `log10(1 + I)` with `--log`); complex rasters
/// produce `_amp` and `_phase` images, phase over `[-pi, pi]`.
pub fn cmd_render(inputs: &[PathBuf], out: &Path, log_scale: bool) -> Result<()> {
    ensure_dir(out)?;
    for input in inputs {
        let raster = read_raster(input)?;
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::config(format!("bad file name {}", input.display())))?;
        match &raster.data {
            RasterData::Real(a) => {
                let map = a.mapv(|v| v as f64);
                let (mapped, mapping) = if log_scale {
                    (map.mapv(|v| (1.0 + v.max(0.0)).log10()), "log10(1+I)".to_string())
                } else {
                    (map, "linear".to_string())
                };
                let png = out.join(format!("{stem}.png"));
                let (lo, hi) = render_map(&png, &mapped, &mapping, None)?;
                write_json(
                    &out.join(format!("{stem}.render.json")),
                    &RenderSidecar {
                        source: input.display().to_string(),
                        output: vec![png.display().to_string()],
                        mapping,
                        min: lo,
                        max: hi,
                    },
                )?;
            }
            RasterData::Complex(_) => {
                let field = raster.to_field()?;
                let amp_png = out.join(format!("{stem}_amp.png"));
                let phase_png = out.join(format!("{stem}_phase.png"));
                let (alo, ahi) = render_map(&amp_png, &field.amplitude(), "linear", None)?;
                render_map(
                    &phase_png,
                    &field.phase(),
                    "linear",
                    Some((-std::f64::consts::PI, std::f64::consts::PI)),
                )?;
                write_json(
                    &out.join(format!("{stem}.render.json")),
                    &RenderSidecar {
                        source: input.display().to_string(),
                        output: vec![
                            amp_png.display().to_string(),
                            phase_png.display().to_string(),
                        ],
                        mapping: "amp linear; phase [-pi, pi]".to_string(),
                        min: alo,
                        max: ahi,
                    },
                )?;
            }
        }
    }
    println!("render: {} file(s) -> {}", inputs.len(), out.display());
    Ok(())
}
