//! Command-line pipeline for multislice coherent imaging: simulate
//! holograms and diffraction patterns of layered samples, reconstruct the
//! per-plane transmissions from a single intensity measurement, sweep
//! backpropagation distances, refine plane spacings, and render rasters.

mod commands;
mod config;
mod error;
mod raster;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "multislice",
    version,
    about = "Multislice coherent imaging: simulation and 3D phase retrieval"
)]
struct Cli {
    /// Worker threads for parallel restarts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured sample and write the measurement files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the noise seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct per-plane transmissions from a measurement directory.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding intensity.msf (and optionally valid_mask.msf).
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the reconstruction seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Backpropagate a hologram over one or many distances.
    Backprop {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct at every z candidate and keep the minimal-error one.
    RefineZ {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        measurement: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render MSF1 rasters to 16-bit grayscale PNGs.
    Render {
        #[arg(long)]
        out: PathBuf,
        /// Map real rasters through log10(1 + I) (diffraction patterns).
        #[arg(long)]
        log: bool,
        /// Raster files to render.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn load_config(path: &PathBuf, seed_override: Option<u64>, for_noise: bool) -> Result<RunConfig> {
    let mut config = RunConfig::from_file(path)?;
    if let Some(seed) = seed_override {
        if for_noise {
            if let Some(noise) = &mut config.noise {
                noise.seed = seed;
            }
        } else {
            let mut section = config.mipr.clone().unwrap_or_default();
            section.seed = seed;
            config.mipr = Some(section);
        }
    }
    Ok(config)
}

fn config_dir(path: &PathBuf) -> PathBuf {
    path.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate { config, out, seed } => {
            let cfg = load_config(config, *seed, true)?;
            commands::cmd_simulate(&cfg, &config_dir(config), out)
        }
        Command::Reconstruct { config, measurement, out, seed } => {
            let cfg = load_config(config, *seed, false)?;
            commands::cmd_reconstruct(&cfg, &config_dir(config), measurement, out)
        }
        Command::Backprop { config, measurement, out } => {
            let cfg = load_config(config, None, false)?;
            commands::cmd_backprop(&cfg, measurement, out)
        }
        Command::RefineZ { config, measurement, out, seed } => {
            let cfg = load_config(config, *seed, false)?;
            commands::cmd_refine_z(&cfg, &config_dir(config), measurement, out)
        }
        Command::Render { out, log, files } => commands::cmd_render(files, out, *log),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
