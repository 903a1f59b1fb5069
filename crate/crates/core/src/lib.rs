//! Multislice coherent imaging.
//!
//! A 3D sample is modelled as a stack of thin 2D planes, each applying a
//! complex transmission function to the wavefront passing through it, with
//! angular-spectrum free-space propagation between planes. This crate
//! simulates in-line holograms and far-field diffraction patterns of such
//! stacks, and recovers the full per-plane transmission distribution from a
//! single 2D intensity measurement by multislice iterative phase retrieval,
//! including multiple-scattering effects.
//!
//! Module map:
//! - [`wavefield`]: complex fields on square grids, centered DFTs, the
//!   angular-spectrum and far-field propagators.
//! - [`samplegen`]: phantom stacks (opaque letters, phase spheres, a twisted
//!   bilayer lattice surrogate) and calibrated Gaussian intensity noise.
//! - [`forward`]: the multislice forward model and intensity recording.
//! - [`constraints`]: per-plane projection operators and support-mask builders.
//! - [`mipr`]: the iterative reconstruction engine, residual metric,
//!   multi-start search and z-spacing refinement.
//! - [`metrics`]: evaluation helpers for comparing reconstructions
//!   against references.

pub mod constraints;
pub mod error;
pub mod forward;
pub mod metrics;
pub mod mipr;
pub mod samplegen;
pub mod wavefield;

pub use error::{Error, Result};
pub use wavefield::{ComplexField, Grid};
