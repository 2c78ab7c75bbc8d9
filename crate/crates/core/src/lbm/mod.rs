//! Two-phase lattice Boltzmann solver (Shan-Chen pseudopotential, Guo
//! forcing, BGK collision) with wetting substrates.

mod calibrate;
mod config;
mod forces;
mod solver;

use thiserror::Error;

pub use crate::lattice::{bounce_back, psi};
pub use calibrate::{
    coexistence_densities, coexistence_scan, CRITICAL_REDUCED_G, flat_interface_profile, interface_thickness,
    laplace_calibration, shear_wave_viscosity, CoexistenceScan, DensityPair, LaplaceFit,
    LaplaceOptions, LaplaceRow, ReferenceDensity, ScanOptions,
};
pub use config::{Placement, SimConfig, TopBoundary, CALIBRATED_G, CALIBRATED_RHO0, PRESET_WALL_DENSITY};
pub use forces::{
    fluid_fluid_force, fluid_solid_force, guo_source, psi_field, wall_stencil, Domain, ForceParams,
};
pub use solver::{
    droplet_center, init_droplet, initial_density, run, Diagnostics, DistributionField, MacroField,
    RunError, Snapshot, Solver,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LbmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Surface(#[from] crate::surface::SurfaceError),
    #[error("numerical instability at step {step}, node ({x}, {y}): density {value}")]
    Instability { step: u64, x: usize, y: usize, value: f64 },
    #[error("calibration failed: {0}")]
    Calibration(String),
}
