//! Workflows around the simulator and the kinetic PINN: configuration
//! files, binary artifacts and the `kwet` subcommands.

use std::path::Path;

use kwet_core::evaluation::EvalError;
use kwet_core::lbm::LbmError;
use kwet_core::surface::SurfaceError;
use kwet_pinn::autodiff::NetError;
use kwet_pinn::kpinn_loss::LossError;
use kwet_pinn::trainer::TrainError;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod files;
pub mod pipeline;

pub use config::{Preset, RunConfig};
pub use files::{DatasetFile, ModelFile, SnapshotFile};

/// Exit status for scripting: configuration problems, numerical failures
/// and file-system or format problems are distinguished.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<LbmError> for CliError {
    fn from(e: LbmError) -> Self {
        match e {
            LbmError::Instability { .. } | LbmError::Calibration(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SurfaceError> for CliError {
    fn from(e: SurfaceError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFinite | EvalError::NoInterface => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::NonFinite | LossError::ResidualUndefined | LossError::Tape(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::Loss(l) => l.into(),
            TrainError::Monitor(_) => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
