//! Agreement metrics, interface extraction, droplet geometry and
//! conservation audits.

mod geometry;
mod interface;
mod metrics;
mod stats;

use thiserror::Error;

pub use geometry::{droplet_geometry, fit_circle, measure_droplet, substrate_reference, DropletGeometry, CONTACT_WINDOW};
pub use interface::{bilinear, extract_interface, fill_solid, InterfaceProfile};
pub use metrics::{metrics, metrics_series, Metrics, MetricsReport};
pub use stats::{
    error_histogram, mass_audit, temporal_rmse, write_histogram_csv, write_scatter_csv, write_temporal_csv,
    HistogramSpec,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("length mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("no samples")]
    Empty,
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("no iso-density crossing in the field")]
    NoInterface,
    #[error("histogram needs at least one bin and max > min")]
    InvalidBins,
}

/// Iso level halfway between the bulk densities.
pub fn midpoint_iso<T: crate::Real>(rho_l: T, rho_g: T) -> T {
    (rho_l + rho_g) / crate::scalar::lit(2.0)
}
