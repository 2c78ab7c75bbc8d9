//! Two-phase droplet wetting on rough and textured substrates: a D2Q9
//! Shan-Chen lattice Boltzmann solver, substrate generators and the
//! diagnostics used to compare surrogate predictions against it.
//!
//! All numerical code is generic over the scalar type; the aliases at the
//! bottom of this file fix the double-precision instantiations used by the
//! command line tool.

pub mod lattice;
pub mod evaluation;
pub mod lbm;
pub mod scalar;
pub mod surface;

pub use scalar::{Real, Scalar};

pub type Lattice = lattice::LatticeModel<f64>;
pub type Simulator = lbm::Solver<f64>;
pub type Config = lbm::SimConfig<f64>;
pub type Substrate = surface::Substrate<f64>;
pub type Snapshot = lbm::Snapshot<f64>;
pub type Metrics = evaluation::Metrics<f64>;
pub type DropletGeometry = evaluation::DropletGeometry<f64>;
