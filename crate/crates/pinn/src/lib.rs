//! Kinetic physics-informed network for droplet wetting.
//!
//! A small dense network predicts the nine D2Q9 populations `f_i(x, y, t)`.
//! Training penalises the BGK residual with Shan-Chen forcing at collocation
//! points together with data, boundary and initial-condition misfits, first
//! with Adam and a curriculum on the adhesion strength, then with L-BFGS.

pub mod autodiff;
pub mod kpinn_loss;
pub mod scalar;
pub mod trainer;

pub use scalar::NetScalar;

pub type Net = autodiff::Network<f64>;
pub type Problem = kpinn_loss::LossProblem<f64>;
pub type Dataset = kpinn_loss::DataSet<f64>;
pub type PhysicalMedium = kpinn_loss::Medium<f64>;
