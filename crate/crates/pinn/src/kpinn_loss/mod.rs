//! Kinetic physics-informed loss: the discrete-velocity BGK residual of the
//! network populations, data misfit, boundary and initial terms.

pub mod log;
pub mod medium;
pub mod problem;
pub mod sampling;
pub mod terms;

pub use log::{read_log, LogRow, TrainingLog, LOG_HEADER};
pub use medium::{pseudopotential_force_at, residual_from_parts, Medium, NeighborPlan, MIN_DENSITY};
pub use problem::{bc_loss, data_loss, init_loss, physics_loss, EvalRequest, Evaluation, LossProblem, DEFAULT_BLOCK};
pub use sampling::{
    sample_boundary, sample_collocation, sample_data, sample_init, BoundarySet, CollocationSet, DataSet, InitSet,
    Observation, SAMPLE_PRESETS, VALIDATION_FRACTION,
};
pub use terms::{residual, BlockSum};

use num_traits::Float;
use thiserror::Error;

use crate::autodiff::{NetError, TapeError};
use crate::scalar::NetScalar;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("point {0:?} is not in the fluid region")]
    OutsideFluid([f64; 3]),
    #[error("residual undefined: non-positive density")]
    ResidualUndefined,
    #[error("empty point set: {0}")]
    EmptySet(&'static str),
    #[error("requested {requested} points but only {available} are available")]
    TooManyPoints { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss is not finite")]
    NonFinite,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Weights of the four loss groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub phys: T,
    pub data: T,
    pub bc: T,
    pub init: T,
}

impl<T: Float> Default for LossWeights<T> {
    fn default() -> Self {
        let ten = T::from(10.0).unwrap();
        Self { phys: T::one(), data: ten, bc: ten, init: ten }
    }
}

impl<T: Float> LossWeights<T> {
    pub fn cast<U: Float>(&self) -> LossWeights<U> {
        let c = |v: T| U::from(v).unwrap();
        LossWeights { phys: c(self.phys), data: c(self.data), bc: c(self.bc), init: c(self.init) }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let all = [self.phys, self.data, self.bc, self.init];
        if all.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(LossError::Config("loss weights must be finite and non-negative".into()));
        }
        if all.iter().all(|w| *w == T::zero()) {
            return Err(LossError::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Unweighted loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts<T> {
    pub phys: T,
    pub data: T,
    pub bc_periodic: T,
    pub bc_bounce: T,
    pub init: T,
}

impl<T: Float> LossParts<T> {
    pub fn bc(&self) -> T {
        self.bc_periodic + self.bc_bounce
    }

    pub fn to_f64(&self) -> LossParts<f64> {
        let c = |v: T| v.to_f64().unwrap();
        LossParts {
            phys: c(self.phys),
            data: c(self.data),
            bc_periodic: c(self.bc_periodic),
            bc_bounce: c(self.bc_bounce),
            init: c(self.init),
        }
    }
}

pub(crate) fn cast<T: NetScalar, U: NetScalar>(v: T) -> U {
    U::from_f64(v.to_f64().unwrap()).unwrap()
}

pub(crate) fn cast3<T: NetScalar, U: NetScalar>(p: [T; 3]) -> [U; 3] {
    p.map(cast)
}

pub fn total_loss<T: Float>(parts: &LossParts<T>, w: &LossWeights<T>) -> T {
    w.phys * parts.phys + w.data * parts.data + w.bc * parts.bc() + w.init * parts.init
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_total() {
        let parts = LossParts { phys: 0.1, data: 0.01, bc_periodic: 0.0005, bc_bounce: 0.0005, init: 0.002 };
        let total = total_loss(&parts, &LossWeights::default());
        assert!((total - 0.23).abs() < 1e-15, "{total}");
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights::<f64>::default().validate().is_ok());
        let zero = LossWeights { phys: 0.0, data: 0.0, bc: 0.0, init: 0.0 };
        assert!(zero.validate().is_err());
        assert!(LossWeights { phys: -1.0, ..LossWeights::default() }.validate().is_err());
        assert!(LossWeights { data: f64::NAN, ..LossWeights::default() }.validate().is_err());
        assert!(LossWeights { phys: 0.0, ..LossWeights::default() }.validate().is_ok());
    }
}
