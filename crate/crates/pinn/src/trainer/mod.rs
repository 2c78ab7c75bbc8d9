//! Two-phase optimisation: Adam with gradient clipping, a curriculum on the
//! adhesion strength and the data weight, and early stopping on held-out
//! data; then L-BFGS on the full-batch loss.

pub mod adam;
pub mod early_stop;
pub mod lbfgs;
pub mod state;

pub use adam::{clip_global_norm, Adam, AdamParams};
pub use early_stop::{Best, EarlyStopper};
pub use lbfgs::{minimize, LbfgsParams, LbfgsResult, LbfgsStatus};
pub use state::TrainState;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{DropoutMasks, NetError, Network};
use crate::kpinn_loss::{
    sample_collocation, EvalRequest, LogRow, LossError, LossParts, LossProblem, LossWeights,
};
use crate::scalar::NetScalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Both phases in `f64`.
    Double,
    /// Adam in `f32`, L-BFGS in `f64`.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub adam_epochs: usize,
    pub warmup_epochs: usize,
    pub ramp_epochs: usize,
    pub lambda_phys: f64,
    pub lambda_data_start: f64,
    pub lambda_data_end: f64,
    pub lambda_bc: f64,
    pub lambda_init: f64,
    pub lbfgs_iters: usize,
    pub lbfgs_memory: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub lbfgs_grad_tol: f64,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub validation_interval: usize,
    pub validation_fraction: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Draw a fresh collocation set every this many epochs.
    pub resample_every: Option<usize>,
    /// Points per epoch; `None` is the full batch.
    pub batch_size: Option<usize>,
    pub precision: Precision,
    pub checkpoint_every: Option<usize>,
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100; 8],
            lr: 1e-4,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            adam_epochs: 150_000,
            warmup_epochs: 20_000,
            ramp_epochs: 10_000,
            lambda_phys: 1.0,
            lambda_data_start: 10.0,
            lambda_data_end: 100.0,
            lambda_bc: 10.0,
            lambda_init: 10.0,
            lbfgs_iters: 50_000,
            lbfgs_memory: 20,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            lbfgs_grad_tol: 1e-9,
            patience: 10_000,
            validation_interval: 100,
            validation_fraction: 0.1,
            dropout: 0.1,
            seed: 0,
            resample_every: None,
            batch_size: None,
            precision: Precision::Double,
            checkpoint_every: None,
            divergence_limit: 1e6,
        }
    }
}

impl TrainConfig {
    /// Scaled-down schedule for a 100 x 100 domain.
    pub fn desk() -> Self {
        Self {
            hidden: vec![50; 4],
            adam_epochs: 20_000,
            warmup_epochs: 2_000,
            ramp_epochs: 1_000,
            lbfgs_iters: 2_000,
            precision: Precision::Mixed,
            // the short schedule needs a faster rate and no dropout noise
            lr: 1e-3,
            dropout: 0.0,
            // the initial term is a sum over its points, the others are means
            lambda_init: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        if self.patience == 0 || self.validation_interval == 0 {
            return bad("patience and validation interval must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if self.lbfgs_memory == 0 || !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return bad("L-BFGS needs memory > 0 and 0 < c1 < c2 < 1");
        }
        if self.resample_every == Some(0) || self.batch_size == Some(0) || self.checkpoint_every == Some(0) {
            return bad("resampling, batch and checkpoint intervals must be positive");
        }
        if !(self.divergence_limit > 0.0) {
            return bad("divergence limit must be positive");
        }
        self.weights(self.lambda_data_start).validate()?;
        self.weights(self.lambda_data_end).validate()?;
        Ok(())
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, clip_norm: self.clip_norm }
    }

    pub fn lbfgs_params(&self) -> LbfgsParams {
        LbfgsParams {
            max_iters: self.lbfgs_iters,
            memory: self.lbfgs_memory,
            c1: self.wolfe_c1,
            c2: self.wolfe_c2,
            grad_tol: self.lbfgs_grad_tol,
            ..LbfgsParams::default()
        }
    }

    pub fn weights(&self, lambda_data: f64) -> LossWeights<f64> {
        LossWeights { phys: self.lambda_phys, data: lambda_data, bc: self.lambda_bc, init: self.lambda_init }
    }
}

/// `(G_ads, lambda_data)` at `epoch`: zero adhesion during the warm-up, then
/// both ramp linearly over the ramp window, then stay at their full values.
pub fn curriculum(epoch: usize, cfg: &TrainConfig, g_full: f64) -> (f64, f64) {
    let (l0, l1) = (cfg.lambda_data_start, cfg.lambda_data_end);
    if epoch < cfg.warmup_epochs {
        return (0.0, l0);
    }
    let into = epoch - cfg.warmup_epochs;
    if into >= cfg.ramp_epochs {
        return (g_full, l1);
    }
    let s = into as f64 / cfg.ramp_epochs as f64;
    (s * g_full, l0 + s * (l1 - l0))
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite gradient at Adam step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64, last_good: Box<Network<f64>> },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("monitor: {0}")]
    Monitor(String),
}

/// Receives progress; every method defaults to doing nothing.
pub trait Monitor {
    fn epoch(&mut self, _row: &LogRow) -> Result<(), String> {
        Ok(())
    }
    fn validation(&mut self, _epoch: usize, _value: f64) {}
    /// New best validation parameters.
    fn best(&mut self, _net: &Network<f64>) -> Result<(), String> {
        Ok(())
    }
    fn checkpoint(&mut self, _state: &TrainState) -> Result<(), String> {
        Ok(())
    }
}

pub struct Silent;

impl Monitor for Silent {}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsSummary {
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<LogRow>,
    pub validation: Vec<(usize, f64)>,
    /// Logged total at the first epoch.
    pub initial_loss: f64,
    /// Full-weight, dropout-free loss when Adam hands over.
    pub adam_exit_loss: f64,
    pub final_loss: f64,
    pub final_parts: LossParts<f64>,
    pub lbfgs: Option<LbfgsSummary>,
    pub stopped_early: Option<usize>,
    pub best_validation: Option<(usize, f64)>,
    pub state: TrainState,
}

fn mix(seed: u64, stream: u64, k: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const DROPOUT_STREAM: u64 = 1;
const RESAMPLE_STREAM: u64 = 2;
const BATCH_STREAM: u64 = 3;

fn to_f64<T: NetScalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64().unwrap()).collect()
}

fn from_f64<T: NetScalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::from_f64(*x).unwrap()).collect()
}

/// Runs the Adam phase from `state.epoch` in precision `T`, keeping `state`
/// in sync at checkpoints and on exit.
fn adam_phase<T: NetScalar>(
    base: &LossProblem<T>,
    cfg: &TrainConfig,
    g_full: f64,
    state: &mut TrainState,
    monitor: &mut dyn Monitor,
) -> Result<(), TrainError> {
    let mut net: Network<T> = state.net.convert();
    let mut params = net.params();
    let mut adam = Adam { m: from_f64::<T>(&state.adam.m), v: from_f64::<T>(&state.adam.v), t: state.adam.t };
    let mut stopper = EarlyStopper::<Vec<T>>::new(cfg.patience);
    stopper.best = state.best.as_ref().map(|b| Best { epoch: b.epoch, value: b.value, params: from_f64(&b.params) });
    let ap = cfg.adam_params();
    let mut resampled: Option<(usize, LossProblem<T>)> = None;

    let sync = |state: &mut TrainState, net: &Network<T>, adam: &Adam<T>, stopper: &EarlyStopper<Vec<T>>| {
        state.net = net.convert();
        state.adam = Adam { m: to_f64(&adam.m), v: to_f64(&adam.v), t: adam.t };
        state.best =
            stopper.best.as_ref().map(|b| Best { epoch: b.epoch, value: b.value, params: to_f64(&b.params) });
    };

    for epoch in state.epoch..cfg.adam_epochs {
        if let Some(k) = cfg.resample_every {
            let round = epoch / k;
            if round > 0 && resampled.as_ref().is_none_or(|(r, _)| *r != round) {
                let coll = sample_collocation(
                    &base.medium,
                    base.horizon,
                    base.collocation.len(),
                    mix(cfg.seed, RESAMPLE_STREAM, round as u64),
                )?;
                resampled = Some((round, LossProblem { collocation: coll, ..base.clone() }));
            }
        }
        let current = match &resampled {
            Some((_, p)) => p,
            None => base,
        };
        let batch;
        let problem = match cfg.batch_size {
            Some(b) if b < current.collocation.len().max(current.train.len()) => {
                batch = current.minibatch(b, mix(cfg.seed, BATCH_STREAM, epoch as u64));
                &batch
            }
            _ => current,
        };

        if epoch % cfg.validation_interval == 0 && !base.validation.is_empty() {
            let val = base.validation_loss(&net)?.to_f64().unwrap();
            state.validation.push((epoch, val));
            monitor.validation(epoch, val);
            let before = stopper.best.as_ref().map(|b| b.epoch);
            let stop = stopper.observe(epoch, val, &params);
            if stopper.best.as_ref().map(|b| b.epoch) != before {
                monitor.best(&net.convert()).map_err(TrainError::Monitor)?;
            }
            if stop {
                state.stopped_early = Some(epoch);
                break;
            }
        }

        let (g_ads, lambda) = curriculum(epoch, cfg, g_full);
        let weights = cfg.weights(lambda);
        let masks = (cfg.dropout > 0.0).then(|| {
            DropoutMasks::sample(&net, T::from_f64(cfg.dropout).unwrap(), mix(cfg.seed, DROPOUT_STREAM, epoch as u64))
        });
        let req = EvalRequest {
            g_ads: T::from_f64(g_ads).unwrap(),
            weights: weights.cast(),
            dropout: masks.as_ref(),
            gradient: true,
        };
        let ev = problem.evaluate(&net, &req)?;
        let total = ev.total.to_f64().unwrap();
        if !total.is_finite() || total > cfg.divergence_limit {
            sync(state, &net, &adam, &stopper);
            let last_good = Box::new(state.net.clone());
            return Err(TrainError::Diverged { epoch, loss: total, last_good });
        }
        let row = LogRow { epoch, parts: ev.parts.to_f64(), total, weights, g_ads };
        state.history.push(row);
        monitor.epoch(&row).map_err(TrainError::Monitor)?;

        adam.step(&mut params, ev.gradient.as_deref().unwrap_or_default(), &ap)?;
        net.set_params(&params)?;
        state.epoch = epoch + 1;
        if cfg.checkpoint_every.is_some_and(|k| state.epoch % k == 0) {
            sync(state, &net, &adam, &stopper);
            monitor.checkpoint(state).map_err(TrainError::Monitor)?;
        }
    }
    sync(state, &net, &adam, &stopper);
    Ok(())
}

/// Trains `net` on `problem`, resuming from `resume` when given. On return
/// `net` holds the refined parameters.
pub fn train(
    net: &mut Network<f64>,
    problem: &LossProblem<f64>,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    monitor: &mut dyn Monitor,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let g_full = problem.medium.g_ads;
    let mut state = match resume {
        Some(s) => {
            if s.net.dims() != net.dims() {
                return Err(TrainError::Config("resumed state has a different architecture".into()));
            }
            s
        }
        None => TrainState::new(net),
    };

    if state.epoch < cfg.adam_epochs && state.stopped_early.is_none() {
        match cfg.precision {
            Precision::Double => adam_phase(problem, cfg, g_full, &mut state, monitor)?,
            Precision::Mixed => adam_phase(&problem.convert::<f32>(), cfg, g_full, &mut state, monitor)?,
        }
    }
    *net = state.net.clone();
    if let Some(best) = &state.best {
        net.set_params(&best.params)?;
    }

    let weights = cfg.weights(cfg.lambda_data_end);
    let full = EvalRequest { g_ads: g_full, weights, dropout: None, gradient: true };
    let exit = problem.evaluate(net, &EvalRequest { gradient: false, ..full })?;
    let adam_exit_loss = exit.total;
    let mut final_parts = exit.parts;
    let mut final_loss = adam_exit_loss;
    let mut lbfgs = None;

    if cfg.lbfgs_iters > 0 {
        let start_epoch = state.history.last().map_or(0, |r| r.epoch + 1);
        // parts of recent evaluations, to label the accepted iterates
        let mut recent: VecDeque<(u64, LossParts<f64>)> = VecDeque::new();
        let mut probe = net.clone();
        let mut iteration = 0usize;
        let mut last_logged = adam_exit_loss;
        let result = minimize(&net.params(), &cfg.lbfgs_params(), |x| -> Result<(f64, Vec<f64>), TrainError> {
            probe.set_params(x)?;
            let ev = problem.evaluate(&probe, &full)?;
            if recent.len() == 64 {
                recent.pop_front();
            }
            recent.push_back((ev.total.to_bits(), ev.parts));
            if ev.total < last_logged {
                last_logged = ev.total;
                let row = LogRow { epoch: start_epoch + iteration, parts: ev.parts, total: ev.total, weights, g_ads: g_full };
                iteration += 1;
                state.history.push(row);
                monitor.epoch(&row).map_err(TrainError::Monitor)?;
            }
            Ok((ev.total, ev.gradient.unwrap_or_default()))
        })?;
        net.set_params(&result.x)?;
        final_loss = result.value;
        if let Some((_, parts)) = recent.iter().rev().find(|(bits, _)| *bits == result.value.to_bits()) {
            final_parts = *parts;
        }
        lbfgs = Some(LbfgsSummary { iterations: result.iterations, evaluations: result.evaluations, status: result.status });
    }

    let initial_loss = state.history.first().map_or(adam_exit_loss, |r| r.total);
    Ok(TrainReport {
        history: state.history.clone(),
        validation: state.validation.clone(),
        initial_loss,
        adam_exit_loss,
        final_loss,
        final_parts,
        lbfgs,
        stopped_early: state.stopped_early,
        best_validation: state.best.as_ref().map(|b| (b.epoch, b.value)),
        state,
    })
}
