//! Full-batch evaluation of the weighted loss and its gradient.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use super::medium::Medium;
use super::sampling::{BoundarySet, CollocationSet, InitSet, Observation};
use super::terms::{bounce_block, data_block, init_block, pair_block, physics_block, BlockSum};
use super::{cast, total_loss, LossError, LossParts, LossWeights};
use crate::autodiff::{DropoutMasks, Network};
use crate::scalar::NetScalar;

/// Points per tape. Small blocks keep the working set in cache.
pub const DEFAULT_BLOCK: usize = 128;

/// Everything needed to evaluate the loss of a network.
#[derive(Debug, Clone)]
pub struct LossProblem<T> {
    pub medium: Medium<T>,
    pub collocation: CollocationSet<T>,
    pub train: Vec<Observation<T>>,
    pub validation: Vec<Observation<T>>,
    pub boundary: BoundarySet<T>,
    pub init: InitSet<T>,
    /// Time horizon for resampling; defaults to the latest collocation time.
    pub horizon: T,
    pub block: usize,
}

/// Settings of one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a, T> {
    pub g_ads: T,
    pub weights: LossWeights<T>,
    pub dropout: Option<&'a DropoutMasks<T>>,
    pub gradient: bool,
}

#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub parts: LossParts<T>,
    pub total: T,
    /// Gradient of `total` in [`Network::params`] order.
    pub gradient: Option<Vec<T>>,
    /// Collocation points dropped for non-positive density.
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Phys,
    Data,
    Periodic,
    Bounce,
    Init,
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Phys(usize, usize),
    Data(usize, usize),
    LeftRight(usize, usize),
    BottomTop(usize, usize),
    Bounce(usize, usize),
    Init(usize, usize),
}

fn ranges(n: usize, block: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).step_by(block.max(1)).map(move |s| (s, (s + block).min(n)))
}

impl<T: NetScalar> LossProblem<T> {
    pub fn new(
        medium: Medium<T>,
        collocation: CollocationSet<T>,
        train: Vec<Observation<T>>,
        validation: Vec<Observation<T>>,
        boundary: BoundarySet<T>,
        init: InitSet<T>,
    ) -> Result<Self, LossError> {
        if collocation.is_empty() {
            return Err(LossError::EmptySet("collocation"));
        }
        if train.is_empty() {
            return Err(LossError::EmptySet("data"));
        }
        let horizon = collocation.points.iter().map(|p| p[2]).fold(T::zero(), T::max);
        Ok(Self { medium, collocation, train, validation, boundary, init, horizon, block: DEFAULT_BLOCK })
    }

    /// The same problem in another precision.
    pub fn convert<U: NetScalar>(&self) -> LossProblem<U> {
        LossProblem {
            medium: self.medium.convert(),
            collocation: self.collocation.convert(),
            train: self.train.iter().map(|o| o.convert()).collect(),
            validation: self.validation.iter().map(|o| o.convert()).collect(),
            boundary: self.boundary.convert(),
            init: self.init.convert(),
            horizon: cast(self.horizon),
            block: self.block,
        }
    }

    /// A seeded random subset of at most `batch` collocation points and
    /// `batch` training observations; boundary and initial sets are kept.
    pub fn minibatch(&self, batch: usize, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut pick = |n: usize| {
            let mut idx = rand::seq::index::sample(&mut rng, n, batch.min(n)).into_vec();
            idx.sort_unstable();
            idx
        };
        let coll = pick(self.collocation.len());
        let data = pick(self.train.len());
        LossProblem {
            collocation: self.collocation.select(&coll),
            train: data.iter().map(|&k| self.train[k]).collect(),
            ..self.clone()
        }
    }

    fn jobs(&self) -> Vec<Job> {
        let b = self.block;
        let mut jobs: Vec<Job> = ranges(self.collocation.len(), b).map(|(s, e)| Job::Phys(s, e)).collect();
        jobs.extend(ranges(self.train.len(), 4 * b).map(|(s, e)| Job::Data(s, e)));
        jobs.extend(ranges(self.boundary.left.len(), 4 * b).map(|(s, e)| Job::LeftRight(s, e)));
        jobs.extend(ranges(self.boundary.bottom.len(), 4 * b).map(|(s, e)| Job::BottomTop(s, e)));
        jobs.extend(ranges(self.boundary.wall.len(), 4 * b).map(|(s, e)| Job::Bounce(s, e)));
        jobs.extend(ranges(self.init.points.len(), 4 * b).map(|(s, e)| Job::Init(s, e)));
        jobs
    }

    fn run(&self, net: &Network<T>, job: Job, req: &EvalRequest<T>) -> Result<(Kind, BlockSum<T>), LossError> {
        let w = &req.weights;
        let grad = |weight: T| req.gradient && weight > T::zero();
        let d = req.dropout;
        let b = &self.boundary;
        Ok(match job {
            Job::Phys(s, e) => (
                Kind::Phys,
                physics_block(
                    net,
                    &self.medium,
                    req.g_ads,
                    &self.collocation.points[s..e],
                    &self.collocation.plans[s..e],
                    d,
                    grad(w.phys),
                )?,
            ),
            Job::Data(s, e) => (Kind::Data, data_block(net, &self.train[s..e], d, grad(w.data))?),
            Job::LeftRight(s, e) => (Kind::Periodic, pair_block(net, &b.left[s..e], &b.right[s..e], d, grad(w.bc))?),
            Job::BottomTop(s, e) => (Kind::Periodic, pair_block(net, &b.bottom[s..e], &b.top[s..e], d, grad(w.bc))?),
            Job::Bounce(s, e) => (Kind::Bounce, bounce_block(net, &b.wall[s..e], d, grad(w.bc))?),
            Job::Init(s, e) => {
                (Kind::Init, init_block(net, &self.init.points[s..e], &self.init.rho[s..e], d, grad(w.init))?)
            }
        })
    }

    /// Weighted loss, its parts and (optionally) its gradient. Blocks run in
    /// parallel; their results are reduced in a fixed order.
    pub fn evaluate(&self, net: &Network<T>, req: &EvalRequest<T>) -> Result<Evaluation<T>, LossError> {
        let results: Vec<(Kind, BlockSum<T>)> =
            self.jobs().into_par_iter().map(|job| self.run(net, job, req)).collect::<Result<_, _>>()?;
        let mut sums = [T::zero(); 5];
        let mut valid = 0;
        for (kind, r) in &results {
            sums[*kind as usize] += r.value;
            if *kind == Kind::Phys {
                valid += r.count;
            }
        }
        if valid == 0 {
            return Err(LossError::EmptySet("collocation points with positive density"));
        }
        let n_valid = T::from_usize(valid).unwrap();
        let n_data = T::from_usize(self.train.len()).unwrap();
        let parts = LossParts {
            phys: sums[Kind::Phys as usize] / n_valid,
            data: sums[Kind::Data as usize] / n_data,
            bc_periodic: sums[Kind::Periodic as usize],
            bc_bounce: sums[Kind::Bounce as usize],
            init: sums[Kind::Init as usize],
        };
        let total = total_loss(&parts, &req.weights);
        let excluded = self.collocation.len() - valid;
        if excluded > 0 {
            log::warn!("{excluded} collocation points with non-positive density excluded from the residual");
        }
        let gradient = req.gradient.then(|| {
            let w = &req.weights;
            let mut g = vec![T::zero(); net.param_count()];
            for (kind, r) in &results {
                let Some(rg) = &r.gradient else { continue };
                let scale = match kind {
                    Kind::Phys => w.phys / n_valid,
                    Kind::Data => w.data / n_data,
                    Kind::Periodic | Kind::Bounce => w.bc,
                    Kind::Init => w.init,
                };
                for (a, b) in g.iter_mut().zip(rg) {
                    *a += scale * *b;
                }
            }
            g
        });
        Ok(Evaluation { parts, total, gradient, excluded })
    }

    /// Data misfit on the held-out observations (no dropout).
    pub fn validation_loss(&self, net: &Network<T>) -> Result<T, LossError> {
        data_loss(net, &self.validation)
    }
}

/// Mean over points of the summed squared residual, and the number of
/// excluded points.
pub fn physics_loss<T: NetScalar>(
    net: &Network<T>,
    medium: &Medium<T>,
    set: &CollocationSet<T>,
    g_ads: T,
) -> Result<(T, usize), LossError> {
    if set.is_empty() {
        return Err(LossError::EmptySet("collocation"));
    }
    net.check_finite()?;
    let mut sum = T::zero();
    let mut valid = 0;
    for (s, e) in ranges(set.len(), DEFAULT_BLOCK) {
        let r = physics_block(net, medium, g_ads, &set.points[s..e], &set.plans[s..e], None, false)?;
        sum += r.value;
        valid += r.count;
    }
    if valid == 0 {
        return Err(LossError::EmptySet("collocation points with positive density"));
    }
    Ok((sum / T::from_usize(valid).unwrap(), set.len() - valid))
}

/// `(1/N) sum [(rho - rho*)^2 + |u - u*|^2]`.
pub fn data_loss<T: NetScalar>(net: &Network<T>, obs: &[Observation<T>]) -> Result<T, LossError> {
    if obs.is_empty() {
        return Err(LossError::EmptySet("data"));
    }
    net.check_finite()?;
    let mut sum = T::zero();
    for (s, e) in ranges(obs.len(), 4 * DEFAULT_BLOCK) {
        sum += data_block(net, &obs[s..e], None, false)?.value;
    }
    Ok(sum / T::from_usize(obs.len()).unwrap())
}

/// `(periodic, bounce-back)` boundary sums.
pub fn bc_loss<T: NetScalar>(net: &Network<T>, set: &BoundarySet<T>) -> Result<(T, T), LossError> {
    net.check_finite()?;
    let mut periodic = T::zero();
    if !set.left.is_empty() {
        periodic += pair_block(net, &set.left, &set.right, None, false)?.value;
    }
    if !set.bottom.is_empty() {
        periodic += pair_block(net, &set.bottom, &set.top, None, false)?.value;
    }
    let bounce = if set.wall.is_empty() { T::zero() } else { bounce_block(net, &set.wall, None, false)?.value };
    Ok((periodic, bounce))
}

/// `sum (rho(x, y, 0) - rho_0(x, y))^2` over the sampled points.
pub fn init_loss<T: NetScalar>(net: &Network<T>, set: &InitSet<T>) -> Result<T, LossError> {
    net.check_finite()?;
    if set.points.is_empty() {
        return Ok(T::zero());
    }
    Ok(init_block(net, &set.points, &set.rho, None, false)?.value)
}
