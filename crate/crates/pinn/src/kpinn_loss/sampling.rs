//! Point sets for the loss terms.

use kwet_core::lbm::{fluid_fluid_force, fluid_solid_force, Snapshot};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::medium::{Medium, NeighborPlan};
use super::{cast, cast3, LossError};
use crate::scalar::NetScalar;

/// Sample sizes of the sampling-density study.
pub const SAMPLE_PRESETS: [usize; 4] = [1024, 2048, 4096, 8192];

/// Fraction of data points held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Residual points with their precomputed force stencils.
#[derive(Debug, Clone)]
pub struct CollocationSet<T> {
    pub points: Vec<[T; 3]>,
    pub plans: Vec<NeighborPlan<T>>,
}

impl<T: NetScalar> CollocationSet<T> {
    pub fn new(points: Vec<[T; 3]>, medium: &Medium<T>) -> Result<Self, LossError> {
        let plans = points.iter().map(|&p| medium.neighbor_plan(p)).collect::<Result<_, _>>()?;
        Ok(Self { points, plans })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn convert<U: NetScalar>(&self) -> CollocationSet<U> {
        CollocationSet {
            points: self.points.iter().map(|p| cast3(*p)).collect(),
            plans: self.plans.iter().map(|p| p.convert()).collect(),
        }
    }

    /// The points at the given indices.
    pub fn select(&self, idx: &[usize]) -> Self {
        CollocationSet { points: idx.iter().map(|&k| self.points[k]).collect(), plans: idx.iter().map(|&k| self.plans[k]).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One simulator observation. `u` is the momentum velocity `sum f c / rho`,
/// i.e. the simulator velocity without its half-force shift, so that it
/// compares directly with the network's `j / rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub point: [T; 3],
    pub rho: T,
    pub u: [T; 2],
}

impl<T: NetScalar> Observation<T> {
    pub fn convert<U: NetScalar>(&self) -> Observation<U> {
        Observation { point: cast3(self.point), rho: cast(self.rho), u: self.u.map(cast) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet<T> {
    pub observations: Vec<Observation<T>>,
    /// `true` for held-out points.
    pub validation: Vec<bool>,
}

impl<T: NetScalar> DataSet<T> {
    /// Marks a seeded random `fraction` of the observations as validation.
    pub fn split(observations: Vec<Observation<T>>, fraction: f64, seed: u64) -> Self {
        let n = observations.len();
        let n_val = ((n as f64) * fraction).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5eed_da7a));
        let mut validation = vec![false; n];
        for &k in &idx[..n_val.min(n)] {
            validation[k] = true;
        }
        Self { observations, validation }
    }

    pub fn train(&self) -> Vec<Observation<T>> {
        self.select(false)
    }

    pub fn held_out(&self) -> Vec<Observation<T>> {
        self.select(true)
    }

    fn select(&self, held_out: bool) -> Vec<Observation<T>> {
        self.observations.iter().zip(&self.validation).filter(|(_, &v)| v == held_out).map(|(o, _)| *o).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoundarySet<T> {
    /// Points on `x = 0` and their images on `x = nx`.
    pub left: Vec<[T; 3]>,
    pub right: Vec<[T; 3]>,
    /// Points on the bottom and top edges; only sampled when requested.
    pub bottom: Vec<[T; 3]>,
    pub top: Vec<[T; 3]>,
    /// Points on the solid-fluid link midway above each sampled column top.
    pub wall: Vec<[T; 3]>,
}

impl<T: NetScalar> BoundarySet<T> {
    pub fn convert<U: NetScalar>(&self) -> BoundarySet<U> {
        let c = |v: &Vec<[T; 3]>| v.iter().map(|p| cast3(*p)).collect();
        BoundarySet { left: c(&self.left), right: c(&self.right), bottom: c(&self.bottom), top: c(&self.top), wall: c(&self.wall) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSet<T> {
    pub points: Vec<[T; 3]>,
    pub rho: Vec<T>,
}

impl<T: NetScalar> InitSet<T> {
    pub fn convert<U: NetScalar>(&self) -> InitSet<U> {
        InitSet { points: self.points.iter().map(|p| cast3(*p)).collect(), rho: self.rho.iter().map(|v| cast(*v)).collect() }
    }
}

fn t_of<T: NetScalar>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

fn check_horizon<T: NetScalar>(horizon: T) -> Result<f64, LossError> {
    let h = horizon.to_f64().unwrap();
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(LossError::Config(format!("time horizon must be positive, got {h}")))
    }
}

/// Uniform points in the fluid region and `[0, horizon]`.
pub fn sample_collocation<T: NetScalar>(
    medium: &Medium<T>,
    horizon: T,
    n: usize,
    seed: u64,
) -> Result<CollocationSet<T>, LossError> {
    if n == 0 {
        return Err(LossError::EmptySet("collocation"));
    }
    let h = check_horizon(horizon)?;
    if medium.domain.mask.fluid_count() == 0 {
        return Err(LossError::EmptySet("fluid region"));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (lx, ly) = (medium.nx() as f64, (medium.ny() - 1) as f64);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let x = t_of::<T>(rng.gen_range(0.0..lx));
        let y = t_of::<T>(rng.gen_range(0.0..=ly));
        if medium.is_fluid(x, y) {
            points.push([x, y, t_of(rng.gen_range(0.0..=h))]);
        }
    }
    CollocationSet::new(points, medium)
}

/// Draws `n` distinct (node, snapshot) observations from the fluid nodes of
/// the snapshots. With `densify`, nodes in the lowest quarter of the domain
/// are twice as likely to be drawn.
pub fn sample_data<T: NetScalar>(
    snapshots: &[Snapshot<T>],
    medium: &Medium<T>,
    n: usize,
    seed: u64,
    densify: bool,
    validation_fraction: f64,
) -> Result<DataSet<T>, LossError> {
    if n == 0 {
        return Err(LossError::EmptySet("data"));
    }
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(LossError::Config(format!("validation fraction {validation_fraction} outside [0, 1)")));
    }
    let (nx, ny) = (medium.nx(), medium.ny());
    let solid = medium.domain.mask.as_slice();
    let fluid: Vec<usize> = (0..nx * ny).filter(|&k| !solid[k]).collect();
    let available = fluid.len() * snapshots.len();
    if n > available {
        return Err(LossError::TooManyPoints { requested: n, available });
    }
    for s in snapshots {
        if s.fields.nx != nx || s.fields.ny != ny {
            return Err(LossError::Config("snapshot size differs from the medium".into()));
        }
    }
    // Efraimidis-Spirakis weighted sampling without replacement
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let low = ny as f64 * 0.25;
    let mut keyed: Vec<(f64, usize)> = (0..available)
        .map(|k| {
            let node = fluid[k % fluid.len()];
            let w = if densify && ((node / nx) as f64) < low { 2.0 } else { 1.0 };
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / w, k)
        })
        .collect();
    keyed.select_nth_unstable_by(n - 1, |a, b| b.0.total_cmp(&a.0));
    let mut chosen: Vec<usize> = keyed[..n].iter().map(|&(_, k)| k).collect();
    chosen.sort_unstable();

    let params = medium.force_params(medium.g_ads);
    let half = t_of::<T>(0.5);
    let mut forces: Vec<Option<Vec<[T; 2]>>> = vec![None; snapshots.len()];
    let mut observations = Vec::with_capacity(n);
    for k in chosen {
        let (si, node) = (k / fluid.len(), fluid[k % fluid.len()]);
        let snap = &snapshots[si];
        let force = forces[si].get_or_insert_with(|| {
            let ff = fluid_fluid_force(&snap.fields.rho, &medium.domain, &params);
            let fs = fluid_solid_force(&snap.fields.rho, &medium.domain, &params);
            ff.iter().zip(&fs).map(|(a, b)| [a[0] + b[0], a[1] + b[1]]).collect()
        });
        let rho = snap.fields.rho[node];
        let shift = |d: usize| half * force[node][d] / rho;
        observations.push(Observation {
            point: [
                T::from_usize(node % nx).unwrap(),
                T::from_usize(node / nx).unwrap(),
                T::from_u64(snap.time).unwrap(),
            ],
            rho,
            u: [snap.fields.ux[node] - shift(0), snap.fields.uy[node] - shift(1)],
        });
    }
    Ok(DataSet::split(observations, validation_fraction, seed))
}

/// Periodic edge pairs and wall points.
pub fn sample_boundary<T: NetScalar>(
    medium: &Medium<T>,
    horizon: T,
    n_periodic: usize,
    n_wall: usize,
    top_bottom: bool,
    seed: u64,
) -> Result<BoundarySet<T>, LossError> {
    let h = check_horizon(horizon)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (nx, ny) = (medium.nx(), medium.ny());
    let lx = t_of::<T>(nx as f64);
    let mut set = BoundarySet::default();
    let open_rows: Vec<usize> = (0..ny).filter(|&y| !medium.domain.mask.is_solid(0, y)).collect();
    if n_periodic > 0 && !open_rows.is_empty() {
        for _ in 0..n_periodic {
            let base = open_rows[rng.gen_range(0..open_rows.len())] as f64;
            let y = t_of::<T>((base + rng.gen_range(-0.5..0.5)).clamp(0.0, (ny - 1) as f64));
            let t = t_of::<T>(rng.gen_range(0.0..=h));
            set.left.push([T::zero(), y, t]);
            set.right.push([lx, y, t]);
        }
    }
    if top_bottom {
        let ly = t_of::<T>((ny - 1) as f64);
        for _ in 0..n_periodic {
            let x = t_of::<T>(rng.gen_range(0.0..nx as f64));
            let t = t_of::<T>(rng.gen_range(0.0..=h));
            set.bottom.push([x, T::zero(), t]);
            set.top.push([x, ly, t]);
        }
    }
    let tops: Vec<(usize, usize)> =
        medium.domain.mask.column_tops().into_iter().enumerate().filter_map(|(x, t)| t.map(|t| (x, t))).collect();
    if !tops.is_empty() {
        for _ in 0..n_wall {
            let (x, top) = tops[rng.gen_range(0..tops.len())];
            let t = t_of::<T>(rng.gen_range(0.0..=h));
            set.wall.push([T::from_usize(x).unwrap(), t_of(top as f64 + 0.5), t]);
        }
    }
    Ok(set)
}

/// `n` distinct fluid nodes at `t = 0` with their initial densities.
pub fn sample_init<T: NetScalar>(medium: &Medium<T>, rho0: &[T], n: usize, seed: u64) -> Result<InitSet<T>, LossError> {
    let (nx, ny) = (medium.nx(), medium.ny());
    if rho0.len() != nx * ny {
        return Err(LossError::Config("initial density has the wrong size".into()));
    }
    let solid = medium.domain.mask.as_slice();
    let mut fluid: Vec<usize> = (0..nx * ny).filter(|&k| !solid[k]).collect();
    if n > fluid.len() {
        return Err(LossError::TooManyPoints { requested: n, available: fluid.len() });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (picked, _) = fluid.partial_shuffle(&mut rng, n);
    picked.sort_unstable();
    Ok(InitSet {
        points: picked.iter().map(|&k| [T::from_usize(k % nx).unwrap(), T::from_usize(k / nx).unwrap(), T::zero()]).collect(),
        rho: picked.iter().map(|&k| rho0[k]).collect(),
    })
}
