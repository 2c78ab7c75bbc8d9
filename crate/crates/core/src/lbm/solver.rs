use rayon::prelude::*;

use crate::lattice::{equilibrium, weights, Q, VELOCITIES};
use crate::scalar::{from_usize, lit, Real};
use crate::surface::Substrate;

use super::config::{Placement, SimConfig, TopBoundary};
use super::forces::{guo_source, Domain, ForceParams};
use super::LbmError;

const OUTSIDE: u32 = u32::MAX;

/// Density and velocity grids, row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroField<T> {
    pub nx: usize,
    pub ny: usize,
    pub rho: Vec<T>,
    pub ux: Vec<T>,
    pub uy: Vec<T>,
}

impl<T: Real> MacroField<T> {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            rho: vec![T::zero(); nx * ny],
            ux: vec![T::zero(); nx * ny],
            uy: vec![T::zero(); nx * ny],
        }
    }
}

/// Populations stored channel-major: `data[(i * ny + y) * nx + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField<T> {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<T>,
}

impl<T: Real> DistributionField<T> {
    #[inline]
    pub fn get(&self, i: usize, x: usize, y: usize) -> T {
        self.data[(i * self.ny + y) * self.nx + x]
    }

    /// The nine populations of node `n = y * nx + x`.
    pub fn node(&self, n: usize) -> [T; Q] {
        let plane = self.nx * self.ny;
        std::array::from_fn(|i| self.data[i * plane + n])
    }
}

/// Immutable state emitted by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub time: u64,
    pub fields: MacroField<T>,
    pub distributions: Option<DistributionField<T>>,
    pub config_hash: [u8; 32],
}

/// Step-level diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub max_speed: f64,
    /// Steps on which some fluid speed exceeded the sound speed.
    pub supersonic_steps: u64,
}

/// D2Q9 Shan-Chen solver with Guo forcing and link bounce-back.
///
/// Populations are stored node-major (`f[n * 9 + i]`) and streamed with a
/// double buffer.
pub struct Solver<T> {
    pub config: SimConfig<T>,
    domain: Domain,
    heights: Vec<T>,
    nbr: Vec<u32>,
    force_nbr: Vec<u32>,
    f: Vec<T>,
    scratch: Vec<T>,
    rho: Vec<T>,
    psi: Vec<T>,
    force: Vec<[T; 2]>,
    vel: Vec<[T; 2]>,
    wall_stencil: Vec<[T; 2]>,
    time: u64,
    macro_time: Option<u64>,
    config_hash: [u8; 32],
    initial_mass: T,
    pub diagnostics: Diagnostics,
}

impl<T: Real> Solver<T> {
    /// Builds the substrate and the initial droplet described by `config`.
    pub fn new(config: SimConfig<T>) -> Result<Self, LbmError> {
        config.validate()?;
        let substrate = config.surface.build(config.nx, config.ny)?;
        let rho = initial_density(&config, &substrate)?;
        Self::from_density(config, substrate, &rho)
    }

    /// Equilibrium start (`u = 0`) from an arbitrary density field.
    pub fn from_density(config: SimConfig<T>, substrate: Substrate<T>, rho: &[T]) -> Result<Self, LbmError> {
        let zero = vec![T::zero(); rho.len()];
        Self::from_fields(config, substrate, rho, &zero, &zero)
    }

    /// Equilibrium start from density and velocity fields.
    pub fn from_fields(
        config: SimConfig<T>,
        substrate: Substrate<T>,
        rho: &[T],
        ux: &[T],
        uy: &[T],
    ) -> Result<Self, LbmError> {
        let (nx, ny) = (config.nx, config.ny);
        if rho.len() != nx * ny || ux.len() != nx * ny || uy.len() != nx * ny {
            return Err(LbmError::Config("field size does not match the domain".into()));
        }
        let domain = Domain::new(substrate.mask, config.top);
        let nbr = domain.neighbor_table();
        let force_nbr = domain.interaction_table();
        let w = weights::<T>();
        let solid = domain.mask.as_slice();
        let mut f = vec![T::zero(); nx * ny * Q];
        for n in 0..nx * ny {
            if solid[n] {
                continue;
            }
            let feq = equilibrium(rho[n], [ux[n], uy[n]]);
            f[n * Q..(n + 1) * Q].copy_from_slice(&feq);
        }
        let wall_stencil = (0..nx * ny)
            .map(|n| super::forces::wall_stencil(&domain, n % nx, n / nx, &w))
            .collect();
        let mut solver = Self {
            config,
            heights: substrate.heights,
            nbr,
            force_nbr,
            scratch: vec![T::zero(); f.len()],
            f,
            rho: vec![T::zero(); nx * ny],
            psi: vec![T::zero(); nx * ny],
            force: vec![[T::zero(); 2]; nx * ny],
            vel: vec![[T::zero(); 2]; nx * ny],
            wall_stencil,
            domain,
            time: 0,
            macro_time: None,
            config_hash: [0; 32],
            initial_mass: T::zero(),
            diagnostics: Diagnostics::default(),
        };
        solver.initial_mass = solver.mass();
        Ok(solver)
    }

    pub fn set_config_hash(&mut self, hash: [u8; 32]) {
        self.config_hash = hash;
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Surface height per column.
    pub fn heights(&self) -> &[T] {
        &self.heights
    }

    pub fn initial_mass(&self) -> T {
        self.initial_mass
    }

    fn params(&self) -> ForceParams<T> {
        ForceParams {
            g: self.config.g,
            g_ads: self.config.g_ads,
            rho0: self.config.rho0,
            rho_wall: self.config.wall_density(),
        }
    }

    /// Total population mass over fluid nodes.
    pub fn mass(&self) -> T {
        // pairwise over rows keeps the round-off independent of domain size
        let nx = self.config.nx;
        self.f
            .chunks(nx * Q)
            .map(|row| row.iter().copied().sum::<T>())
            .sum()
    }

    /// Recomputes density, pseudopotential, force and velocity for the
    /// current populations.
    fn update_macro(&mut self) -> Result<(), LbmError> {
        if self.macro_time == Some(self.time) {
            return Ok(());
        }
        let nx = self.config.nx;
        let p = self.params();
        let psi_wall = crate::lattice::psi(p.rho_wall, p.rho0);
        let solid = self.domain.mask.as_slice();

        self.rho
            .par_chunks_mut(nx)
            .zip(self.psi.par_chunks_mut(nx))
            .zip(self.f.par_chunks(nx * Q))
            .enumerate()
            .for_each(|(y, ((rho_row, psi_row), f_row))| {
                for x in 0..nx {
                    if solid[y * nx + x] {
                        rho_row[x] = T::zero();
                        psi_row[x] = psi_wall;
                    } else {
                        let r: T = f_row[x * Q..(x + 1) * Q].iter().copied().sum();
                        rho_row[x] = r;
                        psi_row[x] = crate::lattice::psi(r, p.rho0);
                    }
                }
            });

        for (n, &r) in self.rho.iter().enumerate() {
            if !solid[n] && !(r > T::zero() && r.is_finite()) {
                return Err(LbmError::Instability {
                    step: self.time,
                    x: n % nx,
                    y: n / nx,
                    value: r.to_f64().unwrap_or(f64::NAN),
                });
            }
        }

        let w = weights::<T>();
        let cx: [T; Q] = std::array::from_fn(|i| T::from_i32(VELOCITIES[i][0]).unwrap());
        let cy: [T; Q] = std::array::from_fn(|i| T::from_i32(VELOCITIES[i][1]).unwrap());
        let half = lit::<T>(0.5);
        let psi = &self.psi;
        let rho = &self.rho;
        let nbr = &self.force_nbr;
        let stencil = &self.wall_stencil;
        let f = &self.f;
        self.force
            .par_chunks_mut(nx)
            .zip(self.vel.par_chunks_mut(nx))
            .enumerate()
            .for_each(|(y, (f_row, v_row))| {
                for x in 0..nx {
                    let n = y * nx + x;
                    if solid[n] {
                        f_row[x] = [T::zero(); 2];
                        v_row[x] = [T::zero(); 2];
                        continue;
                    }
                    let mut sx = T::zero();
                    let mut sy = T::zero();
                    for i in 1..Q {
                        let m = nbr[n * Q + i];
                        let pn = if m == OUTSIDE { psi_wall } else { psi[m as usize] };
                        sx = sx + w[i] * pn * cx[i];
                        sy = sy + w[i] * pn * cy[i];
                    }
                    let kff = -p.g * psi[n];
                    let kfs = -p.g_ads * psi[n];
                    let fx = kff * sx + kfs * stencil[n][0];
                    let fy = kff * sy + kfs * stencil[n][1];
                    f_row[x] = [fx, fy];
                    let pop = &f[n * Q..(n + 1) * Q];
                    let mut mx = T::zero();
                    let mut my = T::zero();
                    for i in 1..Q {
                        mx = mx + pop[i] * cx[i];
                        my = my + pop[i] * cy[i];
                    }
                    v_row[x] = [(mx + half * fx) / rho[n], (my + half * fy) / rho[n]];
                }
            });

        let max_sq = self
            .vel
            .iter()
            .map(|v| v[0] * v[0] + v[1] * v[1])
            .fold(T::zero(), T::max);
        let max_speed = max_sq.sqrt().to_f64().unwrap_or(f64::NAN);
        if max_speed > self.diagnostics.max_speed {
            self.diagnostics.max_speed = max_speed;
        }
        if max_sq > T::one() / lit(3.0) {
            self.diagnostics.supersonic_steps += 1;
        }
        self.macro_time = Some(self.time);
        Ok(())
    }

    /// Advances one time step: moments, BGK relaxation with the Guo source,
    /// streaming, link bounce-back at solid nodes and closed edges.
    pub fn step(&mut self) -> Result<(), LbmError> {
        self.update_macro()?;
        let nx = self.config.nx;
        let tau = self.config.tau;
        let inv_tau = T::one() / tau;
        let solid = self.domain.mask.as_slice();
        let rho = &self.rho;
        let vel = &self.vel;
        let force = &self.force;

        self.f.par_chunks_mut(nx * Q).enumerate().for_each(|(y, row)| {
            for x in 0..nx {
                let n = y * nx + x;
                if solid[n] {
                    continue;
                }
                let feq = equilibrium(rho[n], vel[n]);
                let src = guo_source(vel[n], force[n], tau);
                let pop = &mut row[x * Q..(x + 1) * Q];
                for i in 0..Q {
                    pop[i] = pop[i] - (pop[i] - feq[i]) * inv_tau + src[i];
                }
            }
        });

        let post = &self.f;
        let nbr = &self.nbr;
        let top = self.config.top;
        let ny = self.config.ny;
        self.scratch.par_chunks_mut(nx * Q).enumerate().for_each(|(y, row)| {
            for x in 0..nx {
                let n = y * nx + x;
                let out = &mut row[x * Q..(x + 1) * Q];
                if solid[n] {
                    out.fill(T::zero());
                    continue;
                }
                out[0] = post[n * Q];
                for i in 1..Q {
                    let opp = crate::lattice::OPPOSITE[i];
                    let s = nbr[n * Q + opp];
                    out[i] = if s == OUTSIDE {
                        if top == TopBoundary::ZeroGradient && y == ny - 1 && VELOCITIES[i][1] < 0 {
                            let below = nbr[(n - nx) * Q + opp];
                            if below == OUTSIDE || solid[below as usize] {
                                post[n * Q + opp]
                            } else {
                                post[below as usize * Q + i]
                            }
                        } else {
                            post[n * Q + opp]
                        }
                    } else if solid[s as usize] {
                        post[n * Q + opp]
                    } else {
                        post[s as usize * Q + i]
                    };
                }
            }
        });
        std::mem::swap(&mut self.f, &mut self.scratch);
        self.time += 1;
        Ok(())
    }

    /// Current macroscopic fields (velocity includes the half-force shift).
    pub fn macro_field(&mut self) -> Result<MacroField<T>, LbmError> {
        self.update_macro()?;
        Ok(MacroField {
            nx: self.config.nx,
            ny: self.config.ny,
            rho: self.rho.clone(),
            ux: self.vel.iter().map(|v| v[0]).collect(),
            uy: self.vel.iter().map(|v| v[1]).collect(),
        })
    }

    /// Total force (fluid-fluid plus adhesion) at every node.
    pub fn force_field(&mut self) -> Result<Vec<[T; 2]>, LbmError> {
        self.update_macro()?;
        Ok(self.force.clone())
    }

    pub fn distributions(&self) -> DistributionField<T> {
        let (nx, ny) = (self.config.nx, self.config.ny);
        let plane = nx * ny;
        let mut data = vec![T::zero(); Q * plane];
        for n in 0..plane {
            for i in 0..Q {
                data[i * plane + n] = self.f[n * Q + i];
            }
        }
        DistributionField { nx, ny, data }
    }

    pub fn snapshot(&mut self) -> Result<Snapshot<T>, LbmError> {
        let fields = self.macro_field()?;
        let distributions = self.config.store_distributions.then(|| self.distributions());
        Ok(Snapshot { time: self.time, fields, distributions, config_hash: self.config_hash })
    }

    /// Runs `config.steps` steps and hands a snapshot to `sink` at `t = 0`
    /// and every `snapshot_stride` steps (plus the final step).
    pub fn run_with<E>(&mut self, mut sink: impl FnMut(Snapshot<T>) -> Result<(), E>) -> Result<(), RunError<E>> {
        sink(self.snapshot()?).map_err(RunError::Sink)?;
        let stride = self.config.snapshot_stride;
        let end = self.time + self.config.steps;
        while self.time < end {
            self.step()?;
            if self.time % stride == 0 || self.time == end {
                sink(self.snapshot()?).map_err(RunError::Sink)?;
            }
        }
        Ok(())
    }
}

/// Failure of [`Solver::run_with`]: either the solver or the snapshot sink.
#[derive(Debug)]
pub enum RunError<E> {
    Solver(LbmError),
    Sink(E),
}

impl<E> From<LbmError> for RunError<E> {
    fn from(e: LbmError) -> Self {
        RunError::Solver(e)
    }
}

/// Runs a configuration to completion and collects every snapshot.
pub fn run<T: Real>(config: SimConfig<T>) -> Result<Vec<Snapshot<T>>, LbmError> {
    let mut solver = Solver::new(config)?;
    let mut out = Vec::new();
    solver
        .run_with(|s| {
            out.push(s);
            Ok::<_, std::convert::Infallible>(())
        })
        .map_err(|e| match e {
            RunError::Solver(e) => e,
            RunError::Sink(never) => match never {},
        })?;
    Ok(out)
}

/// Horizontal and vertical droplet centre for a configuration and substrate.
pub fn droplet_center<T: Real>(config: &SimConfig<T>, substrate: &Substrate<T>) -> [T; 2] {
    let xc = config.center_x.unwrap_or_else(|| from_usize::<T>(config.nx) / lit(2.0));
    let top = substrate.heights.iter().copied().fold(T::neg_infinity(), T::max);
    let yc = match config.placement {
        Placement::BottomTangent { gap } => top + gap + config.radius,
        Placement::CenterAbove { gap } => top + gap,
        Placement::Center { y } => y,
    };
    [xc, yc]
}

/// Initial density: liquid disc with a tanh rim in gas, zero on solids.
pub fn initial_density<T: Real>(config: &SimConfig<T>, substrate: &Substrate<T>) -> Result<Vec<T>, LbmError> {
    let (nx, ny) = (config.nx, config.ny);
    let [xc, yc] = droplet_center(config, substrate);
    let r0 = config.radius;
    let two = lit::<T>(2.0);
    if two * r0 >= from_usize(nx) {
        return Err(LbmError::Config("droplet wider than the periodic domain".into()));
    }
    if yc + r0 > from_usize::<T>(ny - 2) || yc - r0 < T::zero() {
        return Err(LbmError::Config("droplet does not fit vertically in the domain".into()));
    }
    let lx = from_usize::<T>(nx);
    let dist = |x: usize, y: usize| {
        let mut dx = (from_usize::<T>(x) - xc).abs();
        if dx > lx / two {
            dx = lx - dx;
        }
        let dy = from_usize::<T>(y) - yc;
        (dx * dx + dy * dy).sqrt()
    };
    let tangency = lit::<T>(0.5);
    let mask = &substrate.mask;
    for y in 0..ny {
        for x in 0..nx {
            if mask.is_solid(x, y) && dist(x, y) < r0 - tangency {
                return Err(LbmError::Config(format!(
                    "droplet overlaps the substrate at node ({x}, {y})"
                )));
            }
        }
    }
    let half = lit::<T>(0.5);
    Ok((0..nx * ny)
        .map(|n| {
            let (x, y) = (n % nx, n / nx);
            if mask.is_solid(x, y) {
                T::zero()
            } else {
                let s = half * (T::one() - (two * (dist(x, y) - r0) / config.interface_width).tanh());
                config.rho_g + (config.rho_l - config.rho_g) * s
            }
        })
        .collect())
}

/// Initial droplet state: populations at rest equilibrium and the matching
/// macroscopic fields.
pub fn init_droplet<T: Real>(config: &SimConfig<T>) -> Result<(DistributionField<T>, MacroField<T>), LbmError> {
    let mut solver = Solver::new(config.clone())?;
    let fields = solver.macro_field()?;
    let mut zeroed = fields.clone();
    zeroed.ux.iter_mut().for_each(|u| *u = T::zero());
    zeroed.uy.iter_mut().for_each(|u| *u = T::zero());
    Ok((solver.distributions(), zeroed))
}
