//! Physical context of the residual: relaxation time, interaction strengths
//! and the lattice geometry used to place neighbour queries.

use kwet_core::lattice::{self, equilibrium, weights, Q, VELOCITIES};
use kwet_core::lbm::{guo_source, wall_stencil, Domain, ForceParams, SimConfig};
use kwet_core::surface::SolidMask;

use super::{cast, cast3, LossError};
use crate::scalar::NetScalar;

/// Densities at or below this make the equilibrium undefined; such points
/// are excluded from the physics loss.
pub const MIN_DENSITY: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Medium<T> {
    pub tau: T,
    pub g: T,
    /// Full adhesion strength (the curriculum scales it during training).
    pub g_ads: T,
    pub rho0: T,
    pub rho_wall: T,
    pub domain: Domain,
}

/// Where the force stencil of one point looks: the eight moving directions
/// in lattice order, each either a network query point or the wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborPlan<T> {
    pub queries: [Option<[T; 3]>; Q - 1],
    /// `sum_i w_i s(x + c_i) c_i` of the nearest node.
    pub wall: [T; 2],
}

impl<T: NetScalar> NeighborPlan<T> {
    pub fn convert<U: NetScalar>(&self) -> NeighborPlan<U> {
        NeighborPlan { queries: self.queries.map(|q| q.map(cast3)), wall: self.wall.map(cast) }
    }
}

impl<T: NetScalar> Medium<T> {
    pub fn new(config: &SimConfig<T>, mask: SolidMask) -> Self {
        Self {
            tau: config.tau,
            g: config.g,
            g_ads: config.g_ads,
            rho0: config.rho0,
            rho_wall: config.wall_density(),
            domain: Domain::new(mask, config.top),
        }
    }

    pub fn nx(&self) -> usize {
        self.domain.nx()
    }

    pub fn ny(&self) -> usize {
        self.domain.ny()
    }

    pub fn force_params(&self, g_ads: T) -> ForceParams<T> {
        ForceParams { g: self.g, g_ads, rho0: self.rho0, rho_wall: self.rho_wall }
    }

    /// Horizontal coordinate wrapped into `[0, nx)`.
    pub fn wrap_x(&self, x: T) -> T {
        let lx = T::from_usize(self.nx()).unwrap();
        let w = x - (x / lx).floor() * lx;
        if w >= lx {
            w - lx
        } else {
            w
        }
    }

    /// Nearest lattice node of a point, `None` outside the rows.
    pub fn node_of(&self, x: T, y: T) -> Option<(usize, usize)> {
        let nx = self.nx();
        let xi = self.wrap_x(x).round().to_usize()? % nx;
        let yr = y.round();
        if yr < T::zero() {
            return None;
        }
        let yi = yr.to_usize()?;
        (yi < self.ny()).then_some((xi, yi))
    }

    pub fn is_fluid(&self, x: T, y: T) -> bool {
        self.node_of(x, y).is_some_and(|(xi, yi)| !self.domain.mask.is_solid(xi, yi))
    }

    /// Neighbour queries of the pseudopotential stencil around a fluid point.
    pub fn neighbor_plan(&self, p: [T; 3]) -> Result<NeighborPlan<T>, LossError> {
        let (xi, yi) = self
            .node_of(p[0], p[1])
            .filter(|&(x, y)| !self.domain.mask.is_solid(x, y))
            .ok_or_else(|| LossError::OutsideFluid(p.map(|v| v.to_f64().unwrap())))?;
        let nx = self.nx();
        let solid = self.domain.mask.as_slice();
        let queries = std::array::from_fn(|k| {
            let c = VELOCITIES[k + 1];
            let m = self.domain.interaction_offset(xi, yi, c[0], c[1])?;
            if solid[m] {
                return None;
            }
            let dy = (m / nx) as i64 - yi as i64;
            let qx = self.wrap_x(p[0] + T::from_i32(c[0]).unwrap());
            Some([qx, p[1] + T::from_i64(dy).unwrap(), p[2]])
        });
        Ok(NeighborPlan { queries, wall: wall_stencil(&self.domain, xi, yi, &weights()) })
    }

    pub fn convert<U: NetScalar>(&self) -> Medium<U> {
        Medium {
            tau: cast(self.tau),
            g: cast(self.g),
            g_ads: cast(self.g_ads),
            rho0: cast(self.rho0),
            rho_wall: cast(self.rho_wall),
            domain: self.domain.clone(),
        }
    }

    pub fn psi(&self, rho: T) -> T {
        lattice::psi(rho, self.rho0)
    }

    pub fn psi_wall(&self) -> T {
        self.psi(self.rho_wall)
    }
}

/// Total Shan-Chen force (cohesion plus adhesion) at `p` from a density
/// that can be queried anywhere, e.g. a network or an interpolated grid.
pub fn pseudopotential_force_at<T: NetScalar>(
    density: impl Fn([T; 3]) -> T,
    p: [T; 3],
    medium: &Medium<T>,
    g_ads: T,
) -> Result<[T; 2], LossError> {
    let plan = medium.neighbor_plan(p)?;
    let w = weights::<T>();
    let psi_wall = medium.psi_wall();
    let mut s = [T::zero(); 2];
    for (k, q) in plan.queries.iter().enumerate() {
        let c = VELOCITIES[k + 1];
        let psi_n = q.map_or(psi_wall, |q| medium.psi(density(q)));
        s[0] += w[k + 1] * psi_n * T::from_i32(c[0]).unwrap();
        s[1] += w[k + 1] * psi_n * T::from_i32(c[1]).unwrap();
    }
    let psi_c = medium.psi(density(p));
    Ok([
        -psi_c * (medium.g * s[0] + g_ads * plan.wall[0]),
        -psi_c * (medium.g * s[1] + g_ads * plan.wall[1]),
    ])
}

/// BGK residual `df/dt + c.grad f + (f - feq)/tau - S` from populations,
/// their derivatives `[d/dx, d/dy, d/dt]` and the force. The equilibrium
/// uses the half-force-shifted velocity, as the simulator does.
pub fn residual_from_parts<T: NetScalar>(
    f: &[T; Q],
    df: &[[T; Q]; 3],
    force: [T; 2],
    tau: T,
) -> Result<[T; Q], LossError> {
    let rho: T = f.iter().copied().sum();
    if !(rho > T::from_f64(MIN_DENSITY).unwrap()) {
        return Err(LossError::ResidualUndefined);
    }
    let (_, u) = lattice::moments(f, force).map_err(|_| LossError::ResidualUndefined)?;
    let feq = equilibrium(rho, u);
    let s = guo_source(u, force, tau);
    Ok(std::array::from_fn(|i| {
        let c = VELOCITIES[i];
        df[2][i] + T::from_i32(c[0]).unwrap() * df[0][i] + T::from_i32(c[1]).unwrap() * df[1][i]
            + (f[i] - feq[i]) / tau
            - s[i]
    }))
}
