//! Shan-Chen interaction forces and the Guo source term.

use crate::lattice::{weights, Q, VELOCITIES};
use crate::scalar::{lit, Real};
use crate::surface::SolidMask;

use super::config::TopBoundary;

/// Lattice topology: node flags plus the edge treatment needed to locate
/// neighbours.
#[derive(Debug, Clone)]
pub struct Domain {
    pub mask: SolidMask,
    pub top: TopBoundary,
}

impl Domain {
    pub fn new(mask: SolidMask, top: TopBoundary) -> Self {
        Self { mask, top }
    }

    pub fn periodic(nx: usize, ny: usize) -> Self {
        Self { mask: SolidMask::empty(nx, ny), top: TopBoundary::Periodic }
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.mask.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.mask.ny
    }

    /// Node reached from `(x, y)` by moving `(dx, dy)`; `None` outside a
    /// non-periodic vertical edge. Horizontal wrap is always periodic.
    #[inline]
    pub fn offset(&self, x: usize, y: usize, dx: i32, dy: i32) -> Option<usize> {
        let nx = self.nx() as i64;
        let ny = self.ny() as i64;
        let xn = (x as i64 + dx as i64).rem_euclid(nx);
        let mut yn = y as i64 + dy as i64;
        if yn < 0 || yn >= ny {
            if self.top == TopBoundary::Periodic {
                yn = yn.rem_euclid(ny);
            } else {
                return None;
            }
        }
        Some((yn * nx + xn) as usize)
    }

    /// Neighbour seen by the interaction forces. Across a zero-gradient top
    /// the pseudopotential is extrapolated from the top row.
    #[inline]
    pub fn interaction_offset(&self, x: usize, y: usize, dx: i32, dy: i32) -> Option<usize> {
        match self.offset(x, y, dx, dy) {
            None if self.top == TopBoundary::ZeroGradient && y as i64 + dy as i64 >= self.ny() as i64 => {
                self.offset(x, self.ny() - 1, dx, 0)
            }
            other => other,
        }
    }

    /// `table[n * 9 + i]` = index of `n + c_i`, or `u32::MAX` outside the domain.
    pub fn neighbor_table(&self) -> Vec<u32> {
        self.table(Self::offset)
    }

    /// Like [`Domain::neighbor_table`] with [`Domain::interaction_offset`].
    pub fn interaction_table(&self) -> Vec<u32> {
        self.table(Self::interaction_offset)
    }

    fn table(&self, lookup: fn(&Self, usize, usize, i32, i32) -> Option<usize>) -> Vec<u32> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut t = vec![u32::MAX; nx * ny * Q];
        for y in 0..ny {
            for x in 0..nx {
                let n = y * nx + x;
                for (i, c) in VELOCITIES.iter().enumerate() {
                    if let Some(m) = lookup(self, x, y, c[0], c[1]) {
                        t[n * Q + i] = m as u32;
                    }
                }
            }
        }
        t
    }
}

/// Parameters of the pseudopotential interactions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceParams<T> {
    pub g: T,
    pub g_ads: T,
    pub rho0: T,
    /// Virtual density assigned to solid and out-of-domain neighbours.
    pub rho_wall: T,
}

/// `-G psi(x) sum_i w_i psi(x + c_i) c_i` at every fluid node (zero on solids).
///
/// Solid neighbours and neighbours across a closed vertical edge contribute
/// `psi(rho_wall)`; across a zero-gradient top the top row is mirrored.
pub fn fluid_fluid_force<T: Real>(rho: &[T], domain: &Domain, p: &ForceParams<T>) -> Vec<[T; 2]> {
    let psi_grid = psi_field(rho, domain, p);
    let psi_wall = crate::lattice::psi(p.rho_wall, p.rho0);
    let w = weights::<T>();
    let (nx, ny) = (domain.nx(), domain.ny());
    let mut out = vec![[T::zero(); 2]; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let n = y * nx + x;
            if domain.mask.as_slice()[n] {
                continue;
            }
            let mut s = [T::zero(); 2];
            for i in 1..Q {
                let c = VELOCITIES[i];
                let pn = domain.interaction_offset(x, y, c[0], c[1]).map_or(psi_wall, |m| psi_grid[m]);
                s[0] = s[0] + w[i] * pn * T::from_i32(c[0]).unwrap();
                s[1] = s[1] + w[i] * pn * T::from_i32(c[1]).unwrap();
            }
            let k = -p.g * psi_grid[n];
            out[n] = [k * s[0], k * s[1]];
        }
    }
    out
}

/// `-G_ads psi(x) sum_i w_i s(x + c_i) c_i` at every fluid node.
///
/// Only actual solid nodes count as `s = 1`; the region beyond a closed
/// domain edge is adhesion-neutral.
pub fn fluid_solid_force<T: Real>(rho: &[T], domain: &Domain, p: &ForceParams<T>) -> Vec<[T; 2]> {
    let w = weights::<T>();
    let (nx, ny) = (domain.nx(), domain.ny());
    let solid = domain.mask.as_slice();
    let mut out = vec![[T::zero(); 2]; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let n = y * nx + x;
            if solid[n] {
                continue;
            }
            let s = wall_stencil(domain, x, y, &w);
            let k = -p.g_ads * crate::lattice::psi(rho[n], p.rho0);
            out[n] = [k * s[0], k * s[1]];
        }
    }
    out
}

/// `sum_i w_i s(x + c_i) c_i` for one node.
pub fn wall_stencil<T: Real>(domain: &Domain, x: usize, y: usize, w: &[T; Q]) -> [T; 2] {
    let solid = domain.mask.as_slice();
    let mut s = [T::zero(); 2];
    for i in 1..Q {
        let c = VELOCITIES[i];
        if let Some(m) = domain.offset(x, y, c[0], c[1]) {
            if solid[m] {
                s[0] = s[0] + w[i] * T::from_i32(c[0]).unwrap();
                s[1] = s[1] + w[i] * T::from_i32(c[1]).unwrap();
            }
        }
    }
    s
}

/// Pseudopotential at every node, `psi(rho_wall)` on solids.
pub fn psi_field<T: Real>(rho: &[T], domain: &Domain, p: &ForceParams<T>) -> Vec<T> {
    let psi_wall = crate::lattice::psi(p.rho_wall, p.rho0);
    rho.iter()
        .zip(domain.mask.as_slice())
        .map(|(&r, &s)| if s { psi_wall } else { crate::lattice::psi(r, p.rho0) })
        .collect()
}

/// Guo forcing term
/// `w_i (1 - 1/(2 tau)) [ (c_i - u).F / cs2 + (c_i.u)(c_i.F) / cs4 ]`.
#[inline]
pub fn guo_source<T: Real>(u: [T; 2], force: [T; 2], tau: T) -> [T; Q] {
    let w = weights::<T>();
    let three = lit::<T>(3.0);
    let nine = lit::<T>(9.0);
    let pref = T::one() - T::one() / (lit::<T>(2.0) * tau);
    let uf = u[0] * force[0] + u[1] * force[1];
    std::array::from_fn(|i| {
        let cx = T::from_i32(VELOCITIES[i][0]).unwrap();
        let cy = T::from_i32(VELOCITIES[i][1]).unwrap();
        let cu = cx * u[0] + cy * u[1];
        let cf = cx * force[0] + cy * force[1];
        w[i] * pref * (three * (cf - uf) + nine * cu * cf)
    })
}
