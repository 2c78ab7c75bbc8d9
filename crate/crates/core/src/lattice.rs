//! D2Q9 lattice constants, the second-order equilibrium, moment reconstruction
//! and the transport/thermodynamic closures shared by the solver and the
//! kinetic loss.
//!
//! ```text
//!   6   2   5
//!    \  |  /
//!   3 - 0 - 1
//!    /  |  \
//!   7   4   8
//! ```

use thiserror::Error;

use crate::scalar::{ratio, Real, Scalar};

/// Number of discrete velocities.
pub const Q: usize = 9;

/// Discrete velocities: rest, the four axis directions, the four diagonals.
pub const VELOCITIES: [[i32; 2]; Q] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 0],
    [0, -1],
    [1, 1],
    [-1, 1],
    [-1, -1],
    [1, -1],
];

/// Index of the direction with `c[OPPOSITE[i]] == -c[i]`.
pub const OPPOSITE: [usize; Q] = [0, 3, 4, 1, 2, 7, 8, 5, 6];

/// The four unordered pairs of opposite moving directions.
pub const OPPOSITE_PAIRS: [(usize, usize); 4] = [(1, 3), (2, 4), (5, 7), (6, 8)];

const WEIGHT_RATIOS: [(i64, i64); Q] = [
    (4, 9),
    (1, 9),
    (1, 9),
    (1, 9),
    (1, 9),
    (1, 36),
    (1, 36),
    (1, 36),
    (1, 36),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("degenerate node: non-positive density cannot carry a velocity")]
    DegenerateNode,
    #[error("relaxation time {0} is outside the stable domain tau > 0.5")]
    StabilityDomain(f64),
    #[error("negative density {0}")]
    NegativeDensity(f64),
}

/// The D2Q9 velocity set with its quadrature weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeModel<T> {
    pub velocities: [[i32; 2]; Q],
    pub weights: [T; Q],
    pub sound_speed_sq: T,
    pub opposite: [usize; Q],
}

impl<T: Scalar> LatticeModel<T> {
    pub fn d2q9() -> Self {
        Self {
            velocities: VELOCITIES,
            weights: weights(),
            sound_speed_sq: ratio(1, 3),
            opposite: OPPOSITE,
        }
    }

    #[inline]
    pub fn c(&self, i: usize) -> [T; 2] {
        let [cx, cy] = self.velocities[i];
        [int::<T>(cx), int::<T>(cy)]
    }
}

#[inline]
fn int<T: Scalar>(v: i32) -> T {
    T::from_i32(v).expect("small integer")
}

/// Quadrature weights in `T`.
pub fn weights<T: Scalar>() -> [T; Q] {
    WEIGHT_RATIOS.map(|(n, d)| ratio(n, d))
}

/// Second-order Hermite equilibrium `w_i rho [1 + cu/cs2 + (cu)^2/(2 cs4) - u^2/(2 cs2)]`.
///
/// Only field operations are used, so the moment identities hold exactly in
/// rational arithmetic.
pub fn equilibrium<T: Scalar>(rho: T, u: [T; 2]) -> [T; Q] {
    let w = weights::<T>();
    let three: T = int(3);
    let half: T = ratio(1, 2);
    let nine_halves: T = ratio(9, 2);
    let three_halves: T = three * half;
    let usq = u[0] * u[0] + u[1] * u[1];
    let mut out = [T::zero(); Q];
    for i in 0..Q {
        let [cx, cy] = VELOCITIES[i];
        let cu = int::<T>(cx) * u[0] + int::<T>(cy) * u[1];
        out[i] = w[i] * rho * (T::one() + three * cu + nine_halves * cu * cu - three_halves * usq);
    }
    out
}

/// [`equilibrium`] with the domain checks of the floating-point API.
pub fn checked_equilibrium<T: Real>(rho: T, u: [T; 2]) -> Result<[T; Q], LatticeError> {
    if !rho.is_finite() || !u[0].is_finite() || !u[1].is_finite() {
        return Err(LatticeError::NonFinite("equilibrium"));
    }
    if rho < T::zero() {
        return Err(LatticeError::NegativeDensity(rho.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(equilibrium(rho, u))
}

/// Density and (half-force shifted) velocity of a population vector, `dt = 1`.
pub fn moments<T: Scalar>(f: &[T; Q], force: [T; 2]) -> Result<(T, [T; 2]), LatticeError> {
    let mut rho = T::zero();
    let mut mx = T::zero();
    let mut my = T::zero();
    for i in 0..Q {
        let [cx, cy] = VELOCITIES[i];
        rho = rho + f[i];
        mx = mx + int::<T>(cx) * f[i];
        my = my + int::<T>(cy) * f[i];
    }
    let half: T = ratio(1, 2);
    mx = mx + half * force[0];
    my = my + half * force[1];
    if !(rho > T::zero()) {
        if mx == T::zero() && my == T::zero() {
            return Ok((rho, [T::zero(), T::zero()]));
        }
        return Err(LatticeError::DegenerateNode);
    }
    Ok((rho, [mx / rho, my / rho]))
}

/// Kinematic viscosity of the BGK operator, `(tau - 1/2) / 3`.
pub fn kinematic_viscosity<T: Real>(tau: T) -> Result<T, LatticeError> {
    let half = ratio::<T>(1, 2);
    if !tau.is_finite() {
        return Err(LatticeError::NonFinite("kinematic_viscosity"));
    }
    if tau <= half {
        return Err(LatticeError::StabilityDomain(tau.to_f64().unwrap_or(f64::NAN)));
    }
    Ok((tau - half) / ratio(3, 1))
}

/// Relaxation time that produces viscosity `nu`.
pub fn relaxation_time<T: Real>(nu: T) -> T {
    ratio::<T>(3, 1) * nu + ratio(1, 2)
}

/// Shan-Chen pseudopotential `rho0 (1 - exp(-rho / rho0))`.
#[inline]
pub fn psi<T: Real>(rho: T, rho0: T) -> T {
    -rho0 * (-rho / rho0).exp_m1()
}

/// Non-ideal equation of state `cs2 rho + (G/2) cs2 psi(rho)^2`.
pub fn pressure<T: Real>(rho: T, g: T, rho0: T) -> T {
    let cs2 = ratio::<T>(1, 3);
    let p = psi(rho, rho0);
    cs2 * rho + g * ratio(1, 2) * cs2 * p * p
}

/// Reverses every population into its opposite direction.
pub fn bounce_back<T: Copy>(f: &[T; Q]) -> [T; Q] {
    std::array::from_fn(|i| f[OPPOSITE[i]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q64 = Ratio<i64>;

    #[test]
    fn weight_and_velocity_identities_exact() {
        let w = weights::<Q64>();
        let sum: Q64 = w.iter().copied().sum();
        assert_eq!(sum, Q64::from_integer(1));
        for a in 0..2 {
            let first: Q64 = (0..Q).map(|i| w[i] * Q64::from_integer(VELOCITIES[i][a] as i64)).sum();
            assert_eq!(first, Q64::from_integer(0));
            for b in 0..2 {
                let second: Q64 = (0..Q)
                    .map(|i| {
                        w[i] * Q64::from_integer((VELOCITIES[i][a] * VELOCITIES[i][b]) as i64)
                    })
                    .sum();
                let expect = if a == b { Q64::new(1, 3) } else { Q64::from_integer(0) };
                assert_eq!(second, expect);
            }
        }
    }

    #[test]
    fn equilibrium_moments_exact_in_rationals() {
        let rho = Q64::new(13, 2);
        let u = [Q64::new(1, 10), Q64::new(-3, 50)];
        let feq = equilibrium(rho, u);
        let (r, v) = moments(&feq, [Q64::from_integer(0); 2]).unwrap();
        assert_eq!(r, rho);
        assert_eq!(v, u);
    }

    #[test]
    fn opposite_is_involution() {
        for i in 0..Q {
            assert_eq!(OPPOSITE[OPPOSITE[i]], i);
            assert_eq!(VELOCITIES[OPPOSITE[i]][0], -VELOCITIES[i][0]);
            assert_eq!(VELOCITIES[OPPOSITE[i]][1], -VELOCITIES[i][1]);
        }
        let mut seen = [false; Q];
        OPPOSITE.iter().for_each(|&j| seen[j] = true);
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn equilibrium_examples() {
        let f = equilibrium(1.0_f64, [0.0, 0.0]);
        let w = weights::<f64>();
        for i in 0..Q {
            assert_relative_eq!(f[i], w[i], max_relative = 1e-15);
        }
        let f = equilibrium(6.5_f64, [0.0, 0.0]);
        assert_relative_eq!(f[0], 6.5 * 4.0 / 9.0, max_relative = 1e-15);
        let f = equilibrium(1.0_f64, [0.1, 0.0]);
        assert_relative_eq!(f[1], (1.0 + 0.3 + 0.045 - 0.015) / 9.0, max_relative = 1e-14);
        assert_relative_eq!(f[1], 0.147_777_777_777_777_8, max_relative = 1e-14);
        assert!(checked_equilibrium(f64::NAN, [0.0, 0.0]).is_err());
        assert!(checked_equilibrium(1.0, [f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn moments_examples() {
        let w = weights::<f64>();
        let (r, u) = moments(&w, [0.0, 0.0]).unwrap();
        assert_relative_eq!(r, 1.0, max_relative = 1e-15);
        assert!(u[0].abs() < 1e-16 && u[1].abs() < 1e-16);
        let (r, u) = moments(&equilibrium(1.0, [0.1, 0.0]), [0.0, 0.0]).unwrap();
        assert_relative_eq!(r, 1.0, max_relative = 1e-14);
        assert_relative_eq!(u[0], 0.1, max_relative = 1e-13);
        let (_, u) = moments(&w, [0.02, 0.0]).unwrap();
        assert_relative_eq!(u[0], 0.01, max_relative = 1e-13);
        let zero = [0.0; Q];
        assert_eq!(moments(&zero, [0.0, 0.0]).unwrap().0, 0.0);
        assert!(matches!(moments(&zero, [0.1, 0.0]), Err(LatticeError::DegenerateNode)));
    }

    #[test]
    fn viscosity_examples() {
        assert_relative_eq!(kinematic_viscosity(1.0).unwrap(), 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(kinematic_viscosity(2.0).unwrap(), 0.5, max_relative = 1e-15);
        assert!(matches!(kinematic_viscosity(0.5), Err(LatticeError::StabilityDomain(_))));
        assert!(kinematic_viscosity(0.3).is_err());
        assert_relative_eq!(relaxation_time(1.0 / 6.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn pressure_examples() {
        assert_relative_eq!(pressure(3.0, 0.0, 1.0), 1.0, max_relative = 1e-15);
        assert_eq!(pressure(0.0, -5.0, 1.0), 0.0);
        let p1 = 1.0 - (-1.0f64).exp();
        let expect = 1.0 / 3.0 - 2.5 / 3.0 * p1 * p1;
        assert_relative_eq!(pressure(1.0, -5.0, 1.0), expect, max_relative = 1e-14);
        assert!((pressure(1.0_f64, -5.0, 1.0) - 0.000_353).abs() < 1e-6);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.0, 1.0), 0.0);
        assert_relative_eq!(psi(1.0, 1.0), 0.632_120_558_828_557_7, max_relative = 1e-15);
        assert!((psi(50.0_f64, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bounce_back_examples() {
        let mut f = [0.0; Q];
        f[1] = 1.0;
        let b = bounce_back(&f);
        assert_eq!(b[3], 1.0);
        assert_eq!(b.iter().sum::<f64>(), 1.0);
        let sym = [0.4, 0.1, 0.2, 0.1, 0.2, 0.03, 0.04, 0.03, 0.04];
        assert_eq!(bounce_back(&sym), sym);
    }

    proptest! {
        #[test]
        fn equilibrium_moments_round_trip(rho in 0.05f64..10.0, ux in -0.2f64..0.2, uy in -0.2f64..0.2) {
            let feq = equilibrium(rho, [ux, uy]);
            let (r, u) = moments(&feq, [0.0, 0.0]).unwrap();
            prop_assert!((r - rho).abs() <= 1e-12 * rho);
            prop_assert!((u[0] - ux).abs() <= 1e-12 * (ux.abs().max(1e-3)));
            prop_assert!((u[1] - uy).abs() <= 1e-12 * (uy.abs().max(1e-3)));
        }

        #[test]
        fn bounce_back_is_involution(f in proptest::array::uniform9(-5.0f64..5.0)) {
            prop_assert_eq!(bounce_back(&bounce_back(&f)), f);
        }
    }
}
