//! Taped loss terms over blocks of points.
//!
//! Each function records one block on a private tape and returns the block's
//! raw sum (of squared residuals or misfits) and, on request, its parameter
//! gradient in [`Network::params`] order. Normalisation and weighting happen
//! in [`super::problem`].

use kwet_core::lattice::{weights, OPPOSITE_PAIRS, Q, VELOCITIES};
use ndarray::Array2;

use super::medium::{Medium, NeighborPlan, MIN_DENSITY};
use super::sampling::Observation;
use super::LossError;
use crate::autodiff::{DropoutMasks, NetVars, Network, Tape, Var};
use crate::scalar::NetScalar;

/// Sum of one block and its optional gradient.
#[derive(Debug, Clone)]
pub struct BlockSum<T> {
    pub value: T,
    /// Points that contributed (residual blocks drop undefined points).
    pub count: usize,
    pub gradient: Option<Vec<T>>,
}

pub(crate) fn rows<T: NetScalar>(pts: &[[T; 3]]) -> Array2<T> {
    Array2::from_shape_fn((pts.len(), 3), |(r, c)| pts[r][c])
}

fn c<T: NetScalar>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

fn int<T: NetScalar>(v: i32) -> T {
    T::from_i32(v).unwrap()
}

/// `9 x 3` matrix mapping populations to `(rho, j_x, j_y)`.
fn moment_matrix<T: NetScalar>() -> Array2<T> {
    Array2::from_shape_fn((Q, 3), |(i, k)| match k {
        0 => T::one(),
        k => int(VELOCITIES[i][k - 1]),
    })
}

/// `2 x 9` matrix of the lattice velocities.
fn velocity_matrix<T: NetScalar>() -> Array2<T> {
    Array2::from_shape_fn((2, Q), |(d, i)| int(VELOCITIES[i][d]))
}

fn row<T: NetScalar>(f: impl Fn(usize) -> T) -> Array2<T> {
    Array2::from_shape_fn((1, Q), |(_, i)| f(i))
}

/// `psi(rho) = rho0 (1 - exp(-rho / rho0))` on the tape.
fn psi_taped<T: NetScalar>(tape: &mut Tape<T>, rho: Var, rho0: T) -> Var {
    let a = tape.scale(rho, -T::one() / rho0);
    let e = tape.exp(a);
    let b = tape.scale(e, -rho0);
    tape.add_scalar(b, rho0)
}

/// Density and momentum columns of the populations `f` (`n x 9`).
fn moments_taped<T: NetScalar>(tape: &mut Tape<T>, f: Var) -> (Var, Var) {
    let m = tape.constant(moment_matrix());
    let mom = tape.matmul(f, m);
    (tape.slice_cols(mom, 0, 1), tape.slice_cols(mom, 1, 2))
}

/// Records the BGK residual (`n x 9`) at the points; `valid[k]` is false
/// where the reconstructed density is not positive, and those rows are
/// zeroed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn residual_taped<T: NetScalar>(
    tape: &mut Tape<T>,
    net: &Network<T>,
    vars: &NetVars,
    medium: &Medium<T>,
    g_ads: T,
    pts: &[[T; 3]],
    plans: &[NeighborPlan<T>],
    dropout: Option<&DropoutMasks<T>>,
) -> (Var, Vec<bool>) {
    let n = pts.len();
    let w = weights::<T>();
    let out = net.forward_taped(tape, vars, &rows(pts), true, dropout);
    let [fx, fy, ft] = out.df.expect("tangents requested");
    let f = out.f;
    let (rho_raw, j) = moments_taped(tape, f);
    let min = c::<T>(MIN_DENSITY);
    let valid: Vec<bool> = tape.value(rho_raw).iter().map(|&v| v > min).collect();
    let all_valid = valid.iter().all(|v| *v);
    // undefined rows get a unit density so the algebra stays finite
    let rho = if all_valid {
        rho_raw
    } else {
        let keep = tape.constant(Array2::from_shape_fn((n, 1), |(k, _)| if valid[k] { T::one() } else { T::zero() }));
        let fill = tape.constant(Array2::from_shape_fn((n, 1), |(k, _)| if valid[k] { T::zero() } else { T::one() }));
        let kept = tape.mul(rho_raw, keep);
        tape.add(kept, fill)
    };

    // neighbour densities, direction-major blocks of n rows
    let mut nb = Array2::zeros((8 * n, 3));
    for k in 0..8 {
        for (r, (p, plan)) in pts.iter().zip(plans).enumerate() {
            let q = plan.queries[k].unwrap_or(*p);
            for d in 0..3 {
                nb[[k * n + r, d]] = q[d];
            }
        }
    }
    let fn_out = net.forward_taped(tape, vars, &nb, false, dropout);
    let ones = tape.constant(Array2::ones((Q, 1)));
    let rho_nb = tape.matmul(fn_out.f, ones);
    let psi_c = psi_taped(tape, rho, medium.rho0);
    let psi_nb = psi_taped(tape, rho_nb, medium.rho0);

    // sum_i w_i psi(x + c_i) c_i with wall directions folded into a constant
    let psi_wall = medium.psi_wall();
    let mut fixed = Array2::zeros((n, 2));
    for (r, plan) in plans.iter().enumerate() {
        for k in 0..8 {
            if plan.queries[k].is_none() {
                let cv = VELOCITIES[k + 1];
                fixed[[r, 0]] += w[k + 1] * psi_wall * int::<T>(cv[0]);
                fixed[[r, 1]] += w[k + 1] * psi_wall * int::<T>(cv[1]);
            }
        }
    }
    let mut stencil = tape.constant(fixed);
    for k in 0..8 {
        let cv = VELOCITIES[k + 1];
        let coef = Array2::from_shape_fn((n, 2), |(r, d)| {
            if plans[r].queries[k].is_some() {
                w[k + 1] * int::<T>(cv[d])
            } else {
                T::zero()
            }
        });
        if coef.iter().all(|v| *v == T::zero()) {
            continue;
        }
        let block = tape.slice_rows(psi_nb, k * n, n);
        let coef = tape.constant(coef);
        let term = tape.mul(block, coef);
        stencil = tape.add(stencil, term);
    }
    let cohesion = tape.scale(stencil, -medium.g);
    let adhesion = tape.constant(Array2::from_shape_fn((n, 2), |(r, d)| -g_ads * plans[r].wall[d]));
    let inner = tape.add(cohesion, adhesion);
    let force = tape.mul(psi_c, inner);

    // half-force shifted velocity, equilibrium and Guo source
    let half_f = tape.scale(force, c(0.5));
    let jt = tape.add(j, half_f);
    let inv = tape.recip(rho);
    let u = tape.mul(jt, inv);
    let cm = tape.constant(velocity_matrix());
    let cu = tape.matmul(u, cm);
    let ones2 = tape.constant(Array2::ones((2, 1)));
    let u2 = tape.square(u);
    let usq = tape.matmul(u2, ones2);
    let cu2 = tape.square(cu);
    let a = tape.scale(cu, c(3.0));
    let b = tape.scale(cu2, c(4.5));
    let ab = tape.add(a, b);
    let ab1 = tape.add_scalar(ab, T::one());
    let us = tape.scale(usq, c(1.5));
    let bracket = tape.sub(ab1, us);
    let wrow = tape.constant(row(|i| w[i]));
    let rw = tape.mul(rho, wrow);
    let feq = tape.mul(rw, bracket);

    let cf = tape.matmul(force, cm);
    let uf_e = tape.mul(u, force);
    let uf = tape.matmul(uf_e, ones2);
    let t1 = tape.scale(cf, c(3.0));
    let t2 = tape.scale(uf, c(3.0));
    let cucf = tape.mul(cu, cf);
    let t3 = tape.scale(cucf, c(9.0));
    let t12 = tape.sub(t1, t2);
    let s_in = tape.add(t12, t3);
    let pref = T::one() - T::one() / (c::<T>(2.0) * medium.tau);
    let wk = tape.constant(row(|i| w[i] * pref));
    let source = tape.mul(s_in, wk);

    let cx = tape.constant(row(|i| int(VELOCITIES[i][0])));
    let cy = tape.constant(row(|i| int(VELOCITIES[i][1])));
    let ax = tape.mul(fx, cx);
    let ay = tape.mul(fy, cy);
    let adv_xy = tape.add(ax, ay);
    let adv = tape.add(ft, adv_xy);
    let dev = tape.sub(f, feq);
    let coll = tape.scale(dev, T::one() / medium.tau);
    let lhs = tape.add(adv, coll);
    let mut r = tape.sub(lhs, source);

    if !all_valid {
        let mask = Array2::from_shape_fn((n, 1), |(k, _)| if valid[k] { T::one() } else { T::zero() });
        let mask = tape.constant(mask);
        r = tape.mul(r, mask);
    }
    (r, valid)
}

fn finish<T: NetScalar>(
    mut tape: Tape<T>,
    net: &Network<T>,
    root: Var,
    count: usize,
    gradient: bool,
) -> Result<BlockSum<T>, LossError> {
    let value = tape.scalar(root);
    let gradient = if gradient { Some(net.flatten_gradients(&tape.backward(root)?)) } else { None };
    Ok(BlockSum { value, count, gradient })
}

fn sum_squares<T: NetScalar>(tape: &mut Tape<T>, v: Var) -> Var {
    let sq = tape.square(v);
    tape.sum_all(sq)
}

/// Sum over points of the summed squared residual.
#[allow(clippy::too_many_arguments)]
pub fn physics_block<T: NetScalar>(
    net: &Network<T>,
    medium: &Medium<T>,
    g_ads: T,
    pts: &[[T; 3]],
    plans: &[NeighborPlan<T>],
    dropout: Option<&DropoutMasks<T>>,
    gradient: bool,
) -> Result<BlockSum<T>, LossError> {
    let mut tape = Tape::new();
    let vars = net.record(&mut tape);
    let (r, valid) = residual_taped(&mut tape, net, &vars, medium, g_ads, pts, plans, dropout);
    let root = sum_squares(&mut tape, r);
    finish(tape, net, root, valid.iter().filter(|v| **v).count(), gradient)
}

/// Sum over observations of the squared density and velocity misfits; the
/// network velocity is the momentum velocity `j / rho`.
pub fn data_block<T: NetScalar>(
    net: &Network<T>,
    obs: &[Observation<T>],
    dropout: Option<&DropoutMasks<T>>,
    gradient: bool,
) -> Result<BlockSum<T>, LossError> {
    let mut tape = Tape::new();
    let vars = net.record(&mut tape);
    let pts: Vec<[T; 3]> = obs.iter().map(|o| o.point).collect();
    let out = net.forward_taped(&mut tape, &vars, &rows(&pts), false, dropout);
    let (rho, j) = moments_taped(&mut tape, out.f);
    let inv = tape.recip(rho);
    let u = tape.mul(j, inv);
    let rho_t = tape.constant(Array2::from_shape_fn((obs.len(), 1), |(k, _)| obs[k].rho));
    let u_t = tape.constant(Array2::from_shape_fn((obs.len(), 2), |(k, d)| obs[k].u[d]));
    let dr = tape.sub(rho, rho_t);
    let du = tape.sub(u, u_t);
    let sr = sum_squares(&mut tape, dr);
    let su = sum_squares(&mut tape, du);
    let root = tape.add(sr, su);
    finish(tape, net, root, obs.len(), gradient)
}

/// `sum |f(a_k) - f(b_k)|^2` over paired points.
pub fn pair_block<T: NetScalar>(
    net: &Network<T>,
    a: &[[T; 3]],
    b: &[[T; 3]],
    dropout: Option<&DropoutMasks<T>>,
    gradient: bool,
) -> Result<BlockSum<T>, LossError> {
    assert_eq!(a.len(), b.len(), "unpaired boundary points");
    let mut tape = Tape::new();
    let vars = net.record(&mut tape);
    let fa = net.forward_taped(&mut tape, &vars, &rows(a), false, dropout).f;
    let fb = net.forward_taped(&mut tape, &vars, &rows(b), false, dropout).f;
    let d = tape.sub(fa, fb);
    let root = sum_squares(&mut tape, d);
    finish(tape, net, root, a.len(), gradient)
}

/// `sum_wall sum_pairs (f_i - f_opp(i))^2`, each opposite pair once.
pub fn bounce_block<T: NetScalar>(
    net: &Network<T>,
    pts: &[[T; 3]],
    dropout: Option<&DropoutMasks<T>>,
    gradient: bool,
) -> Result<BlockSum<T>, LossError> {
    let mut tape = Tape::new();
    let vars = net.record(&mut tape);
    let f = net.forward_taped(&mut tape, &vars, &rows(pts), false, dropout).f;
    let pairs = Array2::from_shape_fn((Q, OPPOSITE_PAIRS.len()), |(i, k)| {
        let (a, b) = OPPOSITE_PAIRS[k];
        if i == a {
            T::one()
        } else if i == b {
            -T::one()
        } else {
            T::zero()
        }
    });
    let pm = tape.constant(pairs);
    let d = tape.matmul(f, pm);
    let root = sum_squares(&mut tape, d);
    finish(tape, net, root, pts.len(), gradient)
}

/// `sum (rho(x, y, 0) - rho_0)^2`.
pub fn init_block<T: NetScalar>(
    net: &Network<T>,
    pts: &[[T; 3]],
    rho0: &[T],
    dropout: Option<&DropoutMasks<T>>,
    gradient: bool,
) -> Result<BlockSum<T>, LossError> {
    let mut tape = Tape::new();
    let vars = net.record(&mut tape);
    let f = net.forward_taped(&mut tape, &vars, &rows(pts), false, dropout).f;
    let (rho, _) = moments_taped(&mut tape, f);
    let target = tape.constant(Array2::from_shape_fn((pts.len(), 1), |(k, _)| rho0[k]));
    let d = tape.sub(rho, target);
    let root = sum_squares(&mut tape, d);
    finish(tape, net, root, pts.len(), gradient)
}

/// Residual of the network at one point (see [`super::residual_from_parts`]).
pub fn residual<T: NetScalar>(net: &Network<T>, p: [T; 3], medium: &Medium<T>, g_ads: T) -> Result<[T; Q], LossError> {
    net.check_finite()?;
    let plan = medium.neighbor_plan(p)?;
    let mut tape = Tape::new();
    let vars = net.record(&mut tape);
    let (r, valid) = residual_taped(&mut tape, net, &vars, medium, g_ads, &[p], &[plan], None);
    if !valid[0] {
        return Err(LossError::ResidualUndefined);
    }
    let r = tape.value(r);
    Ok(std::array::from_fn(|i| r[[0, i]]))
}
