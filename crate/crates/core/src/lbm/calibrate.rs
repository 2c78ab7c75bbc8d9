//! Calibration runs: flat-interface coexistence, Laplace-law surface tension
//! and shear-wave viscosity.

use crate::lattice::pressure;
use crate::scalar::{from_usize, lit, Real};
use crate::surface::SurfaceSpec;

use super::config::{Placement, SimConfig, TopBoundary};
use super::solver::Solver;
use super::LbmError;

/// Bulk liquid and gas densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPair<T> {
    pub liquid: T,
    pub gas: T,
}

const CHECK_INTERVAL: u64 = 100;

/// Critical reduced strength `G rho0` of the exponential pseudopotential.
pub const CRITICAL_REDUCED_G: f64 = -4.0;

fn periodic_config<T: Real>(nx: usize, ny: usize, g: T, rho0: T, tau: T, init: DensityPair<T>) -> SimConfig<T> {
    let mut c = SimConfig::flat(nx, ny, 1.0, 0);
    c.surface = SurfaceSpec::NoSubstrate;
    c.top = TopBoundary::Periodic;
    c.g = g;
    c.g_ads = T::zero();
    c.rho0 = rho0;
    c.tau = tau;
    c.rho_l = init.liquid;
    c.rho_g = init.gas;
    c.placement = Placement::Center { y: from_usize::<T>(ny) / lit(2.0) };
    c.center_x = Some(from_usize::<T>(nx) / lit(2.0));
    c
}

/// Steps until the largest density change over [`CHECK_INTERVAL`] steps
/// drops below `tol`. Returns the number of steps taken, or `None` when
/// `max_steps` is exhausted first.
fn relax<T: Real>(solver: &mut Solver<T>, max_steps: u64, tol: T) -> Result<Option<u64>, LbmError> {
    let mut prev = solver.macro_field()?.rho;
    let mut taken = 0;
    while taken < max_steps {
        for _ in 0..CHECK_INTERVAL {
            solver.step()?;
        }
        taken += CHECK_INTERVAL;
        let rho = solver.macro_field()?.rho;
        let change = rho
            .iter()
            .zip(&prev)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        if change < tol {
            return Ok(Some(taken));
        }
        prev = rho;
    }
    Ok(None)
}

/// Steady density column of a liquid slab occupying the middle half of a
/// periodic `1 x ny` channel.
pub fn flat_interface_profile<T: Real>(
    g: T,
    rho0: T,
    tau: T,
    ny: usize,
    init: DensityPair<T>,
    max_steps: u64,
    tol: T,
) -> Result<Vec<T>, LbmError> {
    let config = periodic_config(1, ny, g, rho0, tau, init);
    let substrate = config.surface.build(1, ny)?;
    let (lo, hi) = (ny / 4, 3 * ny / 4);
    let rho: Vec<T> = (0..ny)
        .map(|y| {
            let half = lit::<T>(0.5);
            let w = lit::<T>(4.0);
            let yy = from_usize::<T>(y);
            let s = half
                * ((lit::<T>(2.0) * (yy - from_usize(lo)) / w).tanh()
                    - (lit::<T>(2.0) * (yy - from_usize(hi)) / w).tanh());
            init.gas + (init.liquid - init.gas) * s
        })
        .collect();
    let mut solver = Solver::from_density(config, substrate, &rho)?;
    if relax(&mut solver, max_steps, tol)?.is_none() {
        log::warn!("flat interface at G = {g} did not reach the steady tolerance in {max_steps} steps");
    }
    Ok(solver.macro_field()?.rho)
}

/// Bulk densities of a relaxed slab profile (its extremes).
pub fn coexistence_densities<T: Real>(profile: &[T]) -> DensityPair<T> {
    let liquid = profile.iter().copied().fold(T::neg_infinity(), T::max);
    let gas = profile.iter().copied().fold(T::infinity(), T::min);
    DensityPair { liquid, gas }
}

/// Distance between the 10 % and 90 % density levels on the lower flank of
/// a slab profile.
pub fn interface_thickness<T: Real>(profile: &[T], bulk: DensityPair<T>) -> Option<T> {
    let level = |frac: f64| bulk.gas + (bulk.liquid - bulk.gas) * lit(frac);
    let crossing = |target: T| -> Option<T> {
        (0..profile.len() / 2).find_map(|y| {
            let (a, b) = (profile[y], profile[y + 1]);
            (a <= target && b > target).then(|| from_usize::<T>(y) + (target - a) / (b - a))
        })
    };
    Some(crossing(level(0.9))? - crossing(level(0.1))?)
}

/// How the pseudopotential reference density is chosen during a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceDensity<T> {
    /// Keep `rho0` and scan `G` only.
    Fixed(T),
    /// Scan the reduced strength `G rho0` for the target density ratio, then
    /// set `rho0` from the absolute density levels.
    Fitted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions<T> {
    pub target: DensityPair<T>,
    pub reference: ReferenceDensity<T>,
    /// Candidate strengths (`G` for a fixed reference, `G rho0` when fitted).
    pub candidates: Vec<T>,
    /// Bisection/refinement passes after the coarse scan.
    pub refinements: usize,
    pub tau: T,
    pub ny: usize,
    pub max_steps: u64,
    pub tol: T,
    /// Surface tension target. With a fitted reference, `rho0` then balances
    /// the relative errors of both densities and the tension.
    pub surface_tension: Option<T>,
    pub laplace: LaplaceOptions<T>,
}

impl<T: Real> ScanOptions<T> {
    /// Fitted-reference scan towards (6.5, 0.38) and a tension of 0.15.
    pub fn standard() -> Self {
        Self {
            target: DensityPair { liquid: lit(6.5), gas: lit(0.38) },
            reference: ReferenceDensity::Fitted,
            candidates: (0..=6).map(|k| lit(-4.75 - 0.125 * k as f64)).collect(),
            refinements: 12,
            tau: T::one(),
            ny: 128,
            max_steps: 60_000,
            tol: lit(1e-7),
            surface_tension: Some(lit(0.15)),
            laplace: LaplaceOptions::standard(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoexistenceScan<T> {
    /// `(strength, measured bulk densities)` for every evaluated candidate.
    pub rows: Vec<(T, DensityPair<T>)>,
    pub g: T,
    pub rho0: T,
    /// Bulk densities expected at the chosen `(g, rho0)`.
    pub densities: DensityPair<T>,
    pub thickness: Option<T>,
    /// Laplace-law tension at the chosen parameters, when requested.
    pub sigma: Option<T>,
}

/// Coexistence scan over flat-interface runs.
pub fn coexistence_scan<T: Real>(opts: &ScanOptions<T>) -> Result<CoexistenceScan<T>, LbmError> {
    if opts.candidates.is_empty() || opts.candidates.iter().any(|g| !(g.is_finite() && *g < T::zero())) {
        return Err(LbmError::Calibration("candidate strengths must be finite and negative".into()));
    }
    let rho0 = match opts.reference {
        ReferenceDensity::Fixed(r) => r,
        ReferenceDensity::Fitted => T::one(),
    };
    let first = DensityPair { liquid: lit::<T>(2.0) * rho0, gas: lit::<T>(0.15) * rho0 };
    let mut rows: Vec<(T, DensityPair<T>)> = Vec::new();
    // continuation: start each run from the closest strength already relaxed,
    // strong coupling blows up from a poor initial guess
    let mut measure = |g: T| -> Result<(DensityPair<T>, Vec<T>), LbmError> {
        let init = rows
            .iter()
            .filter(|(_, p)| p.liquid > p.gas * lit(1.5))
            .min_by(|a, b| (a.0 - g).abs().partial_cmp(&(b.0 - g).abs()).unwrap())
            .map_or(first, |r| r.1);
        let prof = flat_interface_profile(g, rho0, opts.tau, opts.ny, init, opts.max_steps, opts.tol)?;
        let pair = coexistence_densities(&prof);
        rows.push((g, pair));
        Ok((pair, prof))
    };
    let target_ratio = (opts.target.liquid / opts.target.gas).ln();
    let separated = |p: &DensityPair<T>| p.liquid > p.gas * lit(1.5);
    let objective = |p: &DensityPair<T>| -> T {
        if !separated(p) {
            return T::infinity();
        }
        match opts.reference {
            ReferenceDensity::Fitted => ((p.liquid / p.gas).ln() - target_ratio).powi(2),
            ReferenceDensity::Fixed(_) => {
                (p.liquid / opts.target.liquid).ln().powi(2) + (p.gas / opts.target.gas).ln().powi(2)
            }
        }
    };

    let mut candidates = opts.candidates.clone();
    candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut coarse = Vec::new();
    for &g in &candidates {
        let f = match measure(g) {
            Ok((pair, _)) => objective(&pair),
            Err(LbmError::Instability { .. }) => {
                log::warn!("flat interface at strength {g} went unstable");
                T::infinity()
            }
            Err(e) => return Err(e),
        };
        coarse.push((g, f));
    }
    let (best_idx, _) = coarse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    if !coarse[best_idx].1.is_finite() {
        return Err(LbmError::Calibration("no candidate strength separates the phases".into()));
    }
    // golden-section refinement on the bracket around the best candidate
    let lo_idx = best_idx.saturating_sub(1);
    let hi_idx = (best_idx + 1).min(coarse.len() - 1);
    let (mut a, mut b) = (coarse[lo_idx].0, coarse[hi_idx].0);
    let phi = lit::<T>(0.618_033_988_749_894_8);
    let mut best = coarse[best_idx];
    if opts.refinements > 0 && a != b {
        let mut c = b - (b - a) * phi;
        let mut d = a + (b - a) * phi;
        let mut fc = objective(&measure(c)?.0);
        let mut fd = objective(&measure(d)?.0);
        for _ in 0..opts.refinements {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * phi;
                fc = objective(&measure(c)?.0);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * phi;
                fd = objective(&measure(d)?.0);
            }
        }
        for (g, f) in [(c, fc), (d, fd)] {
            if f < best.1 {
                best = (g, f);
            }
        }
    }
    let (pair, prof) = measure(best.0)?;
    let thickness = interface_thickness(&prof, pair);
    let sigma = match opts.surface_tension {
        Some(_) => Some(laplace_calibration(best.0, rho0, opts.tau, pair, &opts.laplace)?.sigma),
        None => None,
    };
    let (g, rho0, densities, sigma) = match opts.reference {
        ReferenceDensity::Fixed(r) => (best.0, r, pair, sigma),
        ReferenceDensity::Fitted => {
            // the dynamics are invariant under rho -> s rho, rho0 -> s rho0,
            // G -> G / s, with the tension scaling like the densities
            let mut logs = vec![(opts.target.liquid / pair.liquid).ln(), (opts.target.gas / pair.gas).ln()];
            if let (Some(target), Some(measured)) = (opts.surface_tension, sigma) {
                logs.push((target / measured).ln());
            }
            let s = (logs.iter().copied().sum::<T>() / from_usize(logs.len())).exp();
            let scaled = DensityPair { liquid: pair.liquid * s, gas: pair.gas * s };
            (best.0 / s, s, scaled, sigma.map(|v| v * s))
        }
    };
    Ok(CoexistenceScan { rows, g, rho0, densities, thickness, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceRow<T> {
    pub initial_radius: T,
    /// Equimolar radius of the relaxed droplet.
    pub radius: T,
    pub rho_in: T,
    pub rho_out: T,
    pub pressure_jump: T,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceFit<T> {
    pub rows: Vec<LaplaceRow<T>>,
    /// Slope of `dp` against `1/R` through the origin.
    pub sigma: T,
    pub r_squared: T,
    pub rms_residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceOptions<T> {
    pub radii: Vec<T>,
    pub box_size: usize,
    pub max_steps: u64,
    pub tol: T,
}

impl<T: Real> LaplaceOptions<T> {
    /// Radii 12..24 in an 80 x 80 box, steady at 1e-6 per 100 steps.
    pub fn standard() -> Self {
        Self {
            radii: [12.0, 16.0, 20.0, 24.0].map(lit).to_vec(),
            box_size: 80,
            max_steps: 40_000,
            tol: lit(1e-6),
        }
    }
}

/// Static droplets of several radii in a periodic box; fits `dp = sigma / R`.
pub fn laplace_calibration<T: Real>(
    g: T,
    rho0: T,
    tau: T,
    init: DensityPair<T>,
    opts: &LaplaceOptions<T>,
) -> Result<LaplaceFit<T>, LbmError> {
    let LaplaceOptions { ref radii, box_size, max_steps, tol } = *opts;
    if radii.len() < 3 {
        return Err(LbmError::Calibration("at least three radii are required".into()));
    }
    // psi = rho0 (1 - exp(-rho/rho0)) separates phases only below G rho0 = -4
    if !(g * rho0 < lit(CRITICAL_REDUCED_G)) {
        return Err(LbmError::Calibration(format!(
            "degenerate: G rho0 = {} is above the critical value {CRITICAL_REDUCED_G}, no interface forms",
            g * rho0
        )));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r0 in radii.iter() {
        let mut config = periodic_config(box_size, box_size, g, rho0, tau, init);
        config.radius = r0;
        let mut solver = Solver::new(config)?;
        let m0 = solver.mass();
        let steps = relax(&mut solver, max_steps, tol)?.ok_or_else(|| {
            LbmError::Calibration(format!("droplet of radius {r0} did not reach a steady state"))
        })?;
        let drift = ((solver.mass() - m0) / m0).abs();
        if drift > lit(1e-9) {
            return Err(LbmError::Calibration(format!("mass drift {drift} during relaxation")));
        }
        let field = solver.macro_field()?;
        let c = from_usize::<T>(box_size) / lit(2.0);
        let dist = |n: usize| {
            let dx = from_usize::<T>(n % box_size) - c;
            let dy = from_usize::<T>(n / box_size) - c;
            (dx * dx + dy * dy).sqrt()
        };
        let mean_where = |vals: &dyn Fn(usize) -> T, pred: &dyn Fn(T) -> bool| -> Option<T> {
            let (s, k) = (0..field.rho.len())
                .filter(|&n| pred(dist(n)))
                .fold((T::zero(), 0usize), |(s, k), n| (s + vals(n), k + 1));
            (k > 0).then(|| s / from_usize(k))
        };
        let rho_at = |n: usize| field.rho[n];
        let rho_in = mean_where(&rho_at, &|d| d < r0 / lit(2.0)).unwrap();
        let far = r0 + lit(10.0);
        let rho_out = mean_where(&rho_at, &|d| d > far)
            .ok_or_else(|| LbmError::Calibration("box too small for a gas reference region".into()))?;
        if !(rho_in > rho_out * lit(1.5)) {
            return Err(LbmError::Calibration(format!(
                "no interface formed (inside {rho_in}, outside {rho_out})"
            )));
        }
        let total: T = field.rho.iter().copied().sum();
        let n = from_usize::<T>(field.rho.len());
        let area = (total - rho_out * n) / (rho_in - rho_out);
        let radius = (area / T::PI()).sqrt();
        let p_at = |k: usize| pressure(field.rho[k], g, rho0);
        let p_in = mean_where(&p_at, &|d| d < radius / lit(2.0)).unwrap();
        let p_out = mean_where(&p_at, &|d| d > radius + lit(8.0))
            .ok_or_else(|| LbmError::Calibration("box too small for a gas reference region".into()))?;
        rows.push(LaplaceRow {
            initial_radius: r0,
            radius,
            rho_in,
            rho_out,
            pressure_jump: p_in - p_out,
            steps,
        });
    }
    let sxy: T = rows.iter().map(|r| r.pressure_jump / r.radius).sum();
    let sxx: T = rows.iter().map(|r| (T::one() / r.radius).powi(2)).sum();
    let sigma = sxy / sxx;
    let mean_dp = rows.iter().map(|r| r.pressure_jump).sum::<T>() / from_usize(rows.len());
    let ss_res: T = rows.iter().map(|r| (r.pressure_jump - sigma / r.radius).powi(2)).sum();
    let ss_tot: T = rows.iter().map(|r| (r.pressure_jump - mean_dp).powi(2)).sum();
    Ok(LaplaceFit {
        sigma,
        r_squared: T::one() - ss_res / ss_tot,
        rms_residual: (ss_res / from_usize(rows.len())).sqrt(),
        rows,
    })
}

/// Kinematic viscosity measured from the decay of a sinusoidal shear wave
/// `u_x = A sin(2 pi y / n)` in a periodic single-phase channel.
pub fn shear_wave_viscosity<T: Real>(tau: T, n: usize, amplitude: T, steps: u64) -> Result<T, LbmError> {
    let mut config = periodic_config(1, n, T::zero(), T::one(), tau, DensityPair { liquid: lit(2.0), gas: T::one() });
    config.g = T::zero();
    let substrate = config.surface.build(1, n)?;
    let k = T::TAU() / from_usize(n);
    let ux: Vec<T> = (0..n).map(|y| amplitude * (k * from_usize(y)).sin()).collect();
    let uy = vec![T::zero(); n];
    let rho = vec![T::one(); n];
    let mut solver = Solver::from_fields(config, substrate, &rho, &ux, &uy)?;
    let project = |s: &mut Solver<T>| -> Result<T, LbmError> {
        let f = s.macro_field()?;
        Ok(f.ux
            .iter()
            .enumerate()
            .map(|(y, &u)| u * (k * from_usize(y)).sin())
            .sum::<T>()
            * lit::<T>(2.0)
            / from_usize(n))
    };
    // let the non-equilibrium part of the initial state settle
    let warmup = 50;
    for _ in 0..warmup {
        solver.step()?;
    }
    let a0 = project(&mut solver)?;
    for _ in 0..steps {
        solver.step()?;
    }
    let a1 = project(&mut solver)?;
    Ok((a0 / a1).ln() / (k * k * T::from_u64(steps).unwrap()))
}
