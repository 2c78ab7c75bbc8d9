//! Substrate geometry: Weierstrass-Mandelbrot fractal profiles, periodic
//! pillar arrays, rasterization onto the lattice, and the classical
//! Wenzel / Cassie-Baxter angle predictions.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("invalid surface parameters: {0}")]
    InvalidSpec(String),
    #[error("profile is constant and cannot be normalized to a target RMS")]
    DegenerateProfile,
    #[error("surface height {height} at column {column} leaves no fluid below the top row (domain height {ny})")]
    TooTall { column: usize, height: i64, ny: usize },
    #[error("r cos(theta_Y) = {0} lies outside [-1, 1]; no Wenzel state exists")]
    NoWenzelState(f64),
}

/// Parameters of the Weierstrass-Mandelbrot height series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Deserialize<'de>"))]
pub struct FractalSurfaceSpec<T> {
    /// Mean height.
    pub h0: T,
    /// Raw series amplitude (rescaled by RMS normalization).
    pub amplitude: T,
    /// Fractal dimension, strictly between 1 and 2.
    pub dimension: T,
    /// Frequency ratio between successive terms.
    pub gamma: T,
    pub n_min: i32,
    pub n_max: i32,
    /// Period of the fundamental mode.
    pub lx: T,
    pub target_rms: T,
    pub h_min: T,
    pub h_max: T,
    pub seed: u64,
    /// Explicit phases, one per term; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<T>>,
}

impl<T: Real> FractalSurfaceSpec<T> {
    /// Default rough substrate for a domain of width `lx`: D = 1.5,
    /// gamma = 1.4, RMS 2.5 and heights confined to [2, 10].
    ///
    /// The term range keeps the longest wavelength equal to `lx` and the
    /// shortest at or above four lattice spacings.
    pub fn standard(lx: usize, seed: u64) -> Self {
        let gamma = 1.4;
        let n_max = ((lx as f64 / 4.0).ln() / f64::ln(gamma)).floor().max(0.0) as i32;
        Self {
            h0: lit(6.0),
            amplitude: T::one(),
            dimension: lit(1.5),
            gamma: lit(gamma),
            n_min: 0,
            n_max,
            lx: from_usize(lx),
            target_rms: lit(2.5),
            h_min: lit(2.0),
            h_max: lit(10.0),
            seed,
            phases: None,
        }
    }

    pub fn validate(&self) -> Result<(), SurfaceError> {
        let bad = |m: &str| Err(SurfaceError::InvalidSpec(m.to_string()));
        if !(self.dimension > T::one() && self.dimension < lit(2.0)) {
            return bad("fractal dimension must satisfy 1 < D < 2");
        }
        if !(self.gamma >= lit(1.2) && self.gamma <= lit(1.6)) {
            return bad("frequency scale gamma must lie in [1.2, 1.6]");
        }
        if self.n_min > self.n_max {
            return bad("n_min must not exceed n_max");
        }
        if !(self.h_min < self.h_max) {
            return bad("h_min must be below h_max");
        }
        if !(self.h0 >= self.h_min && self.h0 <= self.h_max) {
            return bad("mean height h0 must lie within [h_min, h_max]");
        }
        if !(self.lx > T::zero()) || !(self.target_rms > T::zero()) {
            return bad("lx and target_rms must be positive");
        }
        if let Some(p) = &self.phases {
            if p.len() != self.term_count() {
                return bad("explicit phase list length must equal n_max - n_min + 1");
            }
        }
        Ok(())
    }

    pub fn term_count(&self) -> usize {
        (self.n_max - self.n_min + 1).max(0) as usize
    }

    /// Phases of every term, drawn uniformly from [0, 2 pi) with SplitMix64.
    pub fn phases(&self) -> Vec<T> {
        if let Some(p) = &self.phases {
            return p.clone();
        }
        let mut rng = SplitMix64::seed_from_u64(self.seed);
        (0..self.term_count())
            .map(|_| lit::<T>(rng.gen::<f64>()) * T::TAU())
            .collect()
    }
}

/// Raw series value `h0 + A sum gamma^{-n(2-D)} cos(2 pi gamma^n x / lx + phi_n)`.
pub fn wm_height<T: Real>(x: T, spec: &FractalSurfaceSpec<T>) -> T {
    wm_height_with(x, spec, &spec.phases())
}

fn wm_height_with<T: Real>(x: T, spec: &FractalSurfaceSpec<T>, phases: &[T]) -> T {
    let two = lit::<T>(2.0);
    let mut sum = T::zero();
    for (k, n) in (spec.n_min..=spec.n_max).enumerate() {
        let nn = T::from_i32(n).unwrap();
        let scale = spec.gamma.powf(-nn * (two - spec.dimension));
        let freq = spec.gamma.powf(nn);
        sum = sum + scale * (T::TAU() * freq * x / spec.lx + phases[k]).cos();
    }
    spec.h0 + spec.amplitude * sum
}

/// Sampled, normalized and clamped fractal profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalProfile<T> {
    /// Height at each integer column `x = 0..L`.
    pub heights: Vec<T>,
    pub seed: u64,
    pub target_rms: T,
    /// RMS about the mean after amplitude normalization, before clamping.
    pub rms_normalized: T,
    /// RMS about the mean of the final heights.
    pub rms_final: T,
    /// Factor applied to deviations to respect `[h_min, h_max]` (1 if unclamped).
    pub clamp_scale: T,
}

fn rms_about_mean<T: Real>(h: &[T]) -> (T, T) {
    let n = from_usize::<T>(h.len());
    let mean = h.iter().copied().sum::<T>() / n;
    let var = h.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Samples the series at `x = 0..L`, rescales the amplitude so the RMS about
/// the mean equals `target_rms`, then scales deviations about `h0` so that
/// every height lies in `[h_min, h_max]`.
pub fn build_fractal_profile<T: Real>(
    spec: &FractalSurfaceSpec<T>,
    columns: usize,
) -> Result<FractalProfile<T>, SurfaceError> {
    spec.validate()?;
    if columns == 0 {
        return Err(SurfaceError::InvalidSpec("profile needs at least one column".into()));
    }
    let phases = spec.phases();
    let raw: Vec<T> = (0..columns)
        .map(|x| wm_height_with(from_usize(x), spec, &phases))
        .collect();
    let (mean, rms) = rms_about_mean(&raw);
    if !(rms > T::epsilon() * (T::one() + mean.abs()) * lit(16.0)) {
        return Err(SurfaceError::DegenerateProfile);
    }
    let k = spec.target_rms / rms;
    let mut heights: Vec<T> = raw.iter().map(|&v| spec.h0 + (v - mean) * k).collect();
    let (_, rms_normalized) = rms_about_mean(&heights);

    let hi = heights.iter().copied().fold(T::neg_infinity(), T::max);
    let lo = heights.iter().copied().fold(T::infinity(), T::min);
    let mut clamp_scale = T::one();
    if hi > spec.h_max {
        clamp_scale = clamp_scale.min((spec.h_max - spec.h0) / (hi - spec.h0));
    }
    if lo < spec.h_min {
        clamp_scale = clamp_scale.min((spec.h0 - spec.h_min) / (spec.h0 - lo));
    }
    if clamp_scale < T::one() {
        for h in heights.iter_mut() {
            *h = (spec.h0 + (*h - spec.h0) * clamp_scale).max(spec.h_min).min(spec.h_max);
        }
    }
    let (_, rms_final) = rms_about_mean(&heights);
    if (rms_final - spec.target_rms).abs() > lit::<T>(0.1) * spec.target_rms {
        log::warn!(
            "height clamping changed the surface RMS from {} to {} (target {})",
            rms_normalized,
            rms_final,
            spec.target_rms
        );
    }
    Ok(FractalProfile {
        heights,
        seed: spec.seed,
        target_rms: spec.target_rms,
        rms_normalized,
        rms_final,
        clamp_scale,
    })
}

/// Periodic array of rectangular pillars standing on a flat base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PillarSurfaceSpec {
    pub width: usize,
    pub height: usize,
    pub pitch: usize,
    /// Rows `y <= base` are solid everywhere.
    #[serde(default = "default_base")]
    pub base: usize,
}

fn default_base() -> usize {
    2
}

impl Default for PillarSurfaceSpec {
    fn default() -> Self {
        Self { width: 8, height: 10, pitch: 20, base: 2 }
    }
}

impl PillarSurfaceSpec {
    pub fn validate(&self) -> Result<(), SurfaceError> {
        if self.width == 0 || self.width >= self.pitch {
            return Err(SurfaceError::InvalidSpec("pillars need 0 < width < pitch".into()));
        }
        if self.height == 0 {
            return Err(SurfaceError::InvalidSpec("pillar height must be positive".into()));
        }
        Ok(())
    }

    pub fn solid_fraction(&self) -> f64 {
        self.width as f64 / self.pitch as f64
    }

    fn column_top(&self, x: usize) -> usize {
        if x % self.pitch < self.width {
            self.base + self.height
        } else {
            self.base
        }
    }

    /// Solid-row ceiling of every column.
    pub fn column_heights(&self, columns: usize) -> Vec<usize> {
        (0..columns).map(|x| self.column_top(x)).collect()
    }
}

/// Any substrate the solver can rasterize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceSpec<T> {
    /// No solid nodes at all (fully periodic validation runs).
    #[serde(rename = "none")]
    NoSubstrate,
    /// Rows `y <= height` solid.
    Flat { height: usize },
    Fractal(FractalSurfaceSpec<T>),
    Pillars(PillarSurfaceSpec),
}

/// Solid/fluid flag for every lattice node (`true` = solid).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolidMask {
    pub nx: usize,
    pub ny: usize,
    solid: Vec<bool>,
}

impl SolidMask {
    /// All-fluid mask.
    pub fn empty(nx: usize, ny: usize) -> Self {
        Self { nx, ny, solid: vec![false; nx * ny] }
    }

    /// Mask with rows `y <= top[x]` solid in every column.
    pub fn from_column_tops(top: &[usize], ny: usize) -> Result<Self, SurfaceError> {
        let nx = top.len();
        let mut mask = Self::empty(nx, ny);
        for (x, &t) in top.iter().enumerate() {
            if t + 1 >= ny {
                return Err(SurfaceError::TooTall { column: x, height: t as i64, ny });
            }
            for y in 0..=t {
                mask.solid[y * nx + x] = true;
            }
        }
        Ok(mask)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.nx + x
    }

    #[inline]
    pub fn is_solid(&self, x: usize, y: usize) -> bool {
        self.solid[y * self.nx + x]
    }

    pub fn set(&mut self, x: usize, y: usize, solid: bool) {
        let i = self.index(x, y);
        self.solid[i] = solid;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.solid
    }

    pub fn fluid_count(&self) -> usize {
        self.solid.iter().filter(|&&s| !s).count()
    }

    pub fn solid_in_column(&self, x: usize) -> usize {
        (0..self.ny).filter(|&y| self.is_solid(x, y)).count()
    }

    /// Highest solid row of each column (`None` for all-fluid columns).
    pub fn column_tops(&self) -> Vec<Option<usize>> {
        (0..self.nx)
            .map(|x| (0..self.ny).rev().find(|&y| self.is_solid(x, y)))
            .collect()
    }

    /// Highest solid row anywhere.
    pub fn max_top(&self) -> Option<usize> {
        self.column_tops().into_iter().flatten().max()
    }
}

/// Flags `y <= round(h(x))` as solid.
pub fn rasterize_heights<T: Real>(heights: &[T], ny: usize) -> Result<SolidMask, SurfaceError> {
    let tops: Vec<usize> = heights
        .iter()
        .enumerate()
        .map(|(x, &h)| {
            let r = h.round().to_i64().unwrap_or(i64::MAX);
            if r < 0 {
                Ok(0)
            } else if r as usize + 1 >= ny {
                Err(SurfaceError::TooTall { column: x, height: r, ny })
            } else {
                Ok(r as usize)
            }
        })
        .collect::<Result<_, _>>()?;
    SolidMask::from_column_tops(&tops, ny)
}

pub fn rasterize_pillars(spec: &PillarSurfaceSpec, nx: usize, ny: usize) -> Result<SolidMask, SurfaceError> {
    spec.validate()?;
    SolidMask::from_column_tops(&spec.column_heights(nx), ny)
}

/// Rasterized substrate together with its column height profile.
#[derive(Debug, Clone)]
pub struct Substrate<T> {
    pub mask: SolidMask,
    /// Surface height per column (the continuous profile for fractal
    /// substrates, the solid ceiling otherwise).
    pub heights: Vec<T>,
    pub fractal: Option<FractalProfile<T>>,
}

impl<T: Real> SurfaceSpec<T> {
    pub fn build(&self, nx: usize, ny: usize) -> Result<Substrate<T>, SurfaceError> {
        match self {
            SurfaceSpec::NoSubstrate => Ok(Substrate {
                mask: SolidMask::empty(nx, ny),
                heights: vec![-T::one(); nx],
                fractal: None,
            }),
            SurfaceSpec::Flat { height } => {
                let tops = vec![*height; nx];
                Ok(Substrate {
                    mask: SolidMask::from_column_tops(&tops, ny)?,
                    heights: vec![from_usize(*height); nx],
                    fractal: None,
                })
            }
            SurfaceSpec::Fractal(spec) => {
                let profile = build_fractal_profile(spec, nx)?;
                Ok(Substrate {
                    mask: rasterize_heights(&profile.heights, ny)?,
                    heights: profile.heights.clone(),
                    fractal: Some(profile),
                })
            }
            SurfaceSpec::Pillars(p) => Ok(Substrate {
                mask: rasterize_pillars(p, nx, ny)?,
                heights: p.column_heights(nx).into_iter().map(from_usize).collect(),
                fractal: None,
            }),
        }
    }
}

/// Arc length of the sampled profile over its projected length.
pub fn roughness_ratio<T: Real>(heights: &[T]) -> T {
    let n = heights.len();
    if n < 2 {
        return T::one();
    }
    let arc: T = (0..n)
        .map(|x| {
            let dh = heights[(x + 1) % n] - heights[x];
            (T::one() + dh * dh).sqrt()
        })
        .sum();
    arc / from_usize(n)
}

/// Apparent angle of the fully wetted state, `cos(theta_W) = r cos(theta_Y)`.
pub fn wenzel_angle<T: Real>(r: T, theta_young_deg: T) -> Result<T, SurfaceError> {
    if r < T::one() {
        return Err(SurfaceError::InvalidSpec("roughness ratio must be >= 1".into()));
    }
    if r == T::one() {
        // acos(cos(theta)) is not exact in floating point
        return Ok(theta_young_deg);
    }
    let c = r * theta_young_deg.to_radians().cos();
    if c.abs() > T::one() {
        return Err(SurfaceError::NoWenzelState(c.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(c.acos().to_degrees())
}

/// Apparent angle of the suspended state, `cos(theta_CB) = phi_s (cos(theta_Y) + 1) - 1`.
pub fn cassie_angle<T: Real>(phi_s: T, theta_young_deg: T) -> Result<T, SurfaceError> {
    if !(phi_s >= T::zero() && phi_s <= T::one()) {
        return Err(SurfaceError::InvalidSpec("solid fraction must lie in [0, 1]".into()));
    }
    let c = phi_s * (theta_young_deg.to_radians().cos() + T::one()) - T::one();
    Ok(c.max(-T::one()).min(T::one()).acos().to_degrees())
}
