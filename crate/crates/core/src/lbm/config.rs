use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};
use crate::surface::{FractalSurfaceSpec, PillarSurfaceSpec, SurfaceSpec};

use super::LbmError;

/// Treatment of the upper domain edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TopBoundary {
    /// Link bounce-back wall; keeps the fluid mass exactly constant.
    #[default]
    BounceBack,
    /// Incoming populations copied from the row below (open, not conservative).
    ZeroGradient,
    /// Top row streams into the bottom row. Only meaningful without a substrate.
    Periodic,
}

/// Vertical placement of the initial droplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Placement<T> {
    /// Droplet bottom `gap` lattice units above the highest surface feature.
    BottomTangent { gap: T },
    /// Droplet centre `gap` lattice units above the highest surface feature.
    CenterAbove { gap: T },
    /// Absolute centre height.
    Center { y: T },
}

/// Everything the solver needs for one wetting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Deserialize<'de>"))]
pub struct SimConfig<T> {
    pub nx: usize,
    pub ny: usize,
    pub tau: T,
    /// Fluid-fluid interaction strength (negative = cohesive).
    pub g: T,
    /// Fluid-solid adhesion strength (negative = wetting).
    pub g_ads: T,
    /// Initial liquid density.
    pub rho_l: T,
    /// Initial gas density.
    pub rho_g: T,
    /// Pseudopotential reference density.
    pub rho0: T,
    /// Virtual density of solid neighbours in the fluid-fluid force; the gas
    /// density when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_wall: Option<T>,
    pub radius: T,
    /// Horizontal droplet centre; domain middle when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_x: Option<T>,
    pub placement: Placement<T>,
    /// Width of the initial tanh density ramp.
    pub interface_width: T,
    pub steps: u64,
    pub snapshot_stride: u64,
    #[serde(default)]
    pub store_distributions: bool,
    #[serde(default)]
    pub top: TopBoundary,
    pub surface: SurfaceSpec<T>,
}

/// Calibrated Shan-Chen parameters: `(g, rho0)` reproducing bulk densities
/// close to (6.5, 0.38) with surface tension near 0.15. See
/// [`super::calibrate::coexistence_scan`].
pub const CALIBRATED_G: f64 = -1.3949;
pub const CALIBRATED_RHO0: f64 = 3.6162;

/// Virtual wall density of the presets. With the calibrated fluid it puts
/// the flat-wall contact angle near 150 degrees at `g_ads = -1.25` and near
/// 55 degrees at `g_ads = -2.75`.
pub const PRESET_WALL_DENSITY: f64 = 0.5;

impl<T: Real> SimConfig<T> {
    fn base(nx: usize, ny: usize, radius: f64, surface: SurfaceSpec<T>) -> Self {
        Self {
            nx,
            ny,
            tau: T::one(),
            g: lit(CALIBRATED_G),
            g_ads: lit(-2.0),
            rho_l: lit(6.5),
            rho_g: lit(0.38),
            rho0: lit(CALIBRATED_RHO0),
            rho_wall: Some(lit(PRESET_WALL_DENSITY)),
            radius: lit(radius),
            center_x: None,
            placement: Placement::BottomTangent { gap: lit(2.0) },
            interface_width: lit(2.0),
            steps: 20_000,
            snapshot_stride: 1_000,
            store_distributions: false,
            top: TopBoundary::BounceBack,
            surface,
        }
    }

    /// 400 x 200 domain, r0 = 40, fractal substrate.
    pub fn rough() -> Self {
        Self::base(400, 200, 40.0, SurfaceSpec::Fractal(FractalSurfaceSpec::standard(400, 42)))
    }

    /// 400 x 200 domain, r0 = 40, pillars w = 8, h = 10, p = 20.
    pub fn pillars() -> Self {
        Self::base(400, 200, 40.0, SurfaceSpec::Pillars(PillarSurfaceSpec::default()))
    }

    /// 200 x 200 domain with a radius-60 droplet on the fractal substrate.
    pub fn square_rough() -> Self {
        Self::base(200, 200, 60.0, SurfaceSpec::Fractal(FractalSurfaceSpec::standard(200, 42)))
    }

    /// Reduced rough configuration for desk-scale runs.
    pub fn desk_rough(nx: usize, ny: usize, radius: f64) -> Self {
        let mut c = Self::base(nx, ny, radius, SurfaceSpec::Fractal(FractalSurfaceSpec::standard(nx, 42)));
        c.steps = 2_000;
        c.snapshot_stride = 100;
        c
    }

    /// Flat wall with solid rows `y <= height`.
    pub fn flat(nx: usize, ny: usize, radius: f64, height: usize) -> Self {
        Self::base(nx, ny, radius, SurfaceSpec::Flat { height })
    }

    pub fn wall_density(&self) -> T {
        self.rho_wall.unwrap_or(self.rho_g)
    }

    pub fn validate(&self) -> Result<(), LbmError> {
        let bad = |m: &str| Err(LbmError::Config(m.to_string()));
        if self.nx == 0 || self.ny < 3 {
            return bad("domain must be at least 1 x 3 nodes");
        }
        if !(self.tau > lit(0.5)) {
            return bad("tau must exceed 0.5");
        }
        if !(self.g <= T::zero()) {
            return bad("fluid-fluid strength G must be non-positive (cohesive)");
        }
        if !(self.rho_l > self.rho_g && self.rho_g > T::zero()) {
            return bad("densities must satisfy rho_l > rho_g > 0");
        }
        if !(self.rho0 > T::zero()) {
            return bad("rho0 must be positive");
        }
        if !(self.radius > T::zero()) {
            return bad("droplet radius must be positive");
        }
        if !(self.interface_width > T::zero()) {
            return bad("interface width must be positive");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot stride must be positive");
        }
        if self.top == TopBoundary::Periodic && !matches!(self.surface, SurfaceSpec::NoSubstrate) {
            log::warn!("periodic top boundary wraps the fluid onto the substrate");
        }
        Ok(())
    }
}
