//! Scalar bound for the network code and the vectorised activation kernels.

use kwet_core::Real;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};

/// Floating-point type usable by the tape: `f32` or `f64`.
pub trait NetScalar: Real + LinalgScalar + ScalarOperand + AddAssign + SubAssign + MulAssign + DivAssign {
    /// In-place `tanh`, accurate to a few ulps.
    fn tanh_slice(xs: &mut [Self]);
}

impl NetScalar for f64 {
    fn tanh_slice(xs: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected above.
            unsafe { tanh_f64_avx2(xs) };
            return;
        }
        tanh_f64_loop(xs)
    }
}

impl NetScalar for f32 {
    fn tanh_slice(xs: &mut [f32]) {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe { tanh_f32_avx2(xs) };
            return;
        }
        tanh_f32_loop(xs)
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tanh_f64_avx2(xs: &mut [f64]) {
    tanh_f64_loop(xs)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tanh_f32_avx2(xs: &mut [f32]) {
    tanh_f32_loop(xs)
}

// tanh(a) = -m / (2 + m) with m = expm1(-2a), a = |x|. expm1 is split as
// 2^n (1 + q(r)) - 1 = 2^n q + (2^n - 1) so that small arguments (n = 0)
// keep full relative precision. Everything is branch-free so the loops
// vectorise.

#[inline(always)]
fn tanh_f64_loop(xs: &mut [f64]) {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    for v in xs.iter_mut() {
        let x = *v;
        let a = x.abs().min(20.0);
        let y = -2.0 * a;
        let t = y * LOG2E + MAGIC;
        let n = t - MAGIC;
        let r = (y - n * LN2_HI) - n * LN2_LO;
        let ni = t.to_bits().wrapping_sub(MAGIC.to_bits());
        let scale = f64::from_bits(ni.wrapping_add(1023).wrapping_shl(52));
        let mut p = 1.0 / 479_001_600.0;
        p = p * r + 1.0 / 39_916_800.0;
        p = p * r + 1.0 / 3_628_800.0;
        p = p * r + 1.0 / 362_880.0;
        p = p * r + 1.0 / 40_320.0;
        p = p * r + 1.0 / 5_040.0;
        p = p * r + 1.0 / 720.0;
        p = p * r + 1.0 / 120.0;
        p = p * r + 1.0 / 24.0;
        p = p * r + 1.0 / 6.0;
        p = p * r + 0.5;
        p = p * r + 1.0;
        let q = p * r;
        let m = scale * q + (scale - 1.0);
        let th = -m / (2.0 + m);
        *v = if x.is_nan() { x } else { th.copysign(x) };
    }
}

#[inline(always)]
fn tanh_f32_loop(xs: &mut [f32]) {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    const MAGIC: f32 = 12_582_912.0; // 1.5 * 2^23
    for v in xs.iter_mut() {
        let x = *v;
        let a = x.abs().min(10.0);
        let y = -2.0 * a;
        let t = y * LOG2E + MAGIC;
        let n = t - MAGIC;
        let r = (y - n * LN2_HI) - n * LN2_LO;
        let ni = t.to_bits().wrapping_sub(MAGIC.to_bits());
        let scale = f32::from_bits(ni.wrapping_add(127).wrapping_shl(23));
        let mut p = 1.0 / 5_040.0;
        p = p * r + 1.0 / 720.0;
        p = p * r + 1.0 / 120.0;
        p = p * r + 1.0 / 24.0;
        p = p * r + 1.0 / 6.0;
        p = p * r + 0.5;
        p = p * r + 1.0;
        let q = p * r;
        let m = scale * q + (scale - 1.0);
        let th = -m / (2.0 + m);
        *v = if x.is_nan() { x } else { th.copysign(x) };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn f64_tanh_matches_libm() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let mut xs: Vec<f64> = (0..100_000).map(|_| rng.gen_range(-25.0..25.0)).collect();
        xs.extend((0..10_000).map(|_| rng.gen_range(-1e-3..1e-3)));
        xs.extend([0.0, -0.0, 1e-300, 0.3466, -0.3466, 30.0, -1e9, f64::MIN_POSITIVE]);
        let mut nan = [f64::NAN];
        f64::tanh_slice(&mut nan);
        assert!(nan[0].is_nan());
        let mut ys = xs.clone();
        f64::tanh_slice(&mut ys);
        for (x, y) in xs.iter().zip(&ys) {
            let e = x.tanh();
            assert!((y - e).abs() <= 4.0 * f64::EPSILON * e.abs().max(f64::MIN_POSITIVE), "{x}: {y} vs {e}");
        }
    }

    #[test]
    fn f32_tanh_matches_libm() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let xs: Vec<f32> = (0..100_000).map(|_| rng.gen_range(-12.0..12.0)).collect();
        let mut ys = xs.clone();
        f32::tanh_slice(&mut ys);
        for (x, y) in xs.iter().zip(&ys) {
            let e = x.tanh();
            assert!((y - e).abs() <= 4.0 * f32::EPSILON * e.abs().max(f32::MIN_POSITIVE), "{x}: {y} vs {e}");
        }
    }
}
