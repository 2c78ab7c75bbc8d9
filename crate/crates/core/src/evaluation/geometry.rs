use crate::scalar::{from_usize, lit, Real};
use crate::surface::SolidMask;

use super::interface::{extract_interface, fill_solid, InterfaceProfile};
use super::EvalError;

/// Half-width of the neighbourhood of each contact point used by the circle fit.
pub const CONTACT_WINDOW: f64 = 15.0;

/// Height, base and apparent contact angle of a sessile droplet.
#[derive(Debug, Clone, PartialEq)]
pub struct DropletGeometry<T> {
    /// Apex height above the substrate reference line.
    pub height: T,
    pub base_diameter: Option<T>,
    pub contact_left: Option<[T; 2]>,
    pub contact_right: Option<[T; 2]>,
    /// Mean of the left and right angles, in degrees.
    pub contact_angle: Option<T>,
    pub angle_left: Option<T>,
    pub angle_right: Option<T>,
    pub centroid: [T; 2],
    pub mass: Option<T>,
    /// Height of the substrate reference line.
    pub reference: T,
}

/// Reference line of a substrate: the face of the mean surface row
/// (solid rows sit at `y <= h`, the wall is half a node above).
pub fn substrate_reference<T: Real>(heights: &[T]) -> T {
    let mean = heights.iter().copied().sum::<T>() / from_usize(heights.len().max(1));
    mean + lit(0.5)
}

/// Algebraic (Kasa) least-squares circle through `points`: centre and radius.
pub fn fit_circle<T: Real>(points: &[[T; 2]]) -> Option<([T; 2], T)> {
    if points.len() < 3 {
        return None;
    }
    let n = from_usize::<T>(points.len());
    let mx = points.iter().map(|p| p[0]).sum::<T>() / n;
    let my = points.iter().map(|p| p[1]).sum::<T>() / n;
    // minimise sum (u^2 + v^2 + a u + b v + c)^2 in centred coordinates
    let mut m = [[T::zero(); 4]; 3];
    for p in points {
        let (u, v) = (p[0] - mx, p[1] - my);
        let row = [u, v, T::one()];
        let rhs = -(u * u + v * v);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = m[i][j] + row[i] * row[j];
            }
            m[i][3] = m[i][3] + row[i] * rhs;
        }
    }
    let sol = solve3(m)?;
    let (cu, cv) = (-sol[0] / lit(2.0), -sol[1] / lit(2.0));
    let r2 = cu * cu + cv * cv - sol[2];
    (r2 > T::zero()).then(|| ([cu + mx, cv + my], r2.sqrt()))
}

fn solve3<T: Real>(mut m: [[T; 4]; 3]) -> Option<[T; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())?;
        if m[piv][col].abs() <= T::epsilon() * lit(1e-3) {
            return None;
        }
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let k = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] = m[r][c] - k * m[col][c];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Geometry of a droplet contour above a substrate with column `heights`.
///
/// Contact points are where the contour crosses the substrate reference
/// line; without two crossings the droplet counts as detached and the
/// contact quantities are absent.
pub fn droplet_geometry<T: Real>(profile: &InterfaceProfile<T>, heights: &[T]) -> Result<DropletGeometry<T>, EvalError> {
    let pts = &profile.points;
    if pts.is_empty() {
        return Err(EvalError::NoInterface);
    }
    let reference = substrate_reference(heights);
    let top = pts.iter().map(|p| p[1]).fold(T::neg_infinity(), T::max);
    let height = top - reference;

    let mut crossings: Vec<[T; 2]> = Vec::new();
    let n_seg = if profile.closed { pts.len() } else { pts.len() - 1 };
    for k in 0..n_seg {
        let (a, b) = (pts[k], pts[(k + 1) % pts.len()]);
        let (da, db) = (a[1] - reference, b[1] - reference);
        if da * db <= T::zero() && da != db {
            let t = da / (da - db);
            crossings.push([a[0] + t * (b[0] - a[0]), reference]);
        }
    }
    let above: Vec<[T; 2]> = pts.iter().copied().filter(|p| p[1] >= reference).collect();
    let centroid_of = |v: &[[T; 2]]| {
        let n = from_usize::<T>(v.len().max(1));
        [v.iter().map(|p| p[0]).sum::<T>() / n, v.iter().map(|p| p[1]).sum::<T>() / n]
    };
    let centroid = if above.is_empty() { centroid_of(pts) } else { centroid_of(&above) };

    let left = crossings.iter().copied().min_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    let right = crossings.iter().copied().max_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) if r[0] > l[0] => (l, r),
        _ => {
            return Ok(DropletGeometry {
                height,
                base_diameter: None,
                contact_left: None,
                contact_right: None,
                contact_angle: None,
                angle_left: None,
                angle_right: None,
                centroid,
                mass: None,
                reference,
            })
        }
    };
    let window = lit::<T>(CONTACT_WINDOW);
    let angle_at = |c: [T; 2]| -> Option<T> {
        let near: Vec<[T; 2]> = above
            .iter()
            .copied()
            .filter(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() <= window)
            .collect();
        let (centre, r) = fit_circle(&near)?;
        let cos = ((reference - centre[1]) / r).max(-T::one()).min(T::one());
        Some(cos.acos().to_degrees())
    };
    let (al, ar) = (angle_at(left), angle_at(right));
    let contact_angle = match (al, ar) {
        (Some(a), Some(b)) => Some((a + b) / lit(2.0)),
        (a, b) => a.or(b),
    };
    Ok(DropletGeometry {
        height,
        base_diameter: Some(right[0] - left[0]),
        contact_left: Some(left),
        contact_right: Some(right),
        contact_angle,
        angle_left: al,
        angle_right: ar,
        centroid,
        mass: None,
        reference,
    })
}

fn wrap<T: Real>(v: T, period: T) -> T {
    v - (v / period).floor() * period
}

/// Extracts the interface of a density snapshot and measures the droplet.
///
/// Solid nodes are filled from the fluid above, and the field is rolled
/// horizontally so the droplet sits mid-domain; reported coordinates are
/// mapped back to the original frame (modulo `nx`). Mass and centroid are
/// taken over fluid nodes denser than `iso`.
pub fn measure_droplet<T: Real>(
    rho: &[T],
    mask: &SolidMask,
    heights: &[T],
    iso: T,
) -> Result<(InterfaceProfile<T>, DropletGeometry<T>), EvalError> {
    let (nx, ny) = (mask.nx, mask.ny);
    if rho.len() != nx * ny || heights.len() != nx {
        return Err(EvalError::ShapeMismatch { expected: nx * ny, found: rho.len() });
    }
    // circular mean of the liquid columns
    let (mut sc, mut ss) = (T::zero(), T::zero());
    let k = T::TAU() / from_usize(nx);
    for (n, &v) in rho.iter().enumerate() {
        if !mask.as_slice()[n] && v > iso {
            let a = k * from_usize(n % nx);
            sc = sc + v * a.cos();
            ss = ss + v * a.sin();
        }
    }
    let shift = if sc == T::zero() && ss == T::zero() {
        0
    } else {
        let mean = wrap(ss.atan2(sc), T::TAU()) / k;
        // roll so the liquid centre lands on column nx / 2
        (nx / 2 + nx - mean.round().to_usize().unwrap_or(0) % nx) % nx
    };
    let roll = |x: usize| (x + shift) % nx;
    let mut rolled = vec![T::zero(); nx * ny];
    let mut rolled_mask = SolidMask::empty(nx, ny);
    let mut rolled_h = vec![T::zero(); nx];
    for y in 0..ny {
        for x in 0..nx {
            rolled[y * nx + roll(x)] = rho[y * nx + x];
            rolled_mask.set(roll(x), y, mask.is_solid(x, y));
        }
    }
    for x in 0..nx {
        rolled_h[roll(x)] = heights[x];
    }
    let filled = fill_solid(&rolled, &rolled_mask);
    let profile = extract_interface(&filled, nx, ny, iso)?;
    let mut geom = droplet_geometry(&profile, &rolled_h)?;

    let (mut mass, mut mx, mut my) = (T::zero(), T::zero(), T::zero());
    for (n, &v) in rolled.iter().enumerate() {
        if !rolled_mask.as_slice()[n] && v > iso {
            mass = mass + v;
            mx = mx + v * from_usize(n % nx);
            my = my + v * from_usize(n / nx);
        }
    }
    let width = from_usize::<T>(nx);
    let s = from_usize::<T>(shift);
    let unroll = |p: [T; 2]| [wrap(p[0] - s, width), p[1]];
    if mass > T::zero() {
        geom.centroid = [mx / mass, my / mass];
        geom.mass = Some(mass);
    }
    geom.centroid = unroll(geom.centroid);
    geom.contact_left = geom.contact_left.map(unroll);
    geom.contact_right = geom.contact_right.map(unroll);
    let profile = InterfaceProfile { points: profile.points.into_iter().map(unroll).collect(), ..profile };
    Ok((profile, geom))
}
