use std::collections::HashMap;

use crate::scalar::{from_usize, lit, Real};
use crate::surface::SolidMask;

use super::EvalError;

/// Iso-density contour as an ordered polyline in lattice units.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceProfile<T> {
    pub points: Vec<[T; 2]>,
    /// Whether the polyline closes on itself (otherwise it ends on the grid
    /// boundary).
    pub closed: bool,
    pub time: Option<T>,
}

impl<T: Real> InterfaceProfile<T> {
    pub fn at(mut self, time: T) -> Self {
        self.time = Some(time);
        self
    }
}

/// Copy of `rho` where every solid node takes the density of the first fluid
/// node above it, so that contours do not wrap around the substrate.
pub fn fill_solid<T: Real>(rho: &[T], mask: &SolidMask) -> Vec<T> {
    let (nx, ny) = (mask.nx, mask.ny);
    let mut out = rho.to_vec();
    for x in 0..nx {
        let mut above = None;
        for y in (0..ny).rev() {
            let n = y * nx + x;
            if mask.is_solid(x, y) {
                if let Some(v) = above {
                    out[n] = v;
                }
            } else {
                above = Some(rho[n]);
            }
        }
    }
    out
}

// Edge keys: 2 * node for the edge to the right of the node, 2 * node + 1 for
// the edge above it.
fn h_edge(nx: usize, x: usize, y: usize) -> usize {
    2 * (y * nx + x)
}

fn v_edge(nx: usize, x: usize, y: usize) -> usize {
    2 * (y * nx + x) + 1
}

/// Marching-squares contour of `rho` (row-major, `nx` wide) at `iso`;
/// returns the longest connected component.
pub fn extract_interface<T: Real>(rho: &[T], nx: usize, ny: usize, iso: T) -> Result<InterfaceProfile<T>, EvalError> {
    if rho.len() != nx * ny {
        return Err(EvalError::ShapeMismatch { expected: nx * ny, found: rho.len() });
    }
    if rho.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let lo = rho.iter().copied().fold(T::infinity(), T::min);
    let hi = rho.iter().copied().fold(T::neg_infinity(), T::max);
    if !(iso > lo && iso < hi) {
        return Err(EvalError::NoInterface);
    }
    let at = |x: usize, y: usize| rho[y * nx + x];
    let above = |v: T| v > iso;
    let mut points: HashMap<usize, [T; 2]> = HashMap::new();
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut edge_point = |key: usize, a: ([usize; 2], T), b: ([usize; 2], T)| {
        points.entry(key).or_insert_with(|| {
            let t = (iso - a.1) / (b.1 - a.1);
            let pa = [from_usize::<T>(a.0[0]), from_usize::<T>(a.0[1])];
            let pb = [from_usize::<T>(b.0[0]), from_usize::<T>(b.0[1])];
            [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
        });
        key
    };
    for y in 0..ny.saturating_sub(1) {
        for x in 0..nx.saturating_sub(1) {
            let corners = [[x, y], [x + 1, y], [x + 1, y + 1], [x, y + 1]];
            let vals = corners.map(|c| at(c[0], c[1]));
            let state = vals.map(above);
            // edges: bottom, right, top, left; edge k joins corners k and k+1
            let keys = [h_edge(nx, x, y), v_edge(nx, x + 1, y), h_edge(nx, x, y + 1), v_edge(nx, x, y)];
            let crossed: Vec<usize> = (0..4).filter(|&k| state[k] != state[(k + 1) % 4]).collect();
            let mut link = |k1: usize, k2: usize| {
                let e1 = edge_point(keys[k1], (corners[k1], vals[k1]), (corners[(k1 + 1) % 4], vals[(k1 + 1) % 4]));
                let e2 = edge_point(keys[k2], (corners[k2], vals[k2]), (corners[(k2 + 1) % 4], vals[(k2 + 1) % 4]));
                adjacency.entry(e1).or_default().push(e2);
                adjacency.entry(e2).or_default().push(e1);
            };
            match crossed.len() {
                2 => link(crossed[0], crossed[1]),
                4 => {
                    // saddle: cut off the corners that disagree with the cell centre
                    let centre = above(vals.iter().copied().sum::<T>() / lit(4.0));
                    for k in 0..4 {
                        if state[k] != centre {
                            link((k + 3) % 4, k);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    if adjacency.is_empty() {
        return Err(EvalError::NoInterface);
    }

    let mut keys: Vec<usize> = adjacency.keys().copied().collect();
    keys.sort_unstable();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut best: Option<(Vec<usize>, bool)> = None;
    // open chains start at their ends, closed loops anywhere
    let starts: Vec<usize> = keys
        .iter()
        .copied()
        .filter(|k| adjacency[k].len() == 1)
        .chain(keys.iter().copied())
        .collect();
    for start in starts {
        if visited.contains_key(&start) {
            continue;
        }
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut prev = usize::MAX;
        let mut cur = start;
        let closed;
        loop {
            let next = adjacency[&cur].iter().copied().find(|&e| e != prev && !visited.contains_key(&e));
            match next {
                Some(e) => {
                    visited.insert(e, true);
                    chain.push(e);
                    prev = cur;
                    cur = e;
                }
                None => {
                    closed = chain.len() > 2 && adjacency[&cur].contains(&start);
                    break;
                }
            }
        }
        if best.as_ref().map_or(true, |b| chain.len() > b.0.len()) {
            best = Some((chain, closed));
        }
    }
    let (chain, closed) = best.ok_or(EvalError::NoInterface)?;
    Ok(InterfaceProfile { points: chain.iter().map(|k| points[k]).collect(), closed, time: None })
}

/// Bilinear interpolation of a row-major grid at a point inside it.
pub fn bilinear<T: Real>(rho: &[T], nx: usize, ny: usize, p: [T; 2]) -> T {
    let x = p[0].max(T::zero()).min(from_usize(nx - 1));
    let y = p[1].max(T::zero()).min(from_usize(ny - 1));
    let x0 = x.floor().to_usize().unwrap().min(nx.saturating_sub(2));
    let y0 = y.floor().to_usize().unwrap().min(ny.saturating_sub(2));
    let (fx, fy) = (x - from_usize(x0), y - from_usize(y0));
    let v = |i: usize, j: usize| rho[(y0 + j).min(ny - 1) * nx + (x0 + i).min(nx - 1)];
    let one = T::one();
    v(0, 0) * (one - fx) * (one - fy) + v(1, 0) * fx * (one - fy) + v(0, 1) * (one - fx) * fy + v(1, 1) * fx * fy
}
