//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsParams {
    pub max_iters: usize,
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self { max_iters: 50_000, memory: 20, c1: 1e-4, c2: 0.9, grad_tol: 1e-9, max_line_evals: 25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    MaxIterations,
    Converged,
    /// No acceptable step was found; the best point so far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], a: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(x, p)| x + a * p).collect()
}

/// Minimiser of the cubic through `(a, fa, da)` and `(b, fb, db)`, or
/// bisection when it is not defined.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc >= 0.0 {
        let d2 = disc.sqrt().copysign(b - a);
        let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
        if t.is_finite() {
            return t;
        }
    }
    0.5 * (a + b)
}

struct Point {
    a: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

struct Search<'a, E> {
    x: &'a [f64],
    p: &'a [f64],
    f0: f64,
    d0: f64,
    params: &'a LbfgsParams,
    evals: usize,
    eval: &'a mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    best: Option<(f64, Vec<f64>, Vec<f64>)>,
}

impl<E> Search<'_, E> {
    fn at(&mut self, a: f64) -> Result<Point, E> {
        self.evals += 1;
        let xa = axpy(self.x, a, self.p);
        let (f, g) = (self.eval)(&xa)?;
        let f = if f.is_finite() && g.iter().all(|v| v.is_finite()) { f } else { f64::INFINITY };
        if f < self.best.as_ref().map_or(f64::INFINITY, |b| b.0) {
            self.best = Some((f, xa, g.clone()));
        }
        let d = if f.is_finite() { dot(&g, self.p) } else { f64::NAN };
        Ok(Point { a, f, d, g })
    }

    fn armijo(&self, pt: &Point) -> bool {
        pt.f <= self.f0 + self.params.c1 * pt.a * self.d0
    }

    fn curvature(&self, pt: &Point) -> bool {
        pt.d.abs() <= -self.params.c2 * self.d0
    }

    fn budget(&self) -> bool {
        self.evals < self.params.max_line_evals
    }

    /// Step satisfying the strong Wolfe conditions, if one is found.
    fn run(&mut self, a_init: f64) -> Result<Option<Point>, E> {
        let mut prev = Point { a: 0.0, f: self.f0, d: self.d0, g: Vec::new() };
        let mut a = a_init;
        let mut first = true;
        while self.budget() {
            let cur = self.at(a)?;
            if !cur.f.is_finite() {
                // shrink until the model is defined again
                a = 0.5 * (prev.a + a);
                continue;
            }
            if !self.armijo(&cur) || (!first && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature(&cur) {
                return Ok(Some(cur));
            }
            if cur.d >= 0.0 {
                return self.zoom(cur, prev);
            }
            first = false;
            a = 2.0 * cur.a;
            prev = cur;
        }
        Ok(None)
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<Option<Point>, E> {
        while self.budget() {
            let (l, h) = (lo.a.min(hi.a), lo.a.max(hi.a));
            let width = h - l;
            if width <= 1e-16 * h.max(1.0) {
                break;
            }
            let t = if hi.f.is_finite() && hi.d.is_finite() {
                cubic_min(lo.a, lo.f, lo.d, hi.a, hi.f, hi.d)
            } else {
                0.5 * (lo.a + hi.a)
            };
            let t = t.clamp(l + 0.1 * width, h - 0.1 * width);
            let cur = self.at(t)?;
            if !self.armijo(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Ok(Some(cur));
                }
                if cur.d * (hi.a - lo.a) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        // fall back to a sufficient-decrease point when curvature is not met
        Ok((lo.a > 0.0 && self.armijo(&lo)).then_some(lo))
    }
}

/// Minimises `eval` from `x0`. Evaluation errors abort; non-finite values
/// are treated as `+inf` and shrink the step. The returned point is the
/// best one evaluated, so the value never exceeds the starting value.
pub fn minimize<E>(
    x0: &[f64],
    params: &LbfgsParams,
    mut eval: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
) -> Result<LbfgsResult, E> {
    let (mut f, mut g) = eval(x0)?;
    let initial_value = f;
    let mut x = x0.to_vec();
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(params.memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;
    let mut best = (f, x.clone());

    while iterations < params.max_iters {
        if !f.is_finite() || norm(&g) < params.grad_tol {
            status = if f.is_finite() { LbfgsStatus::Converged } else { LbfgsStatus::LineSearchFailed };
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(q, s)| *q += (a - b) * s);
        }
        let mut p: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut d0 = dot(&g, &p);
        if !(d0 < 0.0) {
            history.clear();
            p = g.iter().map(|v| -v).collect();
            d0 = -dot(&g, &g);
        }
        let a_init = if history.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };

        let mut search = Search { x: &x, p: &p, f0: f, d0, params, evals: 0, eval: &mut eval, best: None };
        let found = search.run(a_init)?;
        evaluations += search.evals;
        let fallback = search.best.take();
        let Some(step) = found else {
            if let Some((fb, xb, _)) = fallback {
                if fb < best.0 {
                    best = (fb, xb);
                }
            }
            status = LbfgsStatus::LineSearchFailed;
            break;
        };
        iterations += 1;
        let x_new = axpy(&x, step.a, &p);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == params.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = step.f;
        g = step.g;
        if f < best.0 {
            best = (f, x.clone());
        }
    }
    Ok(LbfgsResult { x: best.1, value: best.0, initial_value, iterations, evaluations, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn quadratic(x: &[f64]) -> Result<(f64, Vec<f64>), Infallible> {
        // diagonal plus a coupling band, minimiser at x_k = k / 10
        let n = x.len();
        let d: Vec<f64> = (0..n).map(|k| x[k] - k as f64 / 10.0).collect();
        let mut g = vec![0.0; n];
        let mut f = 0.0;
        for k in 0..n {
            let a = 1.0 + k as f64;
            f += 0.5 * a * d[k] * d[k];
            g[k] += a * d[k];
            if k + 1 < n {
                f += 0.3 * d[k] * d[k + 1];
                g[k] += 0.3 * d[k + 1];
                g[k + 1] += 0.3 * d[k];
            }
        }
        Ok((f, g))
    }

    #[test]
    fn quadratic_minimum_within_fifty_iterations() {
        let p = LbfgsParams { max_iters: 50, grad_tol: 1e-13, ..Default::default() };
        let r = minimize(&[3.0; 10], &p, quadratic).unwrap();
        assert!(r.iterations <= 50);
        for (k, v) in r.x.iter().enumerate() {
            assert!((v - k as f64 / 10.0).abs() <= 1e-10, "x[{k}] = {v}");
        }
    }

    #[test]
    fn rosenbrock_from_the_classic_start() {
        let rosen = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Ok((f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
        };
        let p = LbfgsParams { max_iters: 500, grad_tol: 1e-12, ..Default::default() };
        let r = minimize(&[-1.2, 1.0], &p, rosen).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?} {:?}", r.x, r.status);
    }

    #[test]
    fn already_at_the_minimum() {
        let x0: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
        let r = minimize(&x0, &LbfgsParams::default(), quadratic).unwrap();
        assert!(r.iterations <= 1);
        assert_eq!(r.x, x0);
        assert_eq!(r.status, LbfgsStatus::Converged);
    }

    #[test]
    fn never_worse_than_the_start() {
        // a function whose line search cannot satisfy the conditions
        let nasty = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            let f = x[0].abs().sqrt() + if x[0] > 0.3 { f64::NAN } else { 0.0 };
            Ok((f, vec![if x[0] >= 0.0 { 1.0 } else { -1.0 }]))
        };
        let r = minimize(&[0.2], &LbfgsParams { max_iters: 100, ..Default::default() }, nasty).unwrap();
        assert!(r.value <= r.initial_value);
    }
}
