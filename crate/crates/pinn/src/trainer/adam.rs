use num_traits::Float;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

/// Scales `g` in place to norm at most `clip`; returns the norm before
/// clipping.
pub fn clip_global_norm<T: Float>(g: &mut [T], clip: T) -> T {
    let norm = g.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    if norm > clip {
        let s = clip / norm;
        g.iter_mut().for_each(|v| *v = *v * s);
    }
    norm
}

impl<T: Float> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    /// Clips `grad` by global norm, then applies one bias-corrected update.
    /// Returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut [T], grad: &[T], p: &AdamParams) -> Result<T, TrainError> {
        if grad.len() != params.len() || self.m.len() != params.len() {
            return Err(TrainError::Config("gradient and parameter lengths differ".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient { step: self.t });
        }
        let mut g = grad.to_vec();
        let norm = clip_global_norm(&mut g, T::from(p.clip_norm).unwrap());
        self.t += 1;
        let c = |v: f64| T::from(v).unwrap();
        let (b1, b2) = (c(p.beta1), c(p.beta2));
        let bc1 = c(1.0 - p.beta1.powf(self.t as f64));
        let bc2 = c(1.0 - p.beta2.powf(self.t as f64));
        let (lr, eps) = (c(p.lr), c(p.eps));
        for k in 0..params.len() {
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * g[k];
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * g[k] * g[k];
            let mh = self.m[k] / bc1;
            let vh = self.v[k] / bc2;
            params[k] = params[k] - lr * mh / (vh.sqrt() + eps);
        }
        Ok(norm)
    }
}
