//! Fully connected network mapping `(x, y, t)` to nine positive populations.

use kwet_core::lattice::Q;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use super::tape::{softplus, Gradients, Tape, Var};
use crate::scalar::NetScalar;

pub const INPUTS: usize = 3;
pub const OUTPUTS: usize = Q;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("network parameters are not finite")]
    NonFinite,
    #[error("invalid layer dimensions: {0}")]
    Dims(String),
    #[error("input has {found} columns, expected {expected}")]
    InputWidth { expected: usize, found: usize },
    #[error("parameter vector has {found} entries, expected {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("normalisation range is empty in input {0}")]
    Normalization(usize),
}

/// Activation ids as stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Activation {
    Identity = 0,
    Tanh = 1,
    Softplus = 2,
}

impl Activation {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Self::Identity),
            1 => Some(Self::Tanh),
            2 => Some(Self::Softplus),
            _ => None,
        }
    }

    fn apply_in_place<T: NetScalar>(self, z: &mut Array2<T>) {
        match self {
            Self::Identity => {}
            Self::Tanh => match z.as_slice_mut() {
                Some(s) => T::tanh_slice(s),
                None => z.mapv_inplace(T::tanh),
            },
            Self::Softplus => z.mapv_inplace(softplus),
        }
    }
}

/// Min-max scaling of the physical inputs onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization<T> {
    pub lo: [T; INPUTS],
    pub hi: [T; INPUTS],
}

impl<T: NetScalar> Normalization<T> {
    pub fn new(lo: [T; INPUTS], hi: [T; INPUTS]) -> Result<Self, NetError> {
        for d in 0..INPUTS {
            if !(hi[d] > lo[d]) || !lo[d].is_finite() || !hi[d].is_finite() {
                return Err(NetError::Normalization(d));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Identity map: inputs are already normalised.
    pub fn unit() -> Self {
        Self { lo: [-T::one(); INPUTS], hi: [T::one(); INPUTS] }
    }

    /// `d xhat / d x` per input.
    pub fn scale(&self) -> [T; INPUTS] {
        std::array::from_fn(|d| (T::one() + T::one()) / (self.hi[d] - self.lo[d]))
    }

    pub fn apply(&self, p: [T; INPUTS]) -> [T; INPUTS] {
        let s = self.scale();
        std::array::from_fn(|d| (p[d] - self.lo[d]) * s[d] - T::one())
    }

    fn apply_rows(&self, x: ArrayView2<T>) -> Array2<T> {
        let s = self.scale();
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for d in 0..INPUTS {
                row[d] = (row[d] - self.lo[d]) * s[d] - T::one();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `out x in`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
    pub hidden: Activation,
    pub output: Activation,
    pub norm: Normalization<T>,
}

/// Tape handles of the weights and biases, in layer order.
#[derive(Debug, Clone)]
pub struct NetVars {
    pub layers: Vec<(Var, Var)>,
}

/// Taped network outputs: `f` is `n x 9`; `df[d]` holds the derivatives with
/// respect to physical input `d` (x, y, t), also `n x 9`.
#[derive(Debug, Clone, Copy)]
pub struct TapedOutput {
    pub f: Var,
    pub df: Option<[Var; INPUTS]>,
}

/// Per-hidden-layer dropout multipliers (0 or `1 / (1 - rate)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    pub masks: Vec<Array1<T>>,
}

/// Inverted-dropout mask of `len` units.
pub fn dropout_mask<T: NetScalar>(len: usize, rate: T, seed: u64) -> Array1<T> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    sample_mask(len, rate, &mut rng)
}

fn sample_mask<T: NetScalar>(len: usize, rate: T, rng: &mut impl Rng) -> Array1<T> {
    assert!(rate >= T::zero() && rate < T::one(), "dropout rate must lie in [0, 1)");
    let keep = T::one() / (T::one() - rate);
    let p = rate.to_f64().unwrap();
    Array1::from_shape_fn(len, |_| if rng.gen::<f64>() < p { T::zero() } else { keep })
}

impl<T: NetScalar> DropoutMasks<T> {
    pub fn sample(net: &Network<T>, rate: T, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let widths = net.dims();
        Self { masks: widths[1..widths.len() - 1].iter().map(|&w| sample_mask(w, rate, &mut rng)).collect() }
    }
}

impl<T: NetScalar> Network<T> {
    /// Glorot-uniform weights, zero biases, tanh hidden layers and a softplus
    /// output.
    pub fn new(hidden: &[usize], norm: Normalization<T>, seed: u64) -> Result<Self, NetError> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let dims = Self::layout(hidden)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_fn((fan_out, fan_in), |_| {
                        T::from_f64(rng.gen_range(-bound..bound)).unwrap()
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, hidden: Activation::Tanh, output: Activation::Softplus, norm })
    }

    /// All-zero parameters: every output is `softplus(0) = ln 2`.
    pub fn zeros(hidden: &[usize], norm: Normalization<T>) -> Result<Self, NetError> {
        let dims = Self::layout(hidden)?;
        let layers = dims
            .windows(2)
            .map(|w| Layer { weight: Array2::zeros((w[1], w[0])), bias: Array1::zeros(w[1]) })
            .collect();
        Ok(Self { layers, hidden: Activation::Tanh, output: Activation::Softplus, norm })
    }

    fn layout(hidden: &[usize]) -> Result<Vec<usize>, NetError> {
        if hidden.iter().any(|&w| w == 0) {
            return Err(NetError::Dims("zero-width hidden layer".into()));
        }
        let mut dims = vec![INPUTS];
        dims.extend_from_slice(hidden);
        dims.push(OUTPUTS);
        Ok(dims)
    }

    /// Checks dimensions and finiteness of a hand-assembled network.
    pub fn validate(&self) -> Result<(), NetError> {
        let first = self.layers.first().ok_or_else(|| NetError::Dims("no layers".into()))?;
        if first.weight.ncols() != INPUTS {
            return Err(NetError::Dims(format!("first layer takes {} inputs", first.weight.ncols())));
        }
        if self.layers.last().unwrap().weight.nrows() != OUTPUTS {
            return Err(NetError::Dims("last layer must have 9 outputs".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(NetError::Dims(format!("layer {k}: bias length {}", l.bias.len())));
            }
            if k > 0 && l.weight.ncols() != self.layers[k - 1].weight.nrows() {
                return Err(NetError::Dims(format!("layer {k} does not chain")));
            }
        }
        self.check_finite()
    }

    pub fn check_finite(&self) -> Result<(), NetError> {
        let ok = self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(NetError::NonFinite)
        }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].weight.ncols()];
        d.extend(self.layers.iter().map(|l| l.weight.nrows()));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights row-major then biases.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<(), NetError> {
        if p.len() != self.param_count() {
            return Err(NetError::ParamCount { expected: self.param_count(), found: p.len() });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Same layout as [`Network::params`], zero for parameters that did not
    /// reach the loss.
    pub fn flatten_gradients(&self, g: &Gradients<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for (k, l) in self.layers.iter().enumerate() {
            for (id, n) in [(2 * k, l.weight.len()), (2 * k + 1, l.bias.len())] {
                match g.by_param.get(id).and_then(Option::as_ref) {
                    Some(a) => out.extend(a.iter().copied()),
                    None => out.extend(std::iter::repeat(T::zero()).take(n)),
                }
            }
        }
        out
    }

    pub fn convert<U: NetScalar>(&self) -> Network<U> {
        let c = |v: &T| U::from_f64(v.to_f64().unwrap()).unwrap();
        Network {
            layers: self.layers.iter().map(|l| Layer { weight: l.weight.map(c), bias: l.bias.map(c) }).collect(),
            hidden: self.hidden,
            output: self.output,
            norm: Normalization { lo: self.norm.lo.map(|v| c(&v)), hi: self.norm.hi.map(|v| c(&v)) },
        }
    }

    /// Outputs for rows of already-normalised inputs.
    pub fn forward_normalized(&self, xhat: ArrayView2<T>) -> Result<Array2<T>, NetError> {
        if xhat.ncols() != INPUTS {
            return Err(NetError::InputWidth { expected: INPUTS, found: xhat.ncols() });
        }
        self.check_finite()?;
        let mut a = xhat.to_owned();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weight.t());
            z += &l.bias.view().insert_axis(Axis(0));
            if k == last { self.output } else { self.hidden }.apply_in_place(&mut z);
            a = z;
        }
        Ok(a)
    }

    /// Outputs for rows of physical `(x, y, t)`.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>, NetError> {
        if x.ncols() != INPUTS {
            return Err(NetError::InputWidth { expected: INPUTS, found: x.ncols() });
        }
        self.forward_normalized(self.norm.apply_rows(x).view())
    }

    pub fn predict_point(&self, p: [T; INPUTS]) -> Result<[T; OUTPUTS], NetError> {
        let x = Array2::from_shape_vec((1, INPUTS), p.to_vec()).unwrap();
        let f = self.predict(x.view())?;
        Ok(std::array::from_fn(|i| f[[0, i]]))
    }

    /// Outputs and their derivatives with respect to the physical inputs at
    /// one point: `(f, [df/dx, df/dy, df/dt])`.
    pub fn grad_inputs(&self, p: [T; INPUTS]) -> Result<([T; OUTPUTS], [[T; OUTPUTS]; INPUTS]), NetError> {
        self.check_finite()?;
        let mut tape = Tape::new();
        let vars = self.record(&mut tape);
        let x = Array2::from_shape_vec((1, INPUTS), p.to_vec()).unwrap();
        let out = self.forward_taped(&mut tape, &vars, &x, true, None);
        let f = tape.value(out.f);
        let df = out.df.unwrap().map(|v| {
            let d = tape.value(v);
            std::array::from_fn(|i| d[[0, i]])
        });
        Ok((std::array::from_fn(|i| f[[0, i]]), df))
    }

    /// Value and parameter gradient of a scalar loss built from the outputs
    /// at the rows of `x` (physical coordinates).
    pub fn grad_params(
        &self,
        x: &Array2<T>,
        loss: impl FnOnce(&mut Tape<T>, Var) -> Var,
    ) -> Result<(T, Vec<T>), NetError> {
        self.check_finite()?;
        let mut tape = Tape::new();
        let vars = self.record(&mut tape);
        let out = self.forward_taped(&mut tape, &vars, x, false, None);
        let l = loss(&mut tape, out.f);
        let value = tape.scalar(l);
        let g = tape.backward(l).expect("fresh tape with a scalar loss");
        Ok((value, self.flatten_gradients(&g)))
    }

    /// Puts the parameters on `tape` with ids `2k` (weights) and `2k + 1`
    /// (biases) for layer `k`.
    pub fn record(&self, tape: &mut Tape<T>) -> NetVars {
        NetVars {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(k, l)| {
                    let w = tape.param(2 * k, l.weight.clone());
                    let b = tape.param(2 * k + 1, l.bias.clone().insert_axis(Axis(0)));
                    (w, b)
                })
                .collect(),
        }
    }

    /// Records the forward pass over rows of physical inputs. With
    /// `tangents`, also carries the three input directions forward (stacked
    /// as a `3n`-row block) so the derivatives stay differentiable with
    /// respect to the parameters.
    pub fn forward_taped(
        &self,
        tape: &mut Tape<T>,
        vars: &NetVars,
        x: &Array2<T>,
        tangents: bool,
        dropout: Option<&DropoutMasks<T>>,
    ) -> TapedOutput {
        assert_eq!(x.ncols(), INPUTS, "inputs must have three columns");
        let n = x.nrows();
        let xhat = tape.constant(self.norm.apply_rows(x.view()));
        let mut tangent = None;
        if tangents {
            let s = self.norm.scale();
            let mut seed = Array2::zeros((INPUTS * n, INPUTS));
            for d in 0..INPUTS {
                for r in 0..n {
                    seed[[d * n + r, d]] = s[d];
                }
            }
            tangent = Some(tape.constant(seed));
        }
        let last = self.layers.len() - 1;
        let mut a = xhat;
        for (k, &(w, b)) in vars.layers.iter().enumerate() {
            let zw = tape.matmul_t(a, w);
            let z = tape.add(zw, b);
            let dz = tangent.map(|t| tape.matmul_t(t, w));
            let act = if k == last { self.output } else { self.hidden };
            let (mut y, deriv) = match act {
                Activation::Identity => (z, None),
                Activation::Tanh => {
                    let y = tape.tanh(z);
                    let d = dz.map(|_| tape.tanh_grad(y));
                    (y, d)
                }
                Activation::Softplus => {
                    let y = tape.softplus(z);
                    let d = dz.map(|_| tape.sigmoid(z));
                    (y, d)
                }
            };
            let mut dy = match (dz, deriv) {
                (Some(dz), Some(d)) => {
                    let d = tape.tile_rows(d, INPUTS);
                    Some(tape.mul(d, dz))
                }
                (dz, _) => dz,
            };
            if k != last {
                if let Some(m) = dropout.map(|d| &d.masks[k]) {
                    let m = tape.constant(m.clone().insert_axis(Axis(0)));
                    y = tape.mul(y, m);
                    dy = dy.map(|t| tape.mul(t, m));
                }
            }
            a = y;
            tangent = dy;
        }
        let df = tangent.map(|t| std::array::from_fn(|d| tape.slice_rows(t, d * n, n)));
        TapedOutput { f: a, df }
    }
}
