//! Matrix-valued reverse-mode tape.
//!
//! Every node holds a dense 2-D value. Binary elementwise operations
//! broadcast a dimension of length 1 against the other operand, and their
//! adjoints are summed back over the broadcast axes. Nodes are appended in
//! evaluation order, so the reverse of insertion order is a reverse
//! topological order and [`Tape::backward`] visits each node once.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use thiserror::Error;

use crate::scalar::NetScalar;

/// Handle to a node of one [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TapeError {
    #[error("tape already consumed by a backward pass")]
    Consumed,
    #[error("backward root must be 1 x 1, found {0} x {1}")]
    NonScalarRoot(usize, usize),
    #[error("variable {0} is not on this tape")]
    UnknownVar(usize),
}

#[derive(Debug, Clone)]
enum Op<T> {
    Const,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var, T),
    Tanh(Var),
    TanhGrad(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Square(Var),
    Recip(Var),
    TileRows(Var, usize),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    SumAll(Var),
}

/// Parameter adjoints indexed by the id given to [`Tape::param`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub by_param: Vec<Option<Array2<T>>>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    values: Vec<Array2<T>>,
    ops: Vec<Op<T>>,
    consumed: bool,
}

fn broadcast_dim(a: usize, b: usize) -> usize {
    match (a, b) {
        _ if a == b => a,
        (1, n) | (n, 1) => n,
        _ => panic!("shapes do not broadcast: {a} vs {b}"),
    }
}

/// Sums `g` over the axes along which a value of `shape` was broadcast.
fn reduce_to<T: NetScalar>(g: Array2<T>, shape: (usize, usize)) -> Array2<T> {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn accumulate<T: NetScalar>(adj: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
    match &mut adj[v.0] {
        Some(a) => *a += &g,
        slot => *slot = Some(g),
    }
}

/// `adj[v] += a . b`.
fn accumulate_product<T: NetScalar>(adj: &mut [Option<Array2<T>>], v: Var, a: ArrayView2<T>, b: ArrayView2<T>) {
    match &mut adj[v.0] {
        Some(acc) => general_mat_mul(T::one(), &a, &b, T::one(), acc),
        slot => *slot = Some(a.dot(&b)),
    }
}

fn sigmoid<T: NetScalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Overflow-safe `ln(1 + e^z)`.
pub fn softplus<T: NetScalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

impl<T: NetScalar> Tape<T> {
    pub fn new() -> Self {
        Self { values: Vec::new(), ops: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    fn push(&mut self, op: Op<T>, value: Array2<T>) -> Var {
        assert!(!self.consumed, "recording on a consumed tape");
        self.ops.push(op);
        self.values.push(value);
        Var(self.ops.len() - 1)
    }

    /// Value of a node. Panics after [`Tape::backward`] has consumed the tape.
    pub fn value(&self, v: Var) -> &Array2<T> {
        assert!(!self.consumed, "reading a consumed tape");
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(Op::Const, value)
    }

    /// Leaf whose adjoint is reported under `id` by [`Tape::backward`].
    pub fn param(&mut self, id: usize, value: Array2<T>) -> Var {
        self.push(Op::Param(id), value)
    }

    /// `a . b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a . b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(Op::MatMulT(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        broadcast_dim(ra, rb);
        broadcast_dim(ca, cb);
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a) * c;
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a) + c;
        self.push(Op::AddScalar(a, c), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut v = self.value(a).as_standard_layout().into_owned();
        T::tanh_slice(v.as_slice_mut().expect("standard layout"));
        self.push(Op::Tanh(a), v)
    }

    /// `1 - a^2`, the tanh derivative written in terms of the tanh output.
    pub fn tanh_grad(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|y| T::one() - y * y);
        self.push(Op::TanhGrad(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(Op::Softplus(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(T::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(T::recip);
        self.push(Op::Recip(a), v)
    }

    /// `k` copies of `a` stacked vertically.
    pub fn tile_rows(&mut self, a: Var, k: usize) -> Var {
        let x = self.value(a);
        let views: Vec<_> = (0..k).map(|_| x.view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("equal widths");
        self.push(Op::TileRows(a, k), v)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(Op::SliceRows(a, start, len), v)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols(a, start, len), v)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(Op::SumAll(a), v)
    }

    /// Adjoints of the 1 x 1 node `root` with respect to every parameter leaf.
    /// Consumes the recorded values; a second call fails.
    pub fn backward(&mut self, root: Var) -> Result<Gradients<T>, TapeError> {
        if self.consumed {
            return Err(TapeError::Consumed);
        }
        if root.0 >= self.ops.len() {
            return Err(TapeError::UnknownVar(root.0));
        }
        let (r, c) = self.values[root.0].dim();
        if (r, c) != (1, 1) {
            return Err(TapeError::NonScalarRoot(r, c));
        }
        let n_params = self
            .ops
            .iter()
            .filter_map(|op| match op {
                Op::Param(id) => Some(id + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut grads: Vec<Option<Array2<T>>> = vec![None; n_params];
        let mut adj: Vec<Option<Array2<T>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Array2::ones((1, 1)));
        let values = &self.values;
        let val = |v: Var| &values[v.0];
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match self.ops[i] {
                Op::Const => {}
                Op::Param(id) => match &mut grads[id] {
                    Some(acc) => *acc += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    accumulate_product(&mut adj, a, g.view(), val(b).t());
                    accumulate_product(&mut adj, b, val(a).t(), g.view());
                }
                Op::MatMulT(a, b) => {
                    accumulate_product(&mut adj, a, g.view(), val(b).view());
                    accumulate_product(&mut adj, b, g.t(), val(a).view());
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, b, reduce_to(g.clone(), val(b).dim()));
                    accumulate(&mut adj, a, reduce_to(g, val(a).dim()));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, b, reduce_to(g.mapv(|v| -v), val(b).dim()));
                    accumulate(&mut adj, a, reduce_to(g, val(a).dim()));
                }
                Op::Mul(a, b) => {
                    let ga = &g * val(b);
                    let gb = &g * val(a);
                    accumulate(&mut adj, a, reduce_to(ga, val(a).dim()));
                    accumulate(&mut adj, b, reduce_to(gb, val(b).dim()));
                }
                Op::Scale(a, c) => accumulate(&mut adj, a, g * c),
                Op::AddScalar(a, _) => accumulate(&mut adj, a, g),
                Op::Tanh(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(&values[i]).for_each(|g, &y| *g = *g * (T::one() - y * y));
                    accumulate(&mut adj, a, g);
                }
                Op::TanhGrad(a) => {
                    let mut g = g;
                    let two = T::one() + T::one();
                    Zip::from(&mut g).and(val(a)).for_each(|g, &y| *g = -two * y * *g);
                    accumulate(&mut adj, a, g);
                }
                Op::Sigmoid(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(&values[i]).for_each(|g, &s| *g = *g * s * (T::one() - s));
                    accumulate(&mut adj, a, g);
                }
                Op::Softplus(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(val(a)).for_each(|g, &z| *g = *g * sigmoid(z));
                    accumulate(&mut adj, a, g);
                }
                Op::Exp(a) => accumulate(&mut adj, a, g * &values[i]),
                Op::Square(a) => {
                    let mut g = g;
                    let two = T::one() + T::one();
                    Zip::from(&mut g).and(val(a)).for_each(|g, &x| *g = *g * two * x);
                    accumulate(&mut adj, a, g);
                }
                Op::Recip(a) => {
                    let mut g = g;
                    Zip::from(&mut g).and(&values[i]).for_each(|g, &y| *g = -*g * y * y);
                    accumulate(&mut adj, a, g);
                }
                Op::TileRows(a, k) => {
                    let rows = val(a).nrows();
                    let mut acc = g.slice(s![0..rows, ..]).to_owned();
                    for b in 1..k {
                        acc += &g.slice(s![b * rows..(b + 1) * rows, ..]);
                    }
                    accumulate(&mut adj, a, acc);
                }
                Op::SliceRows(a, start, len) => {
                    let slot = adj[a.0].get_or_insert_with(|| Array2::zeros(val(a).dim()));
                    let mut part = slot.slice_mut(s![start..start + len, ..]);
                    part += &g;
                }
                Op::SliceCols(a, start, len) => {
                    let slot = adj[a.0].get_or_insert_with(|| Array2::zeros(val(a).dim()));
                    let mut part = slot.slice_mut(s![.., start..start + len]);
                    part += &g;
                }
                Op::SumAll(a) => accumulate(&mut adj, a, Array2::from_elem(val(a).dim(), g[[0, 0]])),
            }
        }
        self.consumed = true;
        self.values = Vec::new();
        Ok(Gradients { by_param: grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn grad_of(build: &impl Fn(&mut Tape<f64>, Var) -> Var, x: Array2<f64>) -> Array2<f64> {
        let mut tape = Tape::new();
        let p = tape.param(0, x);
        let out = build(&mut tape, p);
        let root = tape.sum_all(out);
        tape.backward(root).unwrap().by_param.remove(0).unwrap()
    }

    fn value_of(build: &impl Fn(&mut Tape<f64>, Var) -> Var, x: Array2<f64>) -> f64 {
        let mut tape = Tape::new();
        let p = tape.param(0, x);
        let out = build(&mut tape, p);
        tape.value(out).sum()
    }

    fn check_fd(build: impl Fn(&mut Tape<f64>, Var) -> Var, x: Array2<f64>) {
        let g = grad_of(&build, x.clone());
        let h = 1e-6;
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            let fd = (value_of(&build, xp) - value_of(&build, xm)) / (2.0 * h);
            assert!((fd - g[[r, c]]).abs() <= 1e-6 * (1.0 + fd.abs()), "{idx}: fd {fd} vs {}", g[[r, c]]);
        }
    }

    fn x0() -> Array2<f64> {
        array![[0.3, -1.2, 0.7], [1.1, 0.4, -0.5]]
    }

    #[test]
    fn unary_ops_match_finite_differences() {
        check_fd(|t, x| t.tanh(x), x0());
        check_fd(|t, x| { let y = t.tanh(x); t.tanh_grad(y) }, x0());
        check_fd(|t, x| t.sigmoid(x), x0());
        check_fd(|t, x| t.softplus(x), x0());
        check_fd(|t, x| t.exp(x), x0());
        check_fd(|t, x| t.square(x), x0());
        check_fd(|t, x| t.recip(x), x0());
        check_fd(|t, x| t.scale(x, -2.5), x0());
        check_fd(|t, x| { let y = t.add_scalar(x, 3.0); t.square(y) }, x0());
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        check_fd(|t, x| { let y = t.tile_rows(x, 3); t.square(y) }, x0());
        check_fd(|t, x| { let y = t.slice_rows(x, 1, 1); t.exp(y) }, x0());
        check_fd(|t, x| { let y = t.slice_cols(x, 1, 2); let z = t.slice_cols(x, 0, 2); t.mul(y, z) }, x0());
    }

    #[test]
    fn broadcasting_binary_ops() {
        let row = array![[0.5, -1.0, 2.0]];
        let col = array![[1.5], [-0.25]];
        for other in [row.clone(), col.clone(), array![[0.7]], x0().mapv(|v| v * 0.3 + 1.0)] {
            let o = other.clone();
            check_fd(move |t, x| { let c = t.constant(o.clone()); let m = t.mul(x, c); t.square(m) }, x0());
            let o = other.clone();
            check_fd(move |t, x| { let c = t.constant(o.clone()); let m = t.sub(c, x); t.square(m) }, x0());
            let o = other.clone();
            // the broadcast operand as the differentiated one
            check_fd(move |t, x| { let c = t.constant(x0()); let m = t.mul(c, x); let a = t.add(m, c); t.square(a) }, o);
        }
    }

    #[test]
    fn matmul_gradients() {
        let b = array![[0.2, -0.3], [0.9, 0.1], [-0.4, 0.8]];
        let bb = b.clone();
        check_fd(move |t, x| { let c = t.constant(bb.clone()); let p = t.matmul(x, c); t.square(p) }, x0());
        let bt = b.t().to_owned();
        check_fd(move |t, x| { let c = t.constant(bt.clone()); let p = t.matmul_t(x, c); t.square(p) }, x0());
        check_fd(move |t, w| { let c = t.constant(x0()); let p = t.matmul_t(c, w); t.tanh(p) }, b.t().to_owned());
        check_fd(|t, w| { let c = t.constant(x0()); let p = t.matmul(c, w); t.tanh(p) }, array![[0.1], [0.2], [-0.3]]);
    }

    #[test]
    fn reused_nodes_accumulate() {
        // f = sum(x * x + x) -> df/dx = 2x + 1
        let g = grad_of(&|t: &mut Tape<f64>, x| { let a = t.mul(x, x); t.add(a, x) }, x0());
        assert!((g - x0().mapv(|v| 2.0 * v + 1.0)).iter().all(|e| e.abs() < 1e-15));
    }

    #[test]
    fn consumed_tape_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(0, array![[1.0]]);
        let y = tape.square(p);
        assert_eq!(tape.backward(y).unwrap().by_param[0].as_ref().unwrap()[[0, 0]], 2.0);
        assert!(tape.is_consumed());
        assert_eq!(tape.backward(y).unwrap_err(), TapeError::Consumed);
    }

    #[test]
    fn root_must_be_scalar() {
        let mut tape = Tape::<f64>::new();
        let p = tape.param(0, x0());
        assert_eq!(tape.backward(p).unwrap_err(), TapeError::NonScalarRoot(2, 3));
        let c = tape.constant(array![[2.0]]);
        let g = tape.backward(c).unwrap();
        assert!(g.by_param[0].is_none());
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0_f64), 1000.0);
        assert!(softplus(-1000.0_f64) >= 0.0);
        assert!((softplus(0.0_f64) - std::f64::consts::LN_2).abs() < 1e-16);
    }
}
