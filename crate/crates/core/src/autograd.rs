//! Tape-based reverse-mode automatic differentiation.
//!
//! Every backward rule is expressed with the same differentiable primitives as
//! the forward pass, so a gradient computed with `create_graph = true` is itself
//! a node on the tape and can be differentiated again. The gradient penalty
//! relies on this: it differentiates the critic's input-gradient norm with
//! respect to the critic parameters.
//!
//! Matrix-style ops (`matmul`, `sum_rows`, `broadcast_rows`, ...) read their
//! operand as 2-D `[rows, cols]`; callers reshape first.

use std::sync::Arc;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Marker in a [`GatherIndex`] for "no source element" (zero padding / dropped).
pub const NO_SOURCE: u32 = u32::MAX;

/// Fixed linear index map between a source buffer and a gathered buffer.
///
/// `gather` reads `out[i] = src[idx[i]]`; `scatter_add` is its adjoint,
/// `src[idx[i]] += out[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatherIndex {
    pub src_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub idx: Vec<u32>,
}

impl GatherIndex {
    pub fn new(src_shape: Vec<usize>, out_shape: Vec<usize>, idx: Vec<u32>) -> Self {
        debug_assert_eq!(out_shape.iter().product::<usize>(), idx.len());
        GatherIndex {
            src_shape,
            out_shape,
            idx,
        }
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var, T),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    SumRows(Var),
    BroadcastRows(Var),
    SumCols(Var),
    BroadcastCols(Var),
    SumAll(Var),
    BroadcastAll(Var),
    MulConst(Var, Arc<Tensor<T>>),
    Pow(Var, T),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Reshape(Var),
    Gather(Var, Arc<GatherIndex>),
    ScatterAdd(Var, Arc<GatherIndex>),
}

impl<T> Op<T> {
    fn parents(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul { a, b, .. } => [Some(a), Some(b)],
            Scale(a, _)
            | AddScalar(a, _)
            | SumRows(a)
            | BroadcastRows(a)
            | SumCols(a)
            | BroadcastCols(a)
            | SumAll(a)
            | BroadcastAll(a)
            | MulConst(a, _)
            | Pow(a, _)
            | Exp(a)
            | Log(a)
            | Tanh(a)
            | Sigmoid(a)
            | Softplus(a)
            | Reshape(a)
            | Gather(a, _)
            | ScatterAdd(a, _) => [Some(a), None],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single-use computation tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [m, rest @ ..] => (*m, rest.iter().product()),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that never records gradients; every node is a constant.
    pub fn inference() -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        let rg = self.grad_enabled;
        self.push(value, Op::Leaf, rg)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.grad_enabled
            && op
                .parents()
                .iter()
                .flatten()
                .any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, rg)
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise op on mismatched shapes");
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        Tensor::new(x.shape(), data).expect("shape preserved")
    }

    // ---- primitives -------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x + y);
        self.record(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x - y);
        self.record(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x * y);
        self.record(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.record(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.record(v, Op::AddScalar(a, s))
    }

    /// `op(a) @ op(b)` for 2-D operands.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (ar, ac) = dims2(self.shape(a));
        let (br, bc) = dims2(self.shape(b));
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            ta,
            self.value(b).data(),
            tb,
            T::zero(),
            &mut out,
        );
        let v = Tensor::new(&[m, n], out).expect("matmul shape");
        self.record(v, Op::MatMul { a, b, ta, tb })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// `[m, n] -> [n]`, summing over rows.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (m, n) = dims2(self.shape(a));
        let x = self.value(a).data();
        let mut out = vec![T::zero(); n];
        for r in 0..m {
            for (o, &v) in out.iter_mut().zip(&x[r * n..(r + 1) * n]) {
                *o += v;
            }
        }
        self.record(Tensor::new(&[n], out).unwrap(), Op::SumRows(a))
    }

    /// `[n] -> [m, n]`, repeating the vector on every row.
    pub fn broadcast_rows(&mut self, a: Var, m: usize) -> Var {
        let x = self.value(a).data();
        let n = x.len();
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(x);
        }
        self.record(Tensor::new(&[m, n], out).unwrap(), Op::BroadcastRows(a))
    }

    /// `[m, n] -> [m]`, summing within each row.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (m, n) = dims2(self.shape(a));
        let x = self.value(a).data();
        let out = (0..m)
            .map(|r| x[r * n..(r + 1) * n].iter().copied().sum())
            .collect();
        self.record(Tensor::new(&[m], out).unwrap(), Op::SumCols(a))
    }

    /// `[m] -> [m, n]`, repeating each entry across its row.
    pub fn broadcast_cols(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a).data();
        let m = x.len();
        let mut out = Vec::with_capacity(m * n);
        for &v in x {
            out.extend(std::iter::repeat_n(v, n));
        }
        self.record(Tensor::new(&[m, n], out).unwrap(), Op::BroadcastCols(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.record(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Single-element tensor repeated into `shape`.
    pub fn broadcast_all(&mut self, a: Var, shape: &[usize]) -> Var {
        assert_eq!(self.value(a).len(), 1, "broadcast_all expects a scalar");
        let v = Tensor::full(shape, self.value(a).data()[0]);
        self.record(v, Op::BroadcastAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum_all(a);
        self.scale(s, T::one() / T::from_usize_lossy(n))
    }

    /// Elementwise product with a tensor that is not differentiated.
    pub fn mul_const(&mut self, a: Var, c: Arc<Tensor<T>>) -> Var {
        assert_eq!(self.shape(a), c.shape(), "mul_const shape mismatch");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(c.data())
            .map(|(&x, &m)| x * m)
            .collect();
        let v = Tensor::new(c.shape(), data).unwrap();
        self.record(v, Op::MulConst(a, c))
    }

    pub fn pow(&mut self, a: Var, p: T) -> Var {
        let v = self.value(a).map(|x| x.powf(p));
        self.record(v, Op::Pow(a, p))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.exp());
        self.record(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.ln());
        self.record(v, Op::Log(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.tanh());
        self.record(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.record(v, Op::Sigmoid(a))
    }

    /// `ln(1 + e^x)` evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.record(v, Op::Softplus(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self
            .value(a)
            .clone()
            .reshape(shape)
            .expect("reshape element count");
        self.record(v, Op::Reshape(a))
    }

    pub fn gather(&mut self, a: Var, index: Arc<GatherIndex>) -> Var {
        let src = self.value(a);
        assert_eq!(
            src.len(),
            index.src_shape.iter().product::<usize>(),
            "gather source size"
        );
        let x = src.data();
        let data = index
            .idx
            .iter()
            .map(|&i| {
                if i == NO_SOURCE {
                    T::zero()
                } else {
                    x[i as usize]
                }
            })
            .collect();
        let v = Tensor::new(&index.out_shape, data).unwrap();
        self.record(v, Op::Gather(a, index))
    }

    pub fn scatter_add(&mut self, a: Var, index: Arc<GatherIndex>) -> Var {
        let g = self.value(a);
        assert_eq!(g.len(), index.idx.len(), "scatter_add input size");
        let mut out = vec![T::zero(); index.src_shape.iter().product()];
        for (&i, &v) in index.idx.iter().zip(g.data()) {
            if i != NO_SOURCE {
                out[i as usize] += v;
            }
        }
        let v = Tensor::new(&index.src_shape, out).unwrap();
        self.record(v, Op::ScatterAdd(a, index))
    }

    // ---- composites -------------------------------------------------------

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    /// `x * slope` where `x < 0`, identity elsewhere.
    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let mask = self
            .value(a)
            .map(|x| if x > T::zero() { T::one() } else { slope });
        self.mul_const(a, Arc::new(mask))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    /// Row-wise log-softmax of a `[m, n]` matrix.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (m, n) = dims2(self.shape(a));
        let x = self.value(a).data();
        let mut lse = Vec::with_capacity(m);
        for r in 0..m {
            let row = &x[r * n..(r + 1) * n];
            let mx = row.iter().fold(T::neg_infinity(), |p, &q| p.max(q));
            let s: T = row.iter().map(|&v| (v - mx).exp()).sum();
            lse.push(mx + s.ln());
        }
        // The shift is treated as a constant: log-softmax is invariant to it,
        // so its contribution to every derivative is exactly zero.
        let shift = self.constant(Tensor::new(&[m], lse).unwrap());
        let shift = self.broadcast_cols(shift, n);
        let a2 = self.reshape(a, &[m, n]);
        let centered = self.sub(a2, shift);
        let e = self.exp(centered);
        let z = self.sum_cols(e);
        let logz = self.log(z);
        let logz = self.broadcast_cols(logz, n);
        self.sub(centered, logz)
    }

    // ---- differentiation --------------------------------------------------

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// With `create_graph` the returned gradients are differentiable nodes;
    /// otherwise they are constants. Entries are `None` when `output` does not
    /// depend on that variable.
    pub fn grad(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Vec<Option<Var>> {
        assert_eq!(self.value(output).len(), 1, "grad needs a scalar output");
        let end = output.0 + 1;
        // Only propagate into nodes downstream of some `wrt` leaf.
        let mut relevant = vec![false; end];
        for w in wrt {
            if w.0 < end {
                relevant[w.0] = true;
            }
        }
        for i in 0..end {
            if !relevant[i] && self.nodes[i].requires_grad {
                relevant[i] = self.nodes[i]
                    .op
                    .parents()
                    .iter()
                    .flatten()
                    .any(|p| relevant[p.0]);
            }
        }

        let saved = self.grad_enabled;
        self.grad_enabled = create_graph;
        let mut grads: Vec<Option<Var>> = vec![None; end];
        grads[output.0] = Some(self.constant(Tensor::full(self.shape(output), T::one())));

        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (p, contrib) in self.backward_rule(Var(i), &op, g, &relevant) {
                grads[p.0] = Some(match grads[p.0] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib),
                });
            }
        }
        self.grad_enabled = saved;
        wrt.iter()
            .map(|w| grads.get(w.0).copied().flatten())
            .collect()
    }

    fn backward_rule(
        &mut self,
        out: Var,
        op: &Op<T>,
        g: Var,
        relevant: &[bool],
    ) -> Vec<(Var, Var)> {
        let want = |v: Var| relevant[v.0];
        let mut res = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(a) {
                    res.push((a, g));
                }
                if want(b) {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    res.push((a, g));
                }
                if want(b) {
                    let n = self.neg(g);
                    res.push((b, n));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    let v = self.mul(g, b);
                    res.push((a, v));
                }
                if want(b) {
                    let v = self.mul(g, a);
                    res.push((b, v));
                }
            }
            Op::Scale(a, s) => {
                if want(a) {
                    let v = self.scale(g, s);
                    res.push((a, v));
                }
            }
            Op::AddScalar(a, _) => {
                if want(a) {
                    res.push((a, g));
                }
            }
            Op::MatMul { a, b, ta, tb } => {
                // C = op(A) op(B); dA = dC op(B)^T (transposed back if ta), etc.
                if want(a) {
                    let da = if ta {
                        self.matmul_t(b, g, tb, true)
                    } else {
                        self.matmul_t(g, b, false, !tb)
                    };
                    let da = self.reshape(da, &self.shape(a).to_vec());
                    res.push((a, da));
                }
                if want(b) {
                    let db = if tb {
                        self.matmul_t(g, a, true, ta)
                    } else {
                        self.matmul_t(a, g, !ta, false)
                    };
                    let db = self.reshape(db, &self.shape(b).to_vec());
                    res.push((b, db));
                }
            }
            Op::SumRows(a) => {
                if want(a) {
                    let (m, _) = dims2(self.shape(a));
                    let v = self.broadcast_rows(g, m);
                    let v = self.reshape(v, &self.shape(a).to_vec());
                    res.push((a, v));
                }
            }
            Op::BroadcastRows(a) => {
                if want(a) {
                    let v = self.sum_rows(g);
                    let v = self.reshape(v, &self.shape(a).to_vec());
                    res.push((a, v));
                }
            }
            Op::SumCols(a) => {
                if want(a) {
                    let (_, n) = dims2(self.shape(a));
                    let v = self.broadcast_cols(g, n);
                    let v = self.reshape(v, &self.shape(a).to_vec());
                    res.push((a, v));
                }
            }
            Op::BroadcastCols(a) => {
                if want(a) {
                    let v = self.sum_cols(g);
                    let v = self.reshape(v, &self.shape(a).to_vec());
                    res.push((a, v));
                }
            }
            Op::SumAll(a) => {
                if want(a) {
                    let shape = self.shape(a).to_vec();
                    let v = self.broadcast_all(g, &shape);
                    res.push((a, v));
                }
            }
            Op::BroadcastAll(a) => {
                if want(a) {
                    let v = self.sum_all(g);
                    let v = self.reshape(v, &self.shape(a).to_vec());
                    res.push((a, v));
                }
            }
            Op::MulConst(a, ref c) => {
                if want(a) {
                    let v = self.mul_const(g, c.clone());
                    res.push((a, v));
                }
            }
            Op::Pow(a, p) => {
                if want(a) {
                    let d = self.pow(a, p - T::one());
                    let d = self.scale(d, p);
                    let v = self.mul(g, d);
                    res.push((a, v));
                }
            }
            Op::Exp(a) => {
                if want(a) {
                    let v = self.mul(g, out);
                    res.push((a, v));
                }
            }
            Op::Log(a) => {
                if want(a) {
                    let inv = self.pow(a, -T::one());
                    let v = self.mul(g, inv);
                    res.push((a, v));
                }
            }
            Op::Tanh(a) => {
                if want(a) {
                    let y2 = self.mul(out, out);
                    let d = self.scale(y2, -T::one());
                    let d = self.add_scalar(d, T::one());
                    let v = self.mul(g, d);
                    res.push((a, v));
                }
            }
            Op::Sigmoid(a) => {
                if want(a) {
                    let one_minus = self.scale(out, -T::one());
                    let one_minus = self.add_scalar(one_minus, T::one());
                    let d = self.mul(out, one_minus);
                    let v = self.mul(g, d);
                    res.push((a, v));
                }
            }
            Op::Softplus(a) => {
                if want(a) {
                    let s = self.sigmoid(a);
                    let v = self.mul(g, s);
                    res.push((a, v));
                }
            }
            Op::Reshape(a) => {
                if want(a) {
                    let v = self.reshape(g, &self.shape(a).to_vec());
                    res.push((a, v));
                }
            }
            Op::Gather(a, ref idx) => {
                if want(a) {
                    let v = self.scatter_add(g, idx.clone());
                    res.push((a, v));
                }
            }
            Op::ScatterAdd(a, ref idx) => {
                if want(a) {
                    let v = self.gather(g, idx.clone());
                    res.push((a, v));
                }
            }
        }
        res
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + ln(1 + e^{-|x|})
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
