//! Reverse-mode differentiation over a recorded sequence of tensor ops.
//!
//! A `Graph` is the computation record for one forward pass. Nodes are
//! appended in evaluation order, so walking them backwards is a valid
//! topological order and each node is visited once.

use super::params::{Gradients, ParamId, ParamStore};
use super::{log_sum_exp_slice, Tensor};
use crate::crf;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Conv1dSame { input: Var, filters: Var, bias: Var },
    MaxPoolTime { input: Var, argmax: Vec<usize> },
    LogSumExp(Var),
    Sum(Var),
    CrfNll { emissions: Var, transitions: Var, d_emissions: Tensor, d_transitions: Tensor },
}

struct Node {
    value: Value,
    op: Op,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient outside the record.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// `(m,k)·(k,)` or `(m,k)·(k,n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().is_empty() || tb.shape().len() > 2 || ta.cols() != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k) = (ta.rows(), ta.cols());
        let out = if tb.shape().len() == 1 {
            let x = tb.data();
            let y = (0..m)
                .map(|i| ta.row(i).iter().zip(x).map(|(w, v)| w * v).sum())
                .collect();
            Tensor::vector(y)
        } else {
            let n = tb.cols();
            let mut y = vec![0.0; m * n];
            for i in 0..m {
                let yr = &mut y[i * n..(i + 1) * n];
                for (kk, &aik) in ta.row(i).iter().enumerate().take(k) {
                    if aik == 0.0 {
                        continue;
                    }
                    for (yv, bv) in yr.iter_mut().zip(tb.row(kk)) {
                        *yv += aik * bv;
                    }
                }
            }
            Tensor::matrix(m, n, y)?
        };
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Left-to-right sum of same-shaped operands.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| Error::invalid("add_all of nothing"))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("elementwise_mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, k: Tensor) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape() != k.shape() {
            return Err(shape_err("mul_const", ta, &k));
        }
        let data = ta.data().iter().zip(k.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape(), data)?;
        Ok(self.push(t, Op::MulConst(a, k)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape(), ta.data().iter().map(|x| x * k).collect()).expect("same shape");
        self.push(t, Op::Scale(a, k))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        Tensor::new(ta.shape(), ta.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    /// Concatenation of 1-D tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 1 {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: t.shape().to_vec(),
                    rhs: vec![],
                });
            }
            data.extend_from_slice(t.data());
        }
        if data.is_empty() {
            return Err(Error::invalid("concat of nothing"));
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Stacks equal-length 1-D tensors into an `(n, d)` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::invalid("stack_rows of nothing"))?;
        let d = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = self.value(r);
            if t.shape() != [d] {
                return Err(shape_err("stack_rows", self.value(*first), t));
            }
            data.extend_from_slice(t.data());
        }
        let t = Tensor::matrix(rows.len(), d, data)?;
        Ok(self.push(t, Op::StackRows(rows.to_vec())))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || i >= ta.rows() {
            return Err(Error::Shape {
                op: "row",
                lhs: ta.shape().to_vec(),
                rhs: vec![i],
            });
        }
        let t = Tensor::vector(ta.row(i).to_vec());
        Ok(self.push(t, Op::Row(a, i)))
    }

    /// 1-D convolution over rows with zero "same" padding.
    /// `input (l, c)`, `filters (f, w, c)`, `bias (f)` -> `(l, f)`.
    pub fn conv1d_same(&mut self, input: Var, filters: Var, bias: Var) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(filters), self.value(bias));
        if x.shape().len() != 2 || k.shape().len() != 3 || k.shape()[2] != x.cols() || b.shape() != [k.shape()[0]] {
            return Err(shape_err("conv1d", x, k));
        }
        let (l, c) = (x.rows(), x.cols());
        let (f, w) = (k.shape()[0], k.shape()[1]);
        let left = (w - 1) / 2;
        let mut out = vec![0.0; l * f];
        for t in 0..l {
            for j in 0..w {
                let Some(src) = (t + j).checked_sub(left).filter(|&s| s < l) else {
                    continue;
                };
                let xr = x.row(src);
                for (ci, &xv) in xr.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for fi in 0..f {
                        out[t * f + fi] += k.data()[(fi * w + j) * c + ci] * xv;
                    }
                }
            }
            for fi in 0..f {
                out[t * f + fi] += b.data()[fi];
            }
        }
        let t = Tensor::matrix(l, f, out)?;
        Ok(self.push(t, Op::Conv1dSame { input, filters, bias }))
    }

    /// Column-wise maximum of an `(n, d)` matrix; ties go to the first row.
    pub fn max_pool_over_time(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(Error::Shape {
                op: "max_pool_over_time",
                lhs: ta.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (n, d) = (ta.rows(), ta.cols());
        let mut argmax = vec![0; d];
        let mut out = ta.row(0).to_vec();
        for r in 1..n {
            for (j, &v) in ta.row(r).iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = r;
                }
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MaxPoolTime { input: a, argmax }))
    }

    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        let v = log_sum_exp_slice(self.value(a).data())?;
        Ok(self.push(Tensor::scalar(v), Op::LogSumExp(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(a))
    }

    /// Linear-chain CRF negative log-likelihood of `gold` given
    /// `emissions (n, k)` and `transitions (k, k)`.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, gold: &[usize]) -> Result<Var> {
        let (u, t) = (self.value(emissions), self.value(transitions));
        let out = crf::nll_with_grads(t, u, gold)?;
        Ok(self.push(
            Tensor::scalar(out.loss),
            Op::CrfNll {
                emissions,
                transitions,
                d_emissions: out.d_emissions,
                d_transitions: out.d_transitions,
            },
        ))
    }

    /// Propagates d(loss)/d(node) back to every parameter reached.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                lhs: lt.shape().to_vec(),
                rhs: vec![],
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));
        let mut out = Gradients::new(self.store.len());

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.add(*id, dy),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = (ta.rows(), ta.cols());
                    if tb.shape().len() == 1 {
                        let x = tb.data();
                        let mut da = vec![0.0; m * k];
                        let mut dx = vec![0.0; k];
                        for i in 0..m {
                            let g = dy.data()[i];
                            if g == 0.0 {
                                continue;
                            }
                            let row = ta.row(i);
                            for j in 0..k {
                                da[i * k + j] = g * x[j];
                                dx[j] += g * row[j];
                            }
                        }
                        acc(&mut grads, *a, Tensor::matrix(m, k, da)?);
                        acc(&mut grads, *b, Tensor::vector(dx));
                    } else {
                        let n = tb.cols();
                        let mut da = vec![0.0; m * k];
                        let mut db = vec![0.0; k * n];
                        for i in 0..m {
                            let gy = &dy.data()[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let brow = tb.row(kk);
                                da[i * k + kk] = gy.iter().zip(brow).map(|(g, bv)| g * bv).sum();
                                let aik = ta.data()[i * k + kk];
                                if aik != 0.0 {
                                    for (dbv, g) in db[kk * n..(kk + 1) * n].iter_mut().zip(gy) {
                                        *dbv += aik * g;
                                    }
                                }
                            }
                        }
                        acc(&mut grads, *a, Tensor::matrix(m, k, da)?);
                        acc(&mut grads, *b, Tensor::matrix(k, n, db)?);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dy.clone());
                    acc(&mut grads, *b, dy);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da: Vec<f64> = dy.data().iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> = dy.data().iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    acc(&mut grads, *a, Tensor::new(ta.shape(), da)?);
                    acc(&mut grads, *b, Tensor::new(tb.shape(), db)?);
                }
                Op::MulConst(a, k) => {
                    let d: Vec<f64> = dy.data().iter().zip(k.data()).map(|(g, m)| g * m).collect();
                    acc(&mut grads, *a, Tensor::new(k.shape(), d)?);
                }
                Op::Scale(a, k) => {
                    let mut d = dy;
                    d.scale(*k);
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(idx));
                    let d = dy.data().iter().zip(y.data()).map(|(g, s)| g * s * (1.0 - s)).collect();
                    acc(&mut grads, *a, Tensor::new(y.shape(), d)?);
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(idx));
                    let d = dy.data().iter().zip(y.data()).map(|(g, t)| g * (1.0 - t * t)).collect();
                    acc(&mut grads, *a, Tensor::new(y.shape(), d)?);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        acc(&mut grads, p, Tensor::vector(dy.data()[off..off + n].to_vec()));
                        off += n;
                    }
                }
                Op::StackRows(rows) => {
                    let d = dy.cols();
                    for (i, &r) in rows.iter().enumerate() {
                        acc(&mut grads, r, Tensor::vector(dy.row(i).to_vec()));
                    }
                    debug_assert_eq!(d * rows.len(), dy.len());
                }
                Op::Row(a, i) => {
                    let ta = self.value(*a);
                    let mut d = Tensor::zeros(ta.shape());
                    let c = ta.cols();
                    d.data_mut()[i * c..(i + 1) * c].copy_from_slice(dy.data());
                    acc(&mut grads, *a, d);
                }
                Op::Conv1dSame { input, filters, bias } => {
                    let (x, k) = (self.value(*input), self.value(*filters));
                    let (l, c) = (x.rows(), x.cols());
                    let (f, w) = (k.shape()[0], k.shape()[1]);
                    let left = (w - 1) / 2;
                    let mut dx = vec![0.0; l * c];
                    let mut dk = vec![0.0; f * w * c];
                    let mut db = vec![0.0; f];
                    for t in 0..l {
                        let gy = &dy.data()[t * f..(t + 1) * f];
                        for (fi, g) in gy.iter().enumerate() {
                            db[fi] += g;
                        }
                        for j in 0..w {
                            let Some(src) = (t + j).checked_sub(left).filter(|&s| s < l) else {
                                continue;
                            };
                            let xr = x.row(src);
                            for (fi, &g) in gy.iter().enumerate() {
                                if g == 0.0 {
                                    continue;
                                }
                                let base = (fi * w + j) * c;
                                for ci in 0..c {
                                    dk[base + ci] += g * xr[ci];
                                    dx[src * c + ci] += g * k.data()[base + ci];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *input, Tensor::matrix(l, c, dx)?);
                    acc(&mut grads, *filters, Tensor::new(k.shape(), dk)?);
                    acc(&mut grads, *bias, Tensor::vector(db));
                }
                Op::MaxPoolTime { input, argmax } => {
                    let ta = self.value(*input);
                    let d = ta.cols();
                    let mut dx = Tensor::zeros(ta.shape());
                    for (j, &r) in argmax.iter().enumerate() {
                        dx.data_mut()[r * d + j] += dy.data()[j];
                    }
                    acc(&mut grads, *input, dx);
                }
                Op::LogSumExp(a) => {
                    let ta = self.value(*a);
                    let lse = self.value(Var(idx)).item();
                    let g = dy.item();
                    let d = ta.data().iter().map(|v| g * (v - lse).exp()).collect();
                    acc(&mut grads, *a, Tensor::new(ta.shape(), d)?);
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    acc(&mut grads, *a, Tensor::filled(ta.shape(), dy.item()));
                }
                Op::CrfNll {
                    emissions,
                    transitions,
                    d_emissions,
                    d_transitions,
                } => {
                    let g = dy.item();
                    let mut du = d_emissions.clone();
                    du.scale(g);
                    let mut dt = d_transitions.clone();
                    dt.scale(g);
                    acc(&mut grads, *emissions, du);
                    acc(&mut grads, *transitions, dt);
                }
            }
        }
        Ok(out)
    }
}
