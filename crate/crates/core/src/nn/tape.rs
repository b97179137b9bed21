use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use std::borrow::Cow;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Vec<usize>),
    RowNormalize(Var, T),
    Sum(Var),
    LogSumExp(Var),
}

struct Node<'p, T: Clone> {
    value: Cow<'p, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Reverse-mode autodiff tape over rank-2 tensors.
///
/// Parameters are borrowed from a [`ParamStore`]; gradients flow back to them
/// through [`Tape::backward`]. A tape is single-threaded; run one per worker.
///
/// Shape mismatches are programming errors and panic.
pub struct Tape<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<'p, T>>,
}

fn same_shape<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) {
    assert_eq!(a.shape(), b.shape(), "{op}: shape mismatch");
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
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

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        assert_eq!(t.shape().len(), 2, "tape values must be matrices");
        self.push(t, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.get(id);
        assert_eq!(value.shape().len(), 2, "tape values must be matrices");
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Param(id),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.rows(), "matmul: inner dimensions differ");
        let out = matmul(x, y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.cols(), "matmul_nt: inner dimensions differ");
        let out = matmul_nt(x, y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMulNt(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    fn zip(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(name, x, y);
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::from_vec(x.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, "mul", |p, q| p * q, Op::Mul(a, b))
    }

    /// Adds a `1 x m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.rows() == 1 && r.cols() == x.cols(), "add_row: bad row shape");
        let m = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v + r.data()[i % m];
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::AddRow(a, row), rg)
    }

    /// Scales row `i` of `a` by `col[i]`, where `col` is `n x 1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (x, c) = (self.value(a), self.value(col));
        assert!(c.cols() == 1 && c.rows() == x.rows(), "mul_col: bad column shape");
        let m = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v * c.data()[i / m.max(1)];
        }
        let rg = self.rg(a) || self.rg(col);
        self.push(out, Op::MulCol(a, col), rg)
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        let rg = self.rg(a);
        self.push(out, Op::Affine(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.affine(a, s, T::zero())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let n = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), n, "concat_cols: row counts differ");
                self.value(p).cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let out = Tensor::matrix(n, total, data).expect("shape computed");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let x = self.value(a);
        let m = x.cols();
        let mut data = Vec::with_capacity(index.len() * m);
        for &i in index {
            assert!(i < x.rows(), "gather_rows: index {i} out of range");
            data.extend_from_slice(x.row_slice(i));
        }
        let out = Tensor::matrix(index.len(), m, data).expect("shape computed");
        let rg = self.rg(a);
        self.push(out, Op::GatherRows(a, index.to_vec()), rg)
    }

    /// `out[index[i]] += a[i]` into `rows` zero-initialized rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], rows: usize) -> Var {
        let x = self.value(a);
        assert_eq!(index.len(), x.rows(), "scatter_add_rows: index length");
        let m = x.cols();
        let mut out = Tensor::zeros(&[rows, m]);
        for (src, &dst) in index.iter().enumerate() {
            assert!(dst < rows, "scatter_add_rows: index {dst} out of range");
            let from = x.row_slice(src);
            for (o, &v) in out.data_mut()[dst * m..(dst + 1) * m].iter_mut().zip(from) {
                *o = *o + v;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::ScatterAddRows(a, index.to_vec()), rg)
    }

    /// Softmax within each row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(m.max(1)) {
            softmax_in_place(row);
        }
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Softmax over entries of an `n x 1` column grouped by `segment[i]`.
    pub fn segment_softmax(&mut self, a: Var, segment: &[usize]) -> Var {
        let x = self.value(a);
        assert!(x.cols() == 1 && x.rows() == segment.len(), "segment_softmax: bad shape");
        let groups = segment.iter().copied().max().map_or(0, |g| g + 1);
        let mut max = vec![T::neg_infinity(); groups];
        for (&v, &g) in x.data().iter().zip(segment) {
            max[g] = max[g].max(v);
        }
        let mut out = x.clone();
        let mut total = vec![T::zero(); groups];
        for (v, &g) in out.data_mut().iter_mut().zip(segment) {
            *v = if max[g] == T::neg_infinity() {
                T::zero()
            } else {
                (*v - max[g]).exp()
            };
            total[g] = total[g] + *v;
        }
        for (v, &g) in out.data_mut().iter_mut().zip(segment) {
            if total[g] > T::zero() {
                *v = *v / total[g];
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::SegmentSoftmax(a, segment.to_vec()), rg)
    }

    /// Scales each row to unit length; `eps` guards zero rows.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let eps: T = lit(1e-12);
        let x = self.value(a);
        let m = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(m.max(1)) {
            let norm = (row.iter().map(|&v| v * v).sum::<T>() + eps).sqrt();
            for v in row {
                *v = *v / norm;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::RowNormalize(a, eps), rg)
    }

    /// Sum of all entries as a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// `log(sum(exp(a)))` over all entries, shifted by the max. Entries equal
    /// to `-inf` contribute nothing.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let max = x.data().iter().copied().fold(T::neg_infinity(), T::max);
        let value = if max == T::neg_infinity() {
            max
        } else {
            max + x.data().iter().map(|&v| (v - max).exp()).sum::<T>().ln()
        };
        let rg = self.rg(a);
        self.push(Tensor::scalar(value), Op::LogSumExp(a), rg)
    }

    /// Inverted dropout with a mask drawn by the caller's RNG. Identity when
    /// `rate` is zero or `train` is false.
    pub fn dropout(&mut self, a: Var, rate: f64, train: bool, rng: &mut impl rand::Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep: T = lit(1.0 / (1.0 - rate));
        let shape = self.value(a).shape().to_vec();
        let mask: Vec<T> = (0..shape.iter().product::<usize>())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let mask = self.constant(Tensor::from_vec(shape, mask).expect("shape copied"));
        Ok(self.mul(a, mask))
    }

    /// Gradients of the `1 x 1` value `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        let out = self.value(loss);
        assert_eq!(out.len(), 1, "backward: loss must be a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        let mut param_grads: Vec<Option<Tensor<T>>> = vec![None; self.params.len()];
        grads[loss.0] = Some(Tensor::full(out.shape(), T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(idx, g, &mut grads, &mut param_grads);
        }
        Gradients::from_vec(param_grads)
    }

    fn backprop(
        &self,
        idx: usize,
        g: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        param_grads: &mut [Option<Tensor<T>>],
    ) {
        let node = &self.nodes[idx];
        let y = &*node.value;
        let mut send = |v: Var, t: Tensor<T>| {
            if self.rg(v) {
                accumulate(&mut grads[v.0], t);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => accumulate(&mut param_grads[id.index()], g),
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    send(*a, matmul_nt(&g, self.value(*b)));
                }
                if self.rg(*b) {
                    send(*b, matmul_tn(self.value(*a), &g));
                }
            }
            Op::MatMulNt(a, b) => {
                if self.rg(*a) {
                    send(*a, matmul(&g, self.value(*b)));
                }
                if self.rg(*b) {
                    send(*b, matmul_tn(&g, self.value(*a)));
                }
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Add(a, b) => {
                if self.rg(*b) {
                    send(*b, g.clone());
                }
                send(*a, g);
            }
            Op::Sub(a, b) => {
                if self.rg(*b) {
                    send(*b, g.map(|v| -v));
                }
                send(*a, g);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    send(*a, hadamard(&g, self.value(*b)));
                }
                if self.rg(*b) {
                    send(*b, hadamard(&g, self.value(*a)));
                }
            }
            Op::AddRow(a, row) => {
                if self.rg(*row) {
                    let m = g.cols();
                    let mut r = vec![T::zero(); m];
                    for (i, &v) in g.data().iter().enumerate() {
                        r[i % m] = r[i % m] + v;
                    }
                    send(*row, Tensor::row(r));
                }
                send(*a, g);
            }
            Op::MulCol(a, col) => {
                let c = self.value(*col);
                let m = g.cols().max(1);
                if self.rg(*col) {
                    let x = self.value(*a);
                    let mut dc = vec![T::zero(); c.rows()];
                    for (i, (&gv, &xv)) in g.data().iter().zip(x.data()).enumerate() {
                        dc[i / m] = dc[i / m] + gv * xv;
                    }
                    send(*col, Tensor::column(dc));
                }
                if self.rg(*a) {
                    let mut da = g;
                    for (i, v) in da.data_mut().iter_mut().enumerate() {
                        *v = *v * c.data()[i / m];
                    }
                    send(*a, da);
                }
            }
            Op::Affine(a, s) => {
                let s = *s;
                send(*a, g.map(|v| v * s));
            }
            Op::Sigmoid(a) => send(*a, zip_map(&g, y, |gv, yv| gv * yv * (T::one() - yv))),
            Op::Tanh(a) => send(*a, zip_map(&g, y, |gv, yv| gv * (T::one() - yv * yv))),
            Op::Relu(a) => send(*a, zip_map(&g, y, |gv, yv| if yv > T::zero() { gv } else { T::zero() })),
            Op::ConcatCols(parts) => {
                let n = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut data = Vec::with_capacity(n * w);
                        for i in 0..n {
                            data.extend_from_slice(&g.row_slice(i)[offset..offset + w]);
                        }
                        send(p, Tensor::matrix(n, w, data).expect("shape computed"));
                    }
                    offset += w;
                }
            }
            Op::GatherRows(a, index) => {
                let x = self.value(*a);
                let m = x.cols();
                let mut da = Tensor::zeros(x.shape());
                for (src, &dst) in index.iter().enumerate() {
                    let from = g.row_slice(src);
                    for (o, &v) in da.data_mut()[dst * m..(dst + 1) * m].iter_mut().zip(from) {
                        *o = *o + v;
                    }
                }
                send(*a, da);
            }
            Op::ScatterAddRows(a, index) => {
                let m = g.cols();
                let mut data = Vec::with_capacity(index.len() * m);
                for &i in index {
                    data.extend_from_slice(g.row_slice(i));
                }
                send(*a, Tensor::matrix(index.len(), m, data).expect("shape computed"));
            }
            Op::SoftmaxRows(a) => {
                let m = g.cols().max(1);
                let mut da = g;
                for (drow, yrow) in da.data_mut().chunks_mut(m).zip(y.data().chunks(m)) {
                    let dot: T = drow.iter().zip(yrow).map(|(&d, &s)| d * s).sum();
                    for (d, &s) in drow.iter_mut().zip(yrow) {
                        *d = s * (*d - dot);
                    }
                }
                send(*a, da);
            }
            Op::SegmentSoftmax(a, segment) => {
                let groups = segment.iter().copied().max().map_or(0, |s| s + 1);
                let mut dot = vec![T::zero(); groups];
                for ((&d, &s), &seg) in g.data().iter().zip(y.data()).zip(segment) {
                    dot[seg] = dot[seg] + d * s;
                }
                let mut da = g;
                for ((d, &s), &seg) in da.data_mut().iter_mut().zip(y.data()).zip(segment) {
                    *d = s * (*d - dot[seg]);
                }
                send(*a, da);
            }
            Op::RowNormalize(a, eps) => {
                let x = self.value(*a);
                let m = g.cols().max(1);
                let mut da = g;
                for ((drow, yrow), xrow) in da
                    .data_mut()
                    .chunks_mut(m)
                    .zip(y.data().chunks(m))
                    .zip(x.data().chunks(m))
                {
                    let norm = (xrow.iter().map(|&v| v * v).sum::<T>() + *eps).sqrt();
                    let dot: T = drow.iter().zip(yrow).map(|(&d, &s)| d * s).sum();
                    for (d, &s) in drow.iter_mut().zip(yrow) {
                        *d = (*d - s * dot) / norm;
                    }
                }
                send(*a, da);
            }
            Op::Sum(a) => {
                let gv = g.item();
                send(*a, Tensor::full(self.value(*a).shape(), gv));
            }
            Op::LogSumExp(a) => {
                let gv = g.item();
                let lse = y.item();
                let x = self.value(*a);
                let da = if lse == T::neg_infinity() {
                    Tensor::zeros(x.shape())
                } else {
                    x.map(|v| gv * (v - lse).exp())
                };
                send(*a, da);
            }
        }
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, t: Tensor<T>) {
    match slot {
        Some(s) => s.add_assign(&t),
        None => *slot = Some(t),
    }
}

fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape().to_vec(), data).expect("shape preserved")
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

#[cfg(test)]
#[path = "tape_tests.rs"]
mod tests;
