//! Reverse-mode gradient tape over matrix-valued primitives.
//!
//! Every primitive appends one node holding its forward value. `backward`
//! walks the nodes in exact reverse order and only visits nodes that depend
//! on a leaf created with [`Tape::param`].

use std::sync::atomic::{AtomicUsize, Ordering};

use super::tensor::{gemm, Tensor};
use super::NumericError;

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(1);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: usize,
    idx: usize,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    PositiveElu(usize, f64),
    Log(usize),
    Square(usize),
    RepeatRows(usize, usize),
    ExpandAffine(usize, usize, usize, usize),
    Reshape(usize),
    SliceRows(usize, usize),
    Sum(usize),
    Mean(usize),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    tape: usize,
    adjoints: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Adjoint of `var`; zero when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Result<Tensor, NumericError> {
        if var.tape != self.tape || var.idx >= self.adjoints.len() {
            return Err(NumericError::NodeNotOnTape);
        }
        Ok(self.adjoints[var.idx].clone().unwrap_or_else(|| Tensor::zeros(&self.shapes[var.idx])))
    }

    pub fn take(&mut self, var: Var) -> Result<Tensor, NumericError> {
        if var.tape != self.tape || var.idx >= self.adjoints.len() {
            return Err(NumericError::NodeNotOnTape);
        }
        Ok(self.adjoints[var.idx].take().unwrap_or_else(|| Tensor::zeros(&self.shapes[var.idx])))
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    fn idx(&self, v: Var) -> Result<usize, NumericError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(NumericError::NodeNotOnTape);
        }
        Ok(v.idx)
    }

    fn node(&self, v: Var) -> Result<(usize, &Node), NumericError> {
        let i = self.idx(v)?;
        Ok((i, &self.nodes[i]))
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf treated as data.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor, NumericError> {
        Ok(&self.node(v)?.1.value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        let value = na.value.matmul(&nb.value)?;
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(Op::MatMul(ia, ib), value, rg))
    }

    /// `a [n, m] + row [1, m]`, broadcasting the row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(row)?;
        let m = na.value.cols();
        if nb.value.len() != m {
            return Err(mismatch("add_row", &na.value, &nb.value));
        }
        let mut value = na.value.clone();
        for chunk in value.data_mut().chunks_mut(m.max(1)) {
            for (v, b) in chunk.iter_mut().zip(nb.value.data()) {
                *v += b;
            }
        }
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(Op::AddRow(ia, ib), value, rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        if na.value.shape() != nb.value.shape() {
            return Err(mismatch(name, &na.value, &nb.value));
        }
        let data = na.value.data().iter().zip(nb.value.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_vec(na.value.shape(), data)?;
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(op(ia, ib), value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let value = na.value.map(f);
        let rg = na.requires_grad;
        Ok(self.push(op(ia), value, rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let value = na.value.map(|v| v * c);
        let rg = na.requires_grad;
        Ok(self.push(Op::Scale(ia, c), value, rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericError> {
        self.unary(a, tanh, Op::Tanh)
    }

    /// `elu(a) + 1 + delta`, strictly positive.
    pub fn positive_elu(&mut self, a: Var, delta: f64) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let value = na.value.map(|v| positive_elu(v, delta));
        let rg = na.requires_grad;
        Ok(self.push(Op::PositiveElu(ia, delta), value, rg))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NumericError> {
        self.unary(a, f64::ln, Op::Log)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NumericError> {
        self.unary(a, |v| v * v, Op::Square)
    }

    /// `[n, m] -> [n * k, m]`; row `i * k + j` copies input row `i`.
    pub fn repeat_rows(&mut self, a: Var, k: usize) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let (n, m) = (na.value.rows(), na.value.cols());
        let mut data = Vec::with_capacity(n * k * m);
        for r in 0..n {
            let row = na.value.row_slice(r);
            for _ in 0..k {
                data.extend_from_slice(row);
            }
        }
        let value = Tensor::from_vec(&[n * k, m], data)?;
        let rg = na.requires_grad;
        Ok(self.push(Op::RepeatRows(ia, k), value, rg))
    }

    /// Row `r * k + j` of the result is `base[r] + t[r * k + j] * w`, for
    /// `base [n, m]`, a column `t [n * k, 1]` and a row `w [1, m]`.
    pub fn expand_affine(&mut self, base: Var, t: Var, w: Var) -> Result<Var, NumericError> {
        let (ib, nb) = self.node(base)?;
        let (it, nt) = self.node(t)?;
        let (iw, nw) = self.node(w)?;
        let (n, m) = (nb.value.rows(), nb.value.cols());
        if nw.value.len() != m || nt.value.cols() != 1 || n == 0 || nt.value.rows() % n != 0 {
            return Err(mismatch("expand_affine", &nb.value, &nt.value));
        }
        let k = nt.value.rows() / n;
        let mut data = Vec::with_capacity(n * k * m);
        let wv = nw.value.data();
        for r in 0..n {
            let row = nb.value.row_slice(r);
            for &tv in &nt.value.data()[r * k..(r + 1) * k] {
                data.extend(row.iter().zip(wv).map(|(b, w)| b + tv * w));
            }
        }
        let value = Tensor::from_vec(&[n * k, m], data)?;
        let rg = nb.requires_grad || nt.requires_grad || nw.requires_grad;
        Ok(self.push(Op::ExpandAffine(ib, it, iw, k), value, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let value = na.value.clone().reshaped(shape)?;
        let rg = na.requires_grad;
        Ok(self.push(Op::Reshape(ia), value, rg))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let (n, m) = (na.value.rows(), na.value.cols());
        if start > end || end > n {
            return Err(NumericError::ShapeMismatch {
                op: "slice_rows",
                left: na.value.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let value = Tensor::from_vec(&[end - start, m], na.value.data()[start * m..end * m].to_vec())?;
        let rg = na.requires_grad;
        Ok(self.push(Op::SliceRows(ia, start), value, rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let value = Tensor::scalar(na.value.sum());
        let rg = na.requires_grad;
        Ok(self.push(Op::Sum(ia), value, rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericError> {
        let (ia, na) = self.node(a)?;
        let value = Tensor::scalar(na.value.sum() / na.value.len().max(1) as f64);
        let rg = na.requires_grad;
        Ok(self.push(Op::Mean(ia), value, rg))
    }

    /// Accumulates adjoints of `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericError> {
        let root = self.idx(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(NumericError::LossNotScalar(self.nodes[root].value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root] = Some(Tensor::filled(self.nodes[root].value.shape(), 1.0));
        for i in (0..=root).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let needs = |j: usize| self.nodes[j].requires_grad;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let va = &self.nodes[a].value;
                let vb = &self.nodes[b].value;
                let (n, k, m) = (va.rows(), va.cols(), vb.cols());
                if needs(a) {
                    let slot = slot(adj, a, va.shape());
                    gemm(n, m, k, g.data(), false, vb.data(), true, slot.data_mut(), 1.0);
                }
                if needs(b) {
                    let slot = slot(adj, b, vb.shape());
                    gemm(k, n, m, va.data(), true, g.data(), false, slot.data_mut(), 1.0);
                }
            }
            Op::AddRow(a, row) => {
                if needs(a) {
                    accumulate(adj, a, g.data(), self.nodes[a].value.shape());
                }
                if needs(row) {
                    let shape = self.nodes[row].value.shape();
                    let s = slot(adj, row, shape).data_mut();
                    let m = s.len();
                    for chunk in g.data().chunks(m.max(1)) {
                        for (acc, v) in s.iter_mut().zip(chunk) {
                            *acc += v;
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if needs(a) {
                    accumulate(adj, a, g.data(), node.value.shape());
                }
                if needs(b) {
                    let s = slot(adj, b, node.value.shape()).data_mut();
                    for (acc, v) in s.iter_mut().zip(g.data()) {
                        *acc += sign * v;
                    }
                }
            }
            Op::Mul(a, b) => {
                for (this, other) in [(a, b), (b, a)] {
                    if needs(this) {
                        let o = self.nodes[other].value.data();
                        let s = slot(adj, this, node.value.shape()).data_mut();
                        for ((acc, gv), ov) in s.iter_mut().zip(g.data()).zip(o) {
                            *acc += gv * ov;
                        }
                    }
                }
            }
            Op::Scale(a, c) => self.elementwise(adj, a, &node.value, g, |_, _, gv| gv * c),
            Op::Tanh(a) => self.elementwise(adj, a, &node.value, g, |_, y, gv| gv * (1.0 - y * y)),
            // below zero the output is exp(x) + delta
            Op::PositiveElu(a, delta) => {
                self.elementwise(adj, a, &node.value, g, |x, y, gv| if x > 0.0 { gv } else { gv * (y - delta) })
            }
            Op::Log(a) => self.elementwise(adj, a, &node.value, g, |x, _, gv| gv / x),
            Op::Square(a) => self.elementwise(adj, a, &node.value, g, |x, _, gv| 2.0 * x * gv),
            Op::RepeatRows(a, k) => {
                let shape = self.nodes[a].value.shape().to_vec();
                let m = self.nodes[a].value.cols();
                let s = slot(adj, a, &shape).data_mut();
                for (r, acc_row) in s.chunks_mut(m.max(1)).enumerate() {
                    for j in 0..k {
                        let src = &g.data()[(r * k + j) * m..(r * k + j + 1) * m];
                        for (acc, v) in acc_row.iter_mut().zip(src) {
                            *acc += v;
                        }
                    }
                }
            }
            Op::ExpandAffine(base, t, w, k) => {
                let m = self.nodes[base].value.cols();
                let tv = self.nodes[t].value.data();
                let wv = self.nodes[w].value.data();
                if needs(base) {
                    let shape = self.nodes[base].value.shape().to_vec();
                    let s = slot(adj, base, &shape).data_mut();
                    for (r, acc_row) in s.chunks_mut(m.max(1)).enumerate() {
                        for src in g.data()[r * k * m..(r + 1) * k * m].chunks(m) {
                            for (acc, v) in acc_row.iter_mut().zip(src) {
                                *acc += v;
                            }
                        }
                    }
                }
                if needs(w) {
                    let shape = self.nodes[w].value.shape().to_vec();
                    let s = slot(adj, w, &shape).data_mut();
                    for (src, &tk) in g.data().chunks(m.max(1)).zip(tv) {
                        for (acc, v) in s.iter_mut().zip(src) {
                            *acc += tk * v;
                        }
                    }
                }
                if needs(t) {
                    let shape = self.nodes[t].value.shape().to_vec();
                    let s = slot(adj, t, &shape).data_mut();
                    for (acc, src) in s.iter_mut().zip(g.data().chunks(m.max(1))) {
                        *acc += src.iter().zip(wv).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            Op::Reshape(a) => {
                let shape = self.nodes[a].value.shape().to_vec();
                accumulate(adj, a, g.data(), &shape);
            }
            Op::SliceRows(a, start) => {
                let shape = self.nodes[a].value.shape().to_vec();
                let m = self.nodes[a].value.cols();
                let s = slot(adj, a, &shape).data_mut();
                for (acc, v) in s[start * m..start * m + g.len()].iter_mut().zip(g.data()) {
                    *acc += v;
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                let n = self.nodes[a].value.len();
                let scale = if matches!(node.op, Op::Mean(_)) { 1.0 / n.max(1) as f64 } else { 1.0 };
                let gv = g.data()[0] * scale;
                let shape = self.nodes[a].value.shape().to_vec();
                slot(adj, a, &shape).data_mut().iter_mut().for_each(|acc| *acc += gv);
            }
        }
    }

    /// Accumulates `f(input, output, upstream)` into the adjoint of `a`.
    fn elementwise(
        &self,
        adj: &mut [Option<Tensor>],
        a: usize,
        out: &Tensor,
        g: &Tensor,
        f: impl Fn(f64, f64, f64) -> f64,
    ) {
        let input = self.nodes[a].value.data();
        let s = slot(adj, a, out.shape()).data_mut();
        for (((acc, &x), &y), &gv) in s.iter_mut().zip(input).zip(out.data()).zip(g.data()) {
            *acc += f(x, y, gv);
        }
    }
}

/// `tanh` through a single `exp`; absolute error stays below 1e-15.
pub(crate) fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

pub(crate) fn positive_elu(x: f64, delta: f64) -> f64 {
    if x > 0.0 {
        x + 1.0 + delta
    } else {
        x.exp() + delta
    }
}

fn slot<'a>(adj: &'a mut [Option<Tensor>], i: usize, shape: &[usize]) -> &'a mut Tensor {
    adj[i].get_or_insert_with(|| Tensor::zeros(shape))
}

fn accumulate(adj: &mut [Option<Tensor>], i: usize, g: &[f64], shape: &[usize]) {
    match &mut adj[i] {
        Some(t) => t.data_mut().iter_mut().zip(g).for_each(|(acc, v)| *acc += v),
        empty => *empty = Some(Tensor::from_vec(shape, g.to_vec()).expect("adjoint shape")),
    }
}
