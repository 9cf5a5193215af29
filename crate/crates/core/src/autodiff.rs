//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes are appended
//! in evaluation order, so the tape is already topologically sorted and the
//! backward sweep is a single reverse scan. Parameters live outside the tape
//! in a [`ParamStore`]; [`Tape::param`] copies the current value in and
//! [`Tape::backward_into`] accumulates gradients back out.

use indexmap::IndexMap;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{gemm_nt, gemm_tn, CsrMatrix, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a sparse constant registered with [`Tape::sparse`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SparseId(usize);

/// Handle to a named parameter in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    SpMM(SparseId, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    MaxOverRows { input: Var, argmax: Vec<usize> },
    Dropout { input: Var, mask: Vec<f64> },
    AddRow(Var, Var),
    MulCol(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols { input: Var, start: usize },
    Transpose(Var),
    Sum(Var),
    Scale(Var, f64),
    CrossEntropy { logits: Var, label: usize },
    Reweight { input: Var, p: f64, off_sums: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::SpMM(..) => "spmm",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::MaxOverRows { .. } => "max_over_rows",
            Op::Dropout { .. } => "dropout",
            Op::AddRow(..) => "add_row",
            Op::MulCol(..) => "mul_col",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::Transpose(_) => "transpose",
            Op::Sum(_) => "sum",
            Op::Scale(..) => "scale",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Reweight { .. } => "reweight",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Elementwise kinds accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
    Sub,
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    sparse: Vec<(CsrMatrix, CsrMatrix)>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a value that receives no parameter gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn sparse(&mut self, matrix: CsrMatrix) -> SparseId {
        let t = matrix.transpose();
        self.sparse.push((matrix, t));
        SparseId(self.sparse.len() - 1)
    }

    pub fn sparse_matrix(&self, id: SparseId) -> &CsrMatrix {
        &self.sparse[id.0].0
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn spmm(&mut self, a: SparseId, x: Var) -> Result<Var> {
        let out = self.sparse[a.0].0.spmm(self.value(x))?;
        self.push(out, Op::SpMM(a, x))
    }

    pub fn elementwise(&mut self, kind: Elementwise, operands: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Add | Elementwise::Mul | Elementwise::Sub => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return Err(Error::invalid(format!(
                "{kind:?} takes {arity} operand(s), got {}",
                operands.len()
            )));
        }
        match kind {
            Elementwise::Add => self.add(operands[0], operands[1]),
            Elementwise::Mul => self.mul(operands[0], operands[1]),
            Elementwise::Sub => self.sub(operands[0], operands[1]),
            Elementwise::Relu => self.relu(operands[0]),
            Elementwise::Sigmoid => self.sigmoid(operands[0]),
            Elementwise::Tanh => self.tanh(operands[0]),
        }
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let out = ta.zip_map(tb, f);
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Row-wise softmax, max-subtracted.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(Error::invalid("softmax over zero columns"));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Column-wise maximum. Ties resolve to the lowest row index, which is
    /// also where the gradient is routed.
    pub fn max_over_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut argmax = vec![0usize; x.cols()];
        let mut out = Tensor::zeros(1, x.cols());
        out.data_mut().copy_from_slice(x.row(0));
        for r in 1..x.rows() {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v > out.get(0, c) {
                    out.set(0, c, v);
                    argmax[c] = r;
                }
            }
        }
        self.push(out, Op::MaxOverRows { input: a, argmax })
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`. Outside
    /// training, or at rate 0, this returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let out = Tensor::from_vec(
            x.rows(),
            x.cols(),
            x.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        )?;
        self.push(out, Op::Dropout { input: a, mask })
    }

    /// Adds a 1xd row to every row of an nxd matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(row));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_err("add_row", x, b));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (o, &v) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += v;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Scales row `i` of an nxd matrix by entry `i` of an nx1 column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (x, s) = (self.value(a), self.value(col));
        if s.cols() != 1 || s.rows() != x.rows() {
            return Err(shape_err("mul_col", x, s));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            let k = s.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= k);
        }
        self.push(out, Op::MulCol(a, col))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::invalid("concat of zero parts"))?;
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), t));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(rows, total);
        for r in 0..rows {
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                out.row_mut(r)[offset..offset + w].copy_from_slice(self.value(p).row(r));
                offset += w;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let x = self.value(a);
        if start + width > x.cols() || width == 0 {
            return Err(Error::invalid(format!(
                "column slice {start}..{} out of range for {} columns",
                start + width,
                x.cols()
            )));
        }
        let out = Tensor::from_fn(x.rows(), width, |r, c| x.get(r, start + c));
        self.push(out, Op::SliceCols { input: a, start })
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Sum of all entries, as a 1x1 scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Result<Var> {
        let out = self.value(a).scale(alpha);
        self.push(out, Op::Scale(a, alpha))
    }

    /// `-log softmax(logits)[label]` for a 1xC row of logits.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = self.value(logits);
        if z.rows() != 1 {
            return Err(Error::invalid("cross_entropy expects a single row of logits"));
        }
        if label >= z.cols() {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} classes",
                z.cols()
            )));
        }
        let loss = log_sum_exp(z.row(0)) - z.get(0, label);
        self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, label })
    }

    /// Re-weights a dense weighted adjacency so the diagonal carries `1 - p`
    /// and the off-diagonal entries of each row share `p` in proportion to
    /// their weights. Rows without off-diagonal mass become unit rows.
    pub fn reweight(&mut self, a: Var, p: f64) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != x.cols() {
            return Err(Error::invalid("reweight expects a square matrix"));
        }
        let n = x.rows();
        let mut out = Tensor::zeros(n, n);
        let mut off_sums = vec![0.0; n];
        for i in 0..n {
            let off: f64 = x
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum();
            off_sums[i] = off;
            if off > 0.0 {
                for j in 0..n {
                    if j != i {
                        out.set(i, j, p * x.get(i, j) / off);
                    }
                }
                out.set(i, i, 1.0 - p);
            } else {
                out.set(i, i, 1.0);
            }
        }
        self.push(out, Op::Reweight { input: a, p, off_sums })
    }

    /// Runs the reverse sweep from a scalar `loss`, seeding it with `seed`.
    pub fn gradients(&self, loss: Var, seed: f64) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss(lv.rows(), lv.cols()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(seed));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backpropagates `loss` and adds every parameter gradient into `store`.
    /// Calling this twice without [`ParamStore::zero_grad`] accumulates.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        self.backward_scaled(loss, store, 1.0)
    }

    /// Like [`Tape::backward_into`] with the loss scaled by `scale`, which is
    /// how mini-batch means are accumulated one graph at a time.
    pub fn backward_scaled(&self, loss: Var, store: &mut ParamStore, scale: f64) -> Result<()> {
        let grads = self.gradients(loss, scale)?;
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[idx]) {
                store.params[id.0].grad.add_assign(g);
            }
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = slot(grads, *a, ta.shape());
                gemm_nt(g, tb, ga);
                let gb = slot(grads, *b, tb.shape());
                gemm_tn(ta, g, gb);
            }
            Op::SpMM(s, x) => {
                let shape = self.value(*x).shape();
                let gx = slot(grads, *x, shape);
                self.sparse[s.0].1.spmm_into(g, gx);
            }
            Op::Add(a, b) => {
                slot(grads, *a, g.shape()).add_assign(g);
                slot(grads, *b, g.shape()).add_assign(g);
            }
            Op::Sub(a, b) => {
                slot(grads, *a, g.shape()).add_assign(g);
                slot(grads, *b, g.shape()).axpy(-1.0, g);
            }
            Op::Mul(a, b) => {
                let gb_part = g.zip_map(self.value(*a), |x, y| x * y);
                let ga_part = g.zip_map(self.value(*b), |x, y| x * y);
                slot(grads, *a, g.shape()).add_assign(&ga_part);
                slot(grads, *b, g.shape()).add_assign(&gb_part);
            }
            Op::Relu(a) => {
                let part = g.zip_map(self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 });
                slot(grads, *a, g.shape()).add_assign(&part);
            }
            Op::Sigmoid(a) => {
                let part = g.zip_map(out, |d, y| d * y * (1.0 - y));
                slot(grads, *a, g.shape()).add_assign(&part);
            }
            Op::Tanh(a) => {
                let part = g.zip_map(out, |d, y| d * (1.0 - y * y));
                slot(grads, *a, g.shape()).add_assign(&part);
            }
            Op::SoftmaxRows(a) => {
                let mut part = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, d) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(d).map(|(a, b)| a * b).sum();
                    for (p, (&yi, &di)) in part.row_mut(r).iter_mut().zip(y.iter().zip(d)) {
                        *p = yi * (di - dot);
                    }
                }
                slot(grads, *a, out.shape()).add_assign(&part);
            }
            Op::MaxOverRows { input, argmax } => {
                let shape = self.value(*input).shape();
                let gx = slot(grads, *input, shape);
                for (c, &r) in argmax.iter().enumerate() {
                    let v = gx.get(r, c) + g.get(0, c);
                    gx.set(r, c, v);
                }
            }
            Op::Dropout { input, mask } => {
                let gx = slot(grads, *input, g.shape());
                for ((o, &d), &m) in gx.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *o += d * m;
                }
            }
            Op::AddRow(a, row) => {
                slot(grads, *a, g.shape()).add_assign(g);
                let gb = slot(grads, *row, (1, g.cols()));
                for r in 0..g.rows() {
                    for (o, &d) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
            }
            Op::MulCol(a, col) => {
                let (x, s) = (self.value(*a), self.value(*col));
                let gx = slot(grads, *a, x.shape());
                for r in 0..x.rows() {
                    let k = s.get(r, 0);
                    for (o, &d) in gx.row_mut(r).iter_mut().zip(g.row(r)) {
                        *o += d * k;
                    }
                }
                let gs = slot(grads, *col, s.shape());
                for r in 0..x.rows() {
                    let dot: f64 = g.row(r).iter().zip(x.row(r)).map(|(a, b)| a * b).sum();
                    let v = gs.get(r, 0) + dot;
                    gs.set(r, 0, v);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.value(p).shape();
                    let gp = slot(grads, p, shape);
                    for r in 0..shape.0 {
                        for (o, &d) in gp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + shape.1]) {
                            *o += d;
                        }
                    }
                    offset += shape.1;
                }
            }
            Op::SliceCols { input, start } => {
                let shape = self.value(*input).shape();
                let gx = slot(grads, *input, shape);
                for r in 0..g.rows() {
                    for (o, &d) in gx.row_mut(r)[*start..*start + g.cols()].iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
            }
            Op::Transpose(a) => {
                let part = g.transpose();
                slot(grads, *a, part.shape()).add_assign(&part);
            }
            Op::Sum(a) => {
                let d = g.data()[0];
                let gx = slot(grads, *a, self.value(*a).shape());
                gx.data_mut().iter_mut().for_each(|v| *v += d);
            }
            Op::Scale(a, alpha) => {
                slot(grads, *a, g.shape()).axpy(*alpha, g);
            }
            Op::CrossEntropy { logits, label } => {
                let z = self.value(*logits);
                let d = g.data()[0];
                let mut probs = z.row(0).to_vec();
                softmax_in_place(&mut probs);
                probs[*label] -= 1.0;
                let gz = slot(grads, *logits, z.shape());
                for (o, p) in gz.data_mut().iter_mut().zip(probs) {
                    *o += d * p;
                }
            }
            Op::Reweight { input, p, off_sums } => {
                let x = self.value(*input);
                let n = x.rows();
                let gx = slot(grads, *input, x.shape());
                for i in 0..n {
                    let r = off_sums[i];
                    if r <= 0.0 {
                        continue;
                    }
                    let weighted: f64 = (0..n)
                        .filter(|&k| k != i)
                        .map(|k| g.get(i, k) * x.get(i, k))
                        .sum::<f64>()
                        / r;
                    for j in 0..n {
                        if j != i {
                            let v = gx.get(i, j) + (p / r) * (g.get(i, j) - weighted);
                            gx.set(i, j, v);
                        }
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-node gradients from one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// One named learnable tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub(crate) first_moment: Tensor,
    pub(crate) second_moment: Tensor,
}

/// Named parameters in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        let (r, c) = value.shape();
        let (idx, _) = self.params.insert_full(
            name,
            Param {
                value,
                grad: Tensor::zeros(r, c),
                first_moment: Tensor::zeros(r, c),
                second_moment: Tensor::zeros(r, c),
            },
        );
        Ok(ParamId(idx))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.get_index_of(name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.params.get_index(id.0).map(|(k, _)| k.as_str()).unwrap_or("")
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.values_mut()
    }

    /// Number of optimizer steps taken.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn count_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }
}
