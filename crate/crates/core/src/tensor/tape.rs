//! Define-by-run reverse-mode tape.
//!
//! Every operation appends a node holding its output values and enough
//! context to run its vector-Jacobian product. Matrix-valued tensors are laid
//! out row-major as `[channels x time]`, so one channel's time series is
//! contiguous.

use std::borrow::Cow;

use super::Scalar;
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense tensor owned by a tape.
#[derive(Clone, Debug)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    values: Vec<F>,
    tape_id: TensorId,
}

impl<F: Scalar> Tensor<F> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn tape_id(&self) -> TensorId {
        self.tape_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(rows, cols)` of a 2-D tensor.
    fn dims(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::config(format!("expected a 2-D tensor, got shape {other:?}"))),
        }
    }

    /// Column `t` of a 2-D tensor, gathered into a new vector.
    pub fn column(&self, t: usize) -> Vec<F> {
        let (rows, cols) = self.dims().expect("column() on a non-matrix tensor");
        (0..rows).map(|r| self.values[r * cols + t]).collect()
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    ChannelMix {
        input: TensorId,
        weight: TensorId,
        bias: Option<TensorId>,
    },
    Gather {
        input: TensorId,
        offsets: Vec<usize>,
    },
    Lookup {
        weight: TensorId,
        bias: Option<TensorId>,
        indices: Vec<Option<usize>>,
    },
    Rows {
        input: TensorId,
        start: usize,
    },
    Add(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Relu(TensorId),
    Sum(TensorId),
    SoftmaxCrossEntropy {
        logits: TensorId,
        targets: Vec<u8>,
        probs: Vec<F>,
    },
}

#[derive(Debug)]
struct Node<F> {
    tensor: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Records a forward computation for a single backward pass.
#[derive(Debug, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor<F> {
        &self.nodes[id.0].tensor
    }

    pub fn values(&self, id: TensorId) -> &[F] {
        &self.nodes[id.0].tensor.values
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<F>, op: Op<F>, requires_grad: bool) -> TensorId {
        debug_assert_eq!(values.len(), numel(&shape));
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                values,
                tape_id: id,
            },
            op,
            requires_grad,
        });
        id
    }

    fn new_leaf(&mut self, shape: &[usize], values: Vec<F>, requires_grad: bool) -> Result<TensorId> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::config(format!("tensor shape must be non-empty and positive, got {shape:?}")));
        }
        if values.len() != numel(shape) {
            return Err(Error::config(format!(
                "shape {shape:?} needs {} values, got {}",
                numel(shape),
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values, Op::Leaf, requires_grad))
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn constant(&mut self, shape: &[usize], values: Vec<F>) -> Result<TensorId> {
        self.new_leaf(shape, values, false)
    }

    /// Trainable leaf; its gradient is available after [`Tape::backward`].
    pub fn variable(&mut self, shape: &[usize], values: Vec<F>) -> Result<TensorId> {
        self.new_leaf(shape, values, true)
    }

    /// `out[c, t] = sum_k weight[c, k] * input[k, t] + bias[c]`.
    pub fn channel_mix(&mut self, input: TensorId, weight: TensorId, bias: Option<TensorId>) -> Result<TensorId> {
        let (c_in, t) = self.tensor(input).dims()?;
        let (c_out, w_in) = self.tensor(weight).dims()?;
        if w_in != c_in {
            return Err(Error::config(format!(
                "channel_mix: weight is {c_out}x{w_in} but input has {c_in} channels"
            )));
        }
        let mut out = vec![F::zero(); c_out * t];
        F::gemm(
            c_out,
            c_in,
            t,
            F::one(),
            self.values(weight),
            (c_in as isize, 1),
            self.values(input),
            (t as isize, 1),
            F::zero(),
            &mut out,
            (t as isize, 1),
        );
        if let Some(b) = bias {
            let bv = self.values(b);
            if bv.len() != c_out {
                return Err(Error::config(format!(
                    "channel_mix: bias has {} entries, expected {c_out}",
                    bv.len()
                )));
            }
            for (row, &bias) in out.chunks_exact_mut(t).zip(bv) {
                row.iter_mut().for_each(|v| *v = *v + bias);
            }
        }
        let rg = self.requires_grad(input) || self.requires_grad(weight) || bias.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(vec![c_out, t], out, Op::ChannelMix { input, weight, bias }, rg))
    }

    /// Causal time-variant gather: `out[:, t] = input[:, t - offsets[t]]`,
    /// zero where the index falls before the start of the signal.
    pub fn causal_gather(&mut self, input: TensorId, offsets: &[usize]) -> Result<TensorId> {
        let (c, t) = self.tensor(input).dims()?;
        if offsets.len() != t {
            return Err(Error::config(format!(
                "causal_gather: {} offsets for {t} time steps",
                offsets.len()
            )));
        }
        if let Some(pos) = offsets.iter().position(|&o| o == 0) {
            return Err(Error::config(format!(
                "causal_gather: offset 0 at t={pos} would make the two-tap convolution non-causal"
            )));
        }
        let src = self.values(input);
        let mut out = vec![F::zero(); c * t];
        for (dst_row, src_row) in out.chunks_exact_mut(t).zip(src.chunks_exact(t)) {
            for (i, (d, &off)) in dst_row.iter_mut().zip(offsets).enumerate() {
                if i >= off {
                    *d = src_row[i - off];
                }
            }
        }
        let rg = self.requires_grad(input);
        Ok(self.push(
            vec![c, t],
            out,
            Op::Gather {
                input,
                offsets: offsets.to_vec(),
            },
            rg,
        ))
    }

    /// `out[:, t] = weight[:, indices[t]] + bias`, with the weight term zero
    /// where the index is `None`. Equal to mixing a one-hot input through
    /// `weight` without building it.
    pub fn column_lookup(
        &mut self,
        weight: TensorId,
        bias: Option<TensorId>,
        indices: &[Option<usize>],
    ) -> Result<TensorId> {
        let (rows, cols) = self.tensor(weight).dims()?;
        if indices.is_empty() {
            return Err(Error::config("column_lookup: no time steps"));
        }
        if let Some(bad) = indices.iter().flatten().find(|&&i| i >= cols) {
            return Err(Error::data(format!("column_lookup: index {bad} out of 0..{cols}")));
        }
        let t = indices.len();
        let w = self.values(weight);
        let mut out = vec![F::zero(); rows * t];
        for (r, row) in out.chunks_exact_mut(t).enumerate() {
            let w_row = &w[r * cols..(r + 1) * cols];
            for (o, idx) in row.iter_mut().zip(indices) {
                if let Some(i) = idx {
                    *o = w_row[*i];
                }
            }
        }
        if let Some(b) = bias {
            let bv = self.values(b);
            if bv.len() != rows {
                return Err(Error::config(format!(
                    "column_lookup: bias has {} entries, expected {rows}",
                    bv.len()
                )));
            }
            for (row, &bias) in out.chunks_exact_mut(t).zip(bv) {
                row.iter_mut().for_each(|v| *v = *v + bias);
            }
        }
        let rg = self.requires_grad(weight) || bias.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(
            vec![rows, t],
            out,
            Op::Lookup {
                weight,
                bias,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Rows `start..start + count` of a 2-D tensor.
    pub fn rows(&mut self, input: TensorId, start: usize, count: usize) -> Result<TensorId> {
        let (c, t) = self.tensor(input).dims()?;
        if count == 0 || start + count > c {
            return Err(Error::config(format!("rows {start}..{} out of 0..{c}", start + count)));
        }
        let out = self.values(input)[start * t..(start + count) * t].to_vec();
        let rg = self.requires_grad(input);
        Ok(self.push(vec![count, t], out, Op::Rows { input, start }, rg))
    }

    fn binary(&mut self, a: TensorId, b: TensorId, name: &str) -> Result<(Vec<usize>, bool)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::config(format!("{name}: shape mismatch {sa:?} vs {sb:?}")));
        }
        Ok((sa.to_vec(), self.requires_grad(a) || self.requires_grad(b)))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (shape, rg) = self.binary(a, b, "add")?;
        let out = self.values(a).iter().zip(self.values(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.push(shape, out, Op::Add(a, b), rg))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (shape, rg) = self.binary(a, b, "mul")?;
        let out = self.values(a).iter().zip(self.values(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.push(shape, out, Op::Mul(a, b), rg))
    }

    fn unary(&mut self, x: TensorId, f: impl Fn(F) -> F, op: Op<F>) -> TensorId {
        let shape = self.shape(x).to_vec();
        let out = self.values(x).iter().map(|&v| f(v)).collect();
        let rg = self.requires_grad(x);
        self.push(shape, out, op, rg)
    }

    pub fn tanh(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        self.unary(x, |v| if v < F::zero() { F::zero() } else { v }, Op::Relu(x))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let total = self.values(x).iter().fold(0.0f64, |acc, v| acc + Scalar::to_f64(*v));
        let rg = self.requires_grad(x);
        self.push(vec![1], vec![F::from_f64(total)], Op::Sum(x), rg)
    }

    /// Mean over time of `-log softmax(logits[:, t])[targets[t]]`.
    pub fn softmax_cross_entropy(&mut self, logits: TensorId, targets: &[u8]) -> Result<TensorId> {
        let (k, t) = self.tensor(logits).dims()?;
        if targets.len() != t {
            return Err(Error::config(format!(
                "softmax_cross_entropy: {} targets for {t} columns",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&c| c as usize >= k) {
            return Err(Error::data(format!("target code {bad} outside 0..{k}")));
        }
        let lv = self.values(logits);
        let mut max = vec![F::neg_infinity(); t];
        for row in lv.chunks_exact(t) {
            for (m, &v) in max.iter_mut().zip(row) {
                *m = m.max(v);
            }
        }
        let mut probs = vec![F::zero(); k * t];
        let mut denom = vec![F::zero(); t];
        for (prow, lrow) in probs.chunks_exact_mut(t).zip(lv.chunks_exact(t)) {
            for i in 0..t {
                let e = (lrow[i] - max[i]).exp();
                prow[i] = e;
                denom[i] = denom[i] + e;
            }
        }
        for prow in probs.chunks_exact_mut(t) {
            for (p, &d) in prow.iter_mut().zip(&denom) {
                *p = *p / d;
            }
        }
        let mut loss = 0.0f64;
        for (i, &target) in targets.iter().enumerate() {
            let shifted = (lv[target as usize * t + i] - max[i]).to_f64();
            loss += denom[i].to_f64().ln() - shifted;
        }
        loss /= t as f64;
        let rg = self.requires_grad(logits);
        Ok(self.push(
            vec![1],
            vec![F::from_f64(loss)],
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Runs the reverse sweep from a scalar loss, consuming the tape.
    pub fn backward(self, loss: TensorId) -> Result<Gradients<F>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage(format!("tensor {} is not on this tape", loss.0)));
        }
        if self.tensor(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            // only leaf gradients are reported; intermediate ones are dropped early
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }

        let shapes = self.nodes.iter().map(|n| n.tensor.shape.clone()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let out = &node.tensor;
        match &node.op {
            Op::Leaf => {}
            Op::ChannelMix { input, weight, bias } => {
                let (c_out, t) = (out.shape[0], out.shape[1]);
                let c_in = self.shape(*input)[0];
                if self.requires_grad(*weight) {
                    let dw = slot(grads, *weight, c_out * c_in);
                    // dW += dY * X^T
                    F::gemm(
                        c_out,
                        t,
                        c_in,
                        F::one(),
                        g,
                        (t as isize, 1),
                        self.values(*input),
                        (1, t as isize),
                        F::one(),
                        dw,
                        (c_in as isize, 1),
                    );
                }
                if self.requires_grad(*input) {
                    let dx = slot(grads, *input, c_in * t);
                    // dX += W^T * dY
                    F::gemm(
                        c_in,
                        c_out,
                        t,
                        F::one(),
                        self.values(*weight),
                        (1, c_in as isize),
                        g,
                        (t as isize, 1),
                        F::one(),
                        dx,
                        (t as isize, 1),
                    );
                }
                if let Some(b) = bias.filter(|b| self.requires_grad(*b)) {
                    let db = slot(grads, b, c_out);
                    for (d, row) in db.iter_mut().zip(g.chunks_exact(t)) {
                        *d = *d + row.iter().fold(F::zero(), |a, &v| a + v);
                    }
                }
            }
            Op::Gather { input, offsets } => {
                let t = out.shape[1];
                let dx = slot(grads, *input, out.len());
                for (dx_row, g_row) in dx.chunks_exact_mut(t).zip(g.chunks_exact(t)) {
                    for (i, (&gv, &off)) in g_row.iter().zip(offsets).enumerate() {
                        if i >= off {
                            dx_row[i - off] = dx_row[i - off] + gv;
                        }
                    }
                }
            }
            Op::Lookup { weight, bias, indices } => {
                let t = out.shape[1];
                let (rows, cols) = (out.shape[0], self.shape(*weight)[1]);
                if self.requires_grad(*weight) {
                    let dw = slot(grads, *weight, rows * cols);
                    for (r, g_row) in g.chunks_exact(t).enumerate() {
                        let dw_row = &mut dw[r * cols..(r + 1) * cols];
                        for (&gv, idx) in g_row.iter().zip(indices) {
                            if let Some(i) = idx {
                                dw_row[*i] = dw_row[*i] + gv;
                            }
                        }
                    }
                }
                if let Some(b) = bias.filter(|b| self.requires_grad(*b)) {
                    let db = slot(grads, b, rows);
                    for (d, row) in db.iter_mut().zip(g.chunks_exact(t)) {
                        *d = *d + row.iter().fold(F::zero(), |a, &v| a + v);
                    }
                }
            }
            Op::Rows { input, start } => {
                let t = out.shape[1];
                let total = self.tensor(*input).len();
                let dx = slot(grads, *input, total);
                for (d, &gv) in dx[start * t..start * t + g.len()].iter_mut().zip(g) {
                    *d = *d + gv;
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if self.requires_grad(id) {
                        accumulate(slot(grads, id, g.len()), g.iter().copied());
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    let other = self.values(*b);
                    accumulate(slot(grads, *a, g.len()), g.iter().zip(other).map(|(&gv, &o)| gv * o));
                }
                if self.requires_grad(*b) {
                    let other = self.values(*a);
                    accumulate(slot(grads, *b, g.len()), g.iter().zip(other).map(|(&gv, &o)| gv * o));
                }
            }
            Op::Tanh(x) => {
                let y = &out.values;
                accumulate(
                    slot(grads, *x, g.len()),
                    g.iter().zip(y).map(|(&gv, &yv)| gv * (F::one() - yv * yv)),
                );
            }
            Op::Sigmoid(x) => {
                let y = &out.values;
                accumulate(
                    slot(grads, *x, g.len()),
                    g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (F::one() - yv)),
                );
            }
            Op::Relu(x) => {
                let xv = self.values(*x);
                accumulate(
                    slot(grads, *x, g.len()),
                    g.iter().zip(xv).map(|(&gv, &v)| if v > F::zero() { gv } else { F::zero() }),
                );
            }
            Op::Sum(x) => {
                let n = self.tensor(*x).len();
                accumulate(slot(grads, *x, n), std::iter::repeat_n(g[0], n));
            }
            Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                let t = targets.len();
                let scale = g[0] / F::from_f64(t as f64);
                let dl = slot(grads, *logits, probs.len());
                accumulate(dl, probs.iter().map(|&p| p * scale));
                for (i, &target) in targets.iter().enumerate() {
                    let j = target as usize * t + i;
                    dl[j] = dl[j] - scale;
                }
            }
        }
    }
}

fn sigmoid<F: Scalar>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

fn slot<F: Scalar>(grads: &mut [Option<Vec<F>>], id: TensorId, len: usize) -> &mut [F] {
    grads[id.0].get_or_insert_with(|| vec![F::zero(); len])
}

fn accumulate<F: Scalar>(dst: &mut [F], src: impl Iterator<Item = F>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Gradients produced by a backward sweep, indexed by [`TensorId`].
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
    shapes: Vec<Vec<usize>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient of the loss with respect to `id`; all zeros when `id` does
    /// not influence the loss.
    pub fn grad(&self, id: TensorId) -> Cow<'_, [F]> {
        match &self.grads[id.0] {
            Some(g) => Cow::Borrowed(g),
            None => Cow::Owned(vec![F::zero(); numel(&self.shapes[id.0])]),
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, id: TensorId) -> Vec<F> {
        self.grads[id.0]
            .take()
            .unwrap_or_else(|| vec![F::zero(); numel(&self.shapes[id.0])])
    }
}
