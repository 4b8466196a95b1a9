//! Taped reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass. Nodes
//! are appended in evaluation order, so the tape is already topologically
//! sorted and [`Graph::backward`] simply walks it in reverse. Parameters are
//! borrowed from a [`ParamStore`] and never copied into the tape.

use std::collections::HashMap;

use super::ops::{self, softmax_rows_inplace};
use super::tensor::{gemm, MatView, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter {name:?}"
            )));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn element_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Per-parameter gradient accumulators, aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Gradients {
            grads: store
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Elementwise `self += other`.
    pub fn merge(&mut self, other: &Gradients<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}

/// Backward rule for an operation defined outside numcore.
///
/// The forward value is computed by the caller and handed to
/// [`Graph::custom`]; state needed by the backward pass lives in the
/// implementing struct.
pub trait CustomOp<T: Scalar> {
    fn name(&self) -> &'static str;

    /// Gradients for each input, in input order. `None` means "no gradient".
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>>;
}

enum Op<'a, T: Scalar> {
    Input,
    Param(ParamId),
    Linear(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    AddBias(NodeId, NodeId),
    Reshape(NodeId),
    ConcatLast(Vec<NodeId>),
    Gather {
        table: NodeId,
        ids: Vec<usize>,
        frozen_row: Option<usize>,
    },
    SumAll(NodeId),
    Softmax(NodeId),
    SoftmaxCe {
        logits: NodeId,
        targets: Vec<Option<usize>>,
        norm: T,
    },
    Custom(Box<dyn CustomOp<T> + 'a>, Vec<NodeId>),
}

enum Value<'a, T> {
    Owned(Tensor<T>),
    Borrowed(&'a Tensor<T>),
}

struct Node<'a, T: Scalar> {
    value: Value<'a, T>,
    op: Op<'a, T>,
    needs_grad: bool,
}

/// Forward tape bound to one parameter store.
pub struct Graph<'a, T: Scalar> {
    store: &'a ParamStore<T>,
    nodes: Vec<Node<'a, T>>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<'a, T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            value: Value::Borrowed(self.store.get(id)),
            op: Op::Param(id),
            needs_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    /// 2-axis matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).ndim() != 2 || self.value(b).ndim() != 2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        self.linear(a, b)
    }

    /// `x[..., p] · w[p, n] -> [..., n]`, applied along the trailing axis.
    pub fn linear(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (p, n) = wv
            .dims2()
            .map_err(|_| Error::shape("linear", xv.shape(), wv.shape()))?;
        if xv.last_dim() != p {
            return Err(Error::shape("matmul", xv.shape(), wv.shape()));
        }
        let m = xv.outer_len();
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let mut out = Tensor::zeros(&shape);
        gemm(
            xv.data(),
            MatView::row_major(m, p),
            wv.data(),
            MatView::row_major(p, n),
            T::zero(),
            out.data_mut(),
            MatView::row_major(m, n),
        );
        let ng = self.ng(x) || self.ng(w);
        Ok(self.push(out, Op::Linear(x, w), ng))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, name: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "hadamard")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.tanh());
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(ops::sigmoid);
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(T::zero()));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    /// `x[..., d] + bias[d]`, the bias repeated over every leading index.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let bv = self.value(bias);
        if bv.ndim() != 1 || bv.len() != xv.last_dim() {
            return Err(Error::shape("add_bias", xv.shape(), bv.shape()));
        }
        let d = bv.len();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(out, Op::AddBias(x, bias), ng))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).clone().reshape(shape)?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Reshape(a), ng))
    }

    /// Concatenate along the trailing axis; leading extents must agree.
    pub fn concat_last(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or(Error::Empty("concat_last"))?;
        let lead = self.value(first).shape()[..self.value(first).ndim() - 1].to_vec();
        let rows = self.value(first).outer_len();
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat_last", self.shape(first), s));
            }
            width += s[s.len() - 1];
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let w = v.last_dim();
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(width);
        let ng = parts.iter().any(|&p| self.ng(p));
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::ConcatLast(parts.to_vec()), ng))
    }

    /// Row lookup: `table[ids[i], :]` for each id, reshaped to `out_lead ++ [d]`.
    ///
    /// `frozen_row` never receives gradient (used for the padding row).
    pub fn gather(
        &mut self,
        table: NodeId,
        ids: &[usize],
        out_lead: &[usize],
        frozen_row: Option<usize>,
    ) -> Result<NodeId> {
        let tv = self.value(table);
        let (rows, d) = tv.dims2()?;
        if out_lead.iter().product::<usize>() != ids.len() {
            return Err(Error::InvalidArgument(format!(
                "gather: {} ids cannot fill leading shape {out_lead:?}",
                ids.len()
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::InvalidArgument(format!(
                    "gather: id {id} out of range for table with {rows} rows"
                )));
            }
            data.extend_from_slice(&tv.data()[id * d..(id + 1) * d]);
        }
        let mut shape = out_lead.to_vec();
        shape.push(d);
        let out = Tensor::new(&shape, data)?;
        let ng = self.ng(table);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
                frozen_row,
            },
            ng,
        ))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::SumAll(a), ng)
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let w = v.last_dim();
        softmax_rows_inplace(v.data_mut(), w);
        let ng = self.ng(a);
        self.push(v, Op::Softmax(a), ng)
    }

    /// `Σ_r −ln softmax(logits_r)[target_r] / norm` over rows with a target.
    ///
    /// Rows are the trailing-axis slices of `logits`; rows whose target is
    /// `None` contribute nothing.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[Option<usize>],
        norm: T,
    ) -> Result<NodeId> {
        let lv = self.value(logits);
        let c = lv.last_dim();
        if lv.outer_len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "cross entropy: {} rows but {} targets",
                lv.outer_len(),
                targets.len()
            )));
        }
        if norm <= T::zero() {
            return Err(Error::InvalidArgument(
                "cross entropy normaliser must be positive".into(),
            ));
        }
        let mut total = T::zero();
        for (row, t) in lv.data().chunks(c).zip(targets) {
            if let Some(t) = *t {
                if t >= c {
                    return Err(Error::InvalidArgument(format!(
                        "cross entropy target {t} out of range for {c} classes"
                    )));
                }
                total = total + (ops::lse(row) - row[t]);
            }
        }
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(total / norm),
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                norm,
            },
            ng,
        ))
    }

    /// Record an externally computed op.
    pub fn custom(
        &mut self,
        op: impl CustomOp<T> + 'a,
        inputs: &[NodeId],
        value: Tensor<T>,
    ) -> NodeId {
        let ng = inputs.iter().any(|&i| self.ng(i));
        self.push(value, Op::Custom(Box::new(op), inputs.to_vec()), ng)
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    ///
    /// Every parameter of the store gets an entry; parameters not reachable
    /// from `loss` keep an all-zero gradient.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut out = Gradients::zeros_like(self.store);
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let emit = |grads: &mut Vec<Option<Tensor<T>>>, id: NodeId, t: Tensor<T>| {
                if !self.nodes[id.0].needs_grad {
                    return;
                }
                match &mut grads[id.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => out.grads[pid.0].add_assign(&g),
                Op::Linear(x, w) => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (p, n) = (wv.shape()[0], wv.shape()[1]);
                    let m = xv.outer_len();
                    if self.ng(*x) {
                        let mut dx = Tensor::zeros(xv.shape());
                        gemm(
                            g.data(),
                            MatView::row_major(m, n),
                            wv.data(),
                            MatView::row_major(p, n).t(),
                            T::zero(),
                            dx.data_mut(),
                            MatView::row_major(m, p),
                        );
                        emit(&mut grads, *x, dx);
                    }
                    if self.ng(*w) {
                        let mut dw = Tensor::zeros(wv.shape());
                        gemm(
                            xv.data(),
                            MatView::row_major(m, p).t(),
                            g.data(),
                            MatView::row_major(m, n),
                            T::zero(),
                            dw.data_mut(),
                            MatView::row_major(p, n),
                        );
                        emit(&mut grads, *w, dw);
                    }
                }
                Op::Add(a, b) => {
                    if a == b {
                        emit(&mut grads, *a, g.map(|v| v + v));
                    } else {
                        emit(&mut grads, *a, g.clone());
                        emit(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    emit(&mut grads, *b, g.map(|v| -v));
                    emit(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    emit(&mut grads, *a, da);
                    emit(&mut grads, *b, db);
                }
                Op::Scale(a, c) => emit(&mut grads, *a, g.map(|v| v * *c)),
                Op::Tanh(a) => {
                    let y = self.value(NodeId(i));
                    emit(
                        &mut grads,
                        *a,
                        g.zip_map(y, |gv, yv| gv * (T::one() - yv * yv)),
                    );
                }
                Op::Sigmoid(a) => {
                    let y = self.value(NodeId(i));
                    emit(
                        &mut grads,
                        *a,
                        g.zip_map(y, |gv, yv| gv * yv * (T::one() - yv)),
                    );
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    emit(
                        &mut grads,
                        *a,
                        g.zip_map(x, |gv, xv| if xv > T::zero() { gv } else { T::zero() }),
                    );
                }
                Op::AddBias(x, b) => {
                    let d = self.value(*b).len();
                    let mut db = Tensor::zeros(&[d]);
                    for row in g.data().chunks(d) {
                        for (acc, &v) in db.data_mut().iter_mut().zip(row) {
                            *acc = *acc + v;
                        }
                    }
                    emit(&mut grads, *b, db);
                    emit(&mut grads, *x, g);
                }
                Op::Reshape(a) => {
                    let shape = self.shape(*a).to_vec();
                    emit(&mut grads, *a, g.reshape(&shape)?);
                }
                Op::ConcatLast(parts) => {
                    let width = g.last_dim();
                    let rows = g.outer_len();
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).last_dim();
                        if self.ng(p) {
                            let mut d = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                d.extend_from_slice(
                                    &g.data()[r * width + off..r * width + off + w],
                                );
                            }
                            emit(&mut grads, p, Tensor::new(self.shape(p), d)?);
                        }
                        off += w;
                    }
                }
                Op::Gather {
                    table,
                    ids,
                    frozen_row,
                } => {
                    let tv = self.value(*table);
                    let d = tv.last_dim();
                    let mut dt = Tensor::zeros(tv.shape());
                    for (k, &id) in ids.iter().enumerate() {
                        if Some(id) == *frozen_row {
                            continue;
                        }
                        let src = &g.data()[k * d..(k + 1) * d];
                        let dst = &mut dt.data_mut()[id * d..(id + 1) * d];
                        for (a, &b) in dst.iter_mut().zip(src) {
                            *a = *a + b;
                        }
                    }
                    emit(&mut grads, *table, dt);
                }
                Op::SumAll(a) => {
                    let gv = g.item();
                    emit(&mut grads, *a, Tensor::full(self.shape(*a), gv));
                }
                Op::Softmax(a) => {
                    let y = self.value(NodeId(i));
                    let w = y.last_dim();
                    let mut dx = Tensor::zeros(y.shape());
                    for ((dr, yr), gr) in dx
                        .data_mut()
                        .chunks_mut(w)
                        .zip(y.data().chunks(w))
                        .zip(g.data().chunks(w))
                    {
                        let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&a, &b)| s + a * b);
                        for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - dot);
                        }
                    }
                    emit(&mut grads, *a, dx);
                }
                Op::SoftmaxCe {
                    logits,
                    targets,
                    norm,
                } => {
                    let lv = self.value(*logits);
                    let c = lv.last_dim();
                    let scale = g.item() / *norm;
                    let mut dl = Tensor::zeros(lv.shape());
                    for ((dr, row), t) in dl
                        .data_mut()
                        .chunks_mut(c)
                        .zip(lv.data().chunks(c))
                        .zip(targets)
                    {
                        let Some(t) = *t else { continue };
                        dr.copy_from_slice(row);
                        softmax_rows_inplace(dr, c);
                        dr[t] = dr[t] - T::one();
                        for v in dr.iter_mut() {
                            *v = *v * scale;
                        }
                    }
                    emit(&mut grads, *logits, dl);
                }
                Op::Custom(op, inputs) => {
                    let ins: Vec<&Tensor<T>> = inputs.iter().map(|&n| self.value(n)).collect();
                    let outs = op.backward(&ins, self.value(NodeId(i)), &g);
                    debug_assert_eq!(outs.len(), inputs.len(), "{} backward arity", op.name());
                    for (&n, d) in inputs.iter().zip(outs) {
                        if let Some(d) = d {
                            debug_assert_eq!(d.shape(), self.shape(n), "{} grad shape", op.name());
                            emit(&mut grads, n, d);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[(&str, &[usize], &[f64])]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (n, sh, v) in vals {
            s.add(*n, Tensor::from_f64(sh, v).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn square_sum_gradient() {
        let s = store(&[("w", &[2], &[1., 2.])]);
        let mut g = Graph::new(&s);
        let w = g.param(s.id("w").unwrap());
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum_all(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(s.id("w").unwrap()).data(), &[2., 4.]);
    }

    #[test]
    fn constant_loss_leaves_zero_gradients() {
        let s = store(&[("w", &[2], &[1., 2.]), ("v", &[1], &[3.])]);
        let mut g = Graph::new(&s);
        let _ = g.param(s.id("w").unwrap());
        let c = g.input(Tensor::scalar(7.0));
        let grads = g.backward(c).unwrap();
        for (_, t) in grads.iter() {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let s = store(&[("w", &[2], &[1., 2.])]);
        let mut g = Graph::new(&s);
        let w = g.param(s.id("w").unwrap());
        assert!(matches!(g.backward(w), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn reused_node_sums_both_paths() {
        // loss = Σ (w + w)·x  vs  2·Σ w·x
        let s = store(&[("w", &[3], &[0.5, -1.0, 2.0])]);
        let x = Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap();
        let id = s.id("w").unwrap();

        let mut g = Graph::new(&s);
        let w = g.param(id);
        let xi = g.input(x.clone());
        let ww = g.add(w, w).unwrap();
        let p = g.mul(ww, xi).unwrap();
        let l = g.sum_all(p);
        let twice = g.backward(l).unwrap();

        let mut g = Graph::new(&s);
        let w = g.param(id);
        let xi = g.input(x);
        let p = g.mul(w, xi).unwrap();
        let l = g.sum_all(p);
        let single = g.backward(l).unwrap();

        let doubled: Vec<f64> = single.get(id).data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(twice.get(id).data(), &doubled[..]);
    }

    #[test]
    fn gather_skips_frozen_row() {
        let s = store(&[("e", &[3, 2], &[0., 0., 1., 2., 3., 4.])]);
        let id = s.id("e").unwrap();
        let mut g = Graph::new(&s);
        let e = g.param(id);
        let x = g.gather(e, &[0, 2, 2], &[3], Some(0)).unwrap();
        assert_eq!(g.value(x).data(), &[0., 0., 3., 4., 3., 4.]);
        let l = g.sum_all(x);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(id).data(), &[0., 0., 0., 0., 2., 2.]);
        assert!(g.gather(e, &[3], &[1], None).is_err());
    }

    #[test]
    fn duplicate_param_name_rejected() {
        let mut s = ParamStore::<f32>::new();
        s.add("a", Tensor::zeros(&[1])).unwrap();
        assert!(s.add("a", Tensor::zeros(&[1])).is_err());
    }
}
