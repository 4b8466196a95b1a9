//! Dense-addition and low-rank bilinear (MLB) fusion of two feature
//! tensors, plus the 2-D to 3-D broadcast used before fusing a sentence
//! vector with per-position features.

use crate::error::{Error, Result};
use crate::layers::Init;
use crate::numcore::{gemm, CustomOp, Graph, MatView, NodeId, ParamId, Scalar, Tensor};

/// `l` rank-`k` bilinear forms between an `m`-vector and an `n`-vector.
///
/// Output `i` is `xᵀ U_i V_iᵀ y + b_i`, evaluated as
/// `1ᵀ(U_iᵀx ∘ V_iᵀy) + b_i`. `U` is stored `l × m × k`, `V` is `l × n × k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlbParams {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub u: ParamId,
    pub v: ParamId,
    pub b: ParamId,
}

impl MlbParams {
    pub fn validate_dims(m: usize, n: usize, k: usize, l: usize) -> Result<()> {
        if m == 0 || n == 0 || k == 0 || l == 0 {
            return Err(Error::InvalidArgument(
                "mlb extents must be positive".into(),
            ));
        }
        if k >= m.min(n) {
            return Err(Error::InvalidArgument(format!(
                "mlb rank {k} must be below min(m, n) = {}",
                m.min(n)
            )));
        }
        Ok(())
    }

    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        m: usize,
        n: usize,
        k: usize,
        l: usize,
    ) -> Result<Self> {
        Self::validate_dims(m, n, k, l)?;
        Ok(MlbParams {
            m,
            n,
            k,
            l,
            u: init.glorot(&format!("{name}.u"), &[l, m, k], m, k)?,
            v: init.glorot(&format!("{name}.v"), &[l, n, k], n, k)?,
            b: init.zeros(&format!("{name}.bias"), &[l])?,
        })
    }

    /// `l·(m+n)·k + l`
    pub fn parameter_count(&self) -> usize {
        self.l * (self.m + self.n) * self.k + self.l
    }

    /// Parameters of an unconstrained bilinear layer, `l·(m·n+1)`.
    pub fn full_bilinear_count(&self) -> usize {
        self.l * (self.m * self.n + 1)
    }
}

/// `[l, r, k]` to `[r, l·k]`, so one GEMM projects onto every factor.
fn to_projection<T: Scalar>(t: &[T], l: usize, r: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * l * k];
    for i in 0..l {
        for a in 0..r {
            let src = &t[(i * r + a) * k..(i * r + a + 1) * k];
            out[a * l * k + i * k..a * l * k + (i + 1) * k].copy_from_slice(src);
        }
    }
    out
}

fn from_projection<T: Scalar>(p: &[T], l: usize, r: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); l * r * k];
    for i in 0..l {
        for a in 0..r {
            out[(i * r + a) * k..(i * r + a + 1) * k]
                .copy_from_slice(&p[a * l * k + i * k..a * l * k + (i + 1) * k]);
        }
    }
    out
}

struct MlbOp<T> {
    rows: usize,
    dims: (usize, usize, usize, usize),
    up: Vec<T>,
    vp: Vec<T>,
    px: Vec<T>,
    qy: Vec<T>,
}

/// Position-wise MLB fusion: `x[..., m]`, `y[..., n]` -> `[..., l]`.
pub fn mlb_fuse<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    y: NodeId,
    p: &MlbParams,
) -> Result<NodeId> {
    let (xv, yv) = (g.value(x), g.value(y));
    let (m, n, k, l) = (p.m, p.n, p.k, p.l);
    if xv.last_dim() != m || yv.last_dim() != n || xv.outer_len() != yv.outer_len() {
        return Err(Error::shape("mlb_fuse", xv.shape(), yv.shape()));
    }
    let xs = &xv.shape()[..xv.ndim() - 1];
    if xs != &yv.shape()[..yv.ndim() - 1] {
        return Err(Error::shape("mlb_fuse", xv.shape(), yv.shape()));
    }
    let u = g.store().get(p.u);
    let v = g.store().get(p.v);
    if u.shape() != [l, m, k] || v.shape() != [l, n, k] {
        return Err(Error::shape("mlb params", u.shape(), v.shape()));
    }
    let rows = xv.outer_len();
    let lk = l * k;
    let up = to_projection(u.data(), l, m, k);
    let vp = to_projection(v.data(), l, n, k);
    let mut px = vec![T::zero(); rows * lk];
    let mut qy = vec![T::zero(); rows * lk];
    gemm(
        xv.data(),
        MatView::row_major(rows, m),
        &up,
        MatView::row_major(m, lk),
        T::zero(),
        &mut px,
        MatView::row_major(rows, lk),
    );
    gemm(
        yv.data(),
        MatView::row_major(rows, n),
        &vp,
        MatView::row_major(n, lk),
        T::zero(),
        &mut qy,
        MatView::row_major(rows, lk),
    );
    let bias = g.store().get(p.b).data();
    let mut out = vec![T::zero(); rows * l];
    for r in 0..rows {
        for i in 0..l {
            let s = r * lk + i * k;
            let dot: T = px[s..s + k]
                .iter()
                .zip(&qy[s..s + k])
                .map(|(&a, &b)| a * b)
                .sum();
            out[r * l + i] = dot + bias[i];
        }
    }
    let mut shape = xs.to_vec();
    shape.push(l);
    let value = Tensor::new(&shape, out)?;
    let inputs = [x, y, g.param(p.u), g.param(p.v), g.param(p.b)];
    let op = MlbOp {
        rows,
        dims: (m, n, k, l),
        up,
        vp,
        px,
        qy,
    };
    Ok(g.custom(op, &inputs, value))
}

impl<T: Scalar> CustomOp<T> for MlbOp<T> {
    fn name(&self) -> &'static str {
        "mlb_fuse"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>> {
        let (m, n, k, l) = self.dims;
        let (rows, lk) = (self.rows, l * k);
        let gd = grad.data();
        let mut dp = vec![T::zero(); rows * lk];
        let mut dq = vec![T::zero(); rows * lk];
        let mut db = Tensor::zeros(&[l]);
        for r in 0..rows {
            for i in 0..l {
                let go = gd[r * l + i];
                db.data_mut()[i] = db.data()[i] + go;
                for d in 0..k {
                    let s = r * lk + i * k + d;
                    dp[s] = go * self.qy[s];
                    dq[s] = go * self.px[s];
                }
            }
        }
        let mut dx = Tensor::zeros(inputs[0].shape());
        let mut dy = Tensor::zeros(inputs[1].shape());
        gemm(
            &dp,
            MatView::row_major(rows, lk),
            &self.up,
            MatView::row_major(m, lk).t(),
            T::zero(),
            dx.data_mut(),
            MatView::row_major(rows, m),
        );
        gemm(
            &dq,
            MatView::row_major(rows, lk),
            &self.vp,
            MatView::row_major(n, lk).t(),
            T::zero(),
            dy.data_mut(),
            MatView::row_major(rows, n),
        );
        let mut dup = vec![T::zero(); m * lk];
        let mut dvp = vec![T::zero(); n * lk];
        gemm(
            inputs[0].data(),
            MatView::row_major(rows, m).t(),
            &dp,
            MatView::row_major(rows, lk),
            T::zero(),
            &mut dup,
            MatView::row_major(m, lk),
        );
        gemm(
            inputs[1].data(),
            MatView::row_major(rows, n).t(),
            &dq,
            MatView::row_major(rows, lk),
            T::zero(),
            &mut dvp,
            MatView::row_major(n, lk),
        );
        let du = Tensor::new(&[l, m, k], from_projection(&dup, l, m, k)).expect("shape");
        let dv = Tensor::new(&[l, n, k], from_projection(&dvp, l, n, k)).expect("shape");
        vec![Some(dx), Some(dy), Some(du), Some(dv), Some(db)]
    }
}

/// Elementwise sum of two equally shaped feature tensors.
pub fn dense_add<T: Scalar>(g: &mut Graph<'_, T>, x: NodeId, y: NodeId) -> Result<NodeId> {
    g.add(x, y)
}

struct BroadcastOp {
    len: usize,
}

/// Repeat each row of `v` (batch × d) at `len` positions: batch × len × d.
pub fn broadcast_intent<T: Scalar>(g: &mut Graph<'_, T>, v: NodeId, len: usize) -> Result<NodeId> {
    if len == 0 {
        return Err(Error::InvalidArgument(
            "broadcast length must be at least 1".into(),
        ));
    }
    let vv = g.value(v);
    let (b, d) = vv.dims2()?;
    let mut data = Vec::with_capacity(b * len * d);
    for row in vv.data().chunks(d) {
        for _ in 0..len {
            data.extend_from_slice(row);
        }
    }
    let value = Tensor::new(&[b, len, d], data)?;
    Ok(g.custom(BroadcastOp { len }, &[v], value))
}

impl<T: Scalar> CustomOp<T> for BroadcastOp {
    fn name(&self) -> &'static str {
        "broadcast"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>> {
        let d = inputs[0].last_dim();
        let mut dv = Tensor::zeros(inputs[0].shape());
        for (r, block) in grad.data().chunks(self.len * d).enumerate() {
            let out = &mut dv.data_mut()[r * d..(r + 1) * d];
            for pos in block.chunks(d) {
                for (o, &gv) in out.iter_mut().zip(pos) {
                    *o = *o + gv;
                }
            }
        }
        vec![Some(dv)]
    }
}
