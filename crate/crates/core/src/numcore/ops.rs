//! Value-level tensor arithmetic. The differentiable counterparts live on
//! [`Graph`](super::Graph) and call into these.

use super::tensor::{gemm, MatView, Scalar, Tensor};
use crate::error::{Error, Result};

/// Pointwise operation selector for [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pointwise {
    Add,
    Hadamard,
    Tanh,
    Sigmoid,
    Relu,
    Scale(f64),
}

impl Pointwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Pointwise::Add | Pointwise::Hadamard)
    }
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, p) = a
        .dims2()
        .map_err(|_| Error::shape("matmul", a.shape(), b.shape()))?;
    let (p2, n) = b
        .dims2()
        .map_err(|_| Error::shape("matmul", a.shape(), b.shape()))?;
    if p != p2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = Tensor::zeros(&[m, n]);
    gemm(
        a.data(),
        MatView::row_major(m, p),
        b.data(),
        MatView::row_major(p, n),
        T::zero(),
        out.data_mut(),
        MatView::row_major(m, n),
    );
    Ok(out)
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn elementwise<T: Scalar>(
    kind: Pointwise,
    a: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    if kind.is_binary() {
        let b = b.ok_or_else(|| Error::InvalidArgument(format!("{kind:?} needs two operands")))?;
        if a.shape() != b.shape() {
            return Err(Error::shape("elementwise", a.shape(), b.shape()));
        }
        return Ok(match kind {
            Pointwise::Add => a.zip_map(b, |x, y| x + y),
            _ => a.zip_map(b, |x, y| x * y),
        });
    }
    Ok(match kind {
        Pointwise::Tanh => a.map(|x| x.tanh()),
        Pointwise::Sigmoid => a.map(sigmoid),
        Pointwise::Relu => a.map(|x| x.max(T::zero())),
        Pointwise::Scale(c) => {
            let c = T::of(c);
            a.map(|x| x * c)
        }
        Pointwise::Add | Pointwise::Hadamard => unreachable!(),
    })
}

/// Softmax along `axis`, max-shifted.
pub fn softmax<T: Scalar>(logits: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let shape = logits.shape();
    if axis >= shape.len() {
        return Err(Error::InvalidArgument(format!(
            "softmax axis {axis} out of range for shape {shape:?}"
        )));
    }
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let src = logits.data();
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            let at = |j: usize| base + j * inner;
            let mut mx = T::neg_infinity();
            for j in 0..extent {
                mx = mx.max(src[at(j)]);
            }
            let mut z = T::zero();
            for j in 0..extent {
                let e = (src[at(j)] - mx).exp();
                out[at(j)] = e;
                z = z + e;
            }
            for j in 0..extent {
                out[at(j)] = out[at(j)] / z;
            }
        }
    }
    Tensor::new(shape, out)
}

/// Softmax over each contiguous row of length `width`, in place.
pub(crate) fn softmax_rows_inplace<T: Scalar>(data: &mut [T], width: usize) {
    for row in data.chunks_mut(width) {
        let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            z = z + *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
}

/// `ln Σ exp(v)` with the maximum shifted out.
pub fn logsumexp<T: Scalar>(v: &[T]) -> Result<T> {
    if v.is_empty() {
        return Err(Error::Empty("logsumexp"));
    }
    Ok(lse(v))
}

pub(crate) fn lse<T: Scalar>(v: &[T]) -> T {
    let mx = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    if mx == T::neg_infinity() {
        return mx;
    }
    let s = v.iter().fold(T::zero(), |acc, &x| acc + (x - mx).exp());
    mx + s.ln()
}
