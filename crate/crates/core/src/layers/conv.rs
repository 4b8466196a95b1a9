use super::basic::Activation;
use super::init::Init;
use crate::error::{Error, Result};
use crate::numcore::{gemm, CustomOp, Graph, MatView, NodeId, ParamId, Scalar, Tensor};

pub const CONV_WIDTHS: [usize; 4] = [1, 2, 3, 5];

/// Parallel 1-D convolution branches over time, one per filter width.
///
/// The group for width `w` stores its filters as a `[w, input, filters]`
/// tensor: element `[j, c, f]` weighs channel `c` at window offset `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvEncoderParams {
    pub widths: Vec<usize>,
    pub filters: usize,
    pub input: usize,
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
    /// Applied before pooling; `None` or `Relu`.
    pub activation: Activation,
}

impl ConvEncoderParams {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        widths: &[usize],
        filters: usize,
        input: usize,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) || filters == 0 || input == 0 {
            return Err(Error::InvalidArgument(
                "conv encoder needs positive widths, filters and input".into(),
            ));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &w in widths {
            weights.push(init.glorot(
                &format!("{name}.w{w}.weight"),
                &[w, input, filters],
                w * input,
                w * filters,
            )?);
            biases.push(init.zeros(&format!("{name}.w{w}.bias"), &[filters])?);
        }
        Ok(ConvEncoderParams {
            widths: widths.to_vec(),
            filters,
            input,
            weights,
            biases,
            activation: Activation::Relu,
        })
    }

    pub fn output_width(&self) -> usize {
        self.widths.len() * self.filters
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(0)
    }
}

struct ConvOp {
    batch: usize,
    len: usize,
    dim: usize,
    filters: usize,
    widths: Vec<usize>,
    /// Per group, per (batch, filter): flat row `b * len + t` of the winning
    /// window, or `None` when relu clipped the pooled value to zero.
    winners: Vec<Vec<Option<usize>>>,
}

/// Valid convolution over time per width, activation, global max-pool over time,
/// groups concatenated: batch × len × dim -> batch × (groups · filters).
pub fn conv_encoder<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    p: &ConvEncoderParams,
) -> Result<NodeId> {
    let xv = g.value(x);
    let (batch, len, dim) = xv.dims3()?;
    if dim != p.input {
        return Err(Error::shape("conv_encoder", xv.shape(), &[p.input]));
    }
    if len < p.max_width() {
        return Err(Error::InvalidArgument(format!(
            "conv_encoder: sequence length {len} shorter than widest filter {}",
            p.max_width()
        )));
    }
    let relu = match p.activation {
        Activation::Relu => true,
        Activation::None => false,
        Activation::Softmax => {
            return Err(Error::InvalidArgument(
                "conv_encoder activation must be none or relu".into(),
            ))
        }
    };
    let f = p.filters;
    let groups = p.widths.len();
    let mut out = vec![T::zero(); batch * groups * f];
    let mut winners = Vec::with_capacity(groups);
    for (gi, &w) in p.widths.iter().enumerate() {
        let wt = g.store().get(p.weights[gi]);
        let bias = g.store().get(p.biases[gi]);
        // Windows are overlapping rows of the flattened (batch·len) × dim
        // input; windows straddling two utterances are computed and ignored.
        let rows = batch * len - w + 1;
        let mut pre = vec![T::zero(); rows * f];
        gemm(
            xv.data(),
            MatView {
                rows,
                cols: w * dim,
                offset: 0,
                row_stride: dim,
                col_stride: 1,
            },
            wt.data(),
            MatView::row_major(w * dim, f),
            T::zero(),
            &mut pre,
            MatView::row_major(rows, f),
        );
        let mut win = vec![None; batch * f];
        for b in 0..batch {
            for j in 0..f {
                let mut best = b * len;
                for t in 1..=len - w {
                    if pre[(b * len + t) * f + j] > pre[best * f + j] {
                        best = b * len + t;
                    }
                }
                let v = pre[best * f + j] + bias.data()[j];
                if !relu || v > T::zero() {
                    out[b * groups * f + gi * f + j] = v;
                    win[b * f + j] = Some(best);
                }
            }
        }
        winners.push(win);
    }
    let value = Tensor::new(&[batch, groups * f], out)?;
    let mut inputs = vec![x];
    for gi in 0..groups {
        inputs.push(g.param(p.weights[gi]));
        inputs.push(g.param(p.biases[gi]));
    }
    let op = ConvOp {
        batch,
        len,
        dim,
        filters: f,
        widths: p.widths.clone(),
        winners,
    };
    Ok(g.custom(op, &inputs, value))
}

impl<T: Scalar> CustomOp<T> for ConvOp {
    fn name(&self) -> &'static str {
        "conv_encoder"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>> {
        let (d, f) = (self.dim, self.filters);
        let groups = self.widths.len();
        let x = inputs[0].data();
        let mut dx = Tensor::zeros(&[self.batch, self.len, d]);
        let mut res = vec![None];
        for (gi, &w) in self.widths.iter().enumerate() {
            let wt = inputs[1 + 2 * gi].data();
            let mut dw = Tensor::zeros(&[w, d, f]);
            let mut db = Tensor::zeros(&[f]);
            for b in 0..self.batch {
                for j in 0..f {
                    let Some(row) = self.winners[gi][b * f + j] else {
                        continue;
                    };
                    let go = grad.data()[b * groups * f + gi * f + j];
                    db.data_mut()[j] = db.data()[j] + go;
                    let base = row * d;
                    let dwd = dw.data_mut();
                    let dxd = dx.data_mut();
                    for c in 0..w * d {
                        dwd[c * f + j] = dwd[c * f + j] + go * x[base + c];
                        dxd[base + c] = dxd[base + c] + go * wt[c * f + j];
                    }
                }
            }
            res.push(Some(dw));
            res.push(Some(db));
        }
        res[0] = Some(dx);
        res
    }
}
