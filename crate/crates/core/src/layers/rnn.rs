use serde::{Deserialize, Serialize};

use super::init::Init;
use crate::error::{Error, Result};
use crate::numcore::{gemm, sigmoid, CustomOp, Graph, MatView, NodeId, ParamId, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

/// One direction of a recurrent layer.
///
/// Gate blocks are laid side by side along the trailing axis: `[z | r | h̃]`
/// for the GRU and `[i | f | g | o]` for the LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RnnParams {
    pub cell: CellKind,
    pub input: usize,
    pub hidden: usize,
    /// input × gates·hidden
    pub wx: ParamId,
    /// hidden × gates·hidden
    pub wh: ParamId,
    pub bias: ParamId,
}

impl RnnParams {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        cell: CellKind,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        let gh = cell.gates() * hidden;
        Ok(RnnParams {
            cell,
            input,
            hidden,
            wx: init.glorot(&format!("{name}.wx"), &[input, gh], input, gh)?,
            wh: init.glorot(&format!("{name}.wh"), &[hidden, gh], hidden, gh)?,
            bias: init.zeros(&format!("{name}.bias"), &[gh])?,
        })
    }
}

struct RnnOp<T> {
    cell: CellKind,
    reverse: bool,
    batch: usize,
    len: usize,
    hidden: usize,
    /// Post-activation gate values, batch × len × gates·hidden.
    gates: Vec<T>,
    /// LSTM cell states, batch × len × hidden (empty for the GRU).
    cells: Vec<T>,
}

impl<T> RnnOp<T> {
    fn time(&self, step: usize) -> usize {
        if self.reverse {
            self.len - 1 - step
        } else {
            step
        }
    }
}

fn gather_rows<T: Copy>(
    src: &[T],
    batch: usize,
    len: usize,
    width: usize,
    t: usize,
    dst: &mut [T],
) {
    for b in 0..batch {
        let s = (b * len + t) * width;
        dst[b * width..(b + 1) * width].copy_from_slice(&src[s..s + width]);
    }
}

/// Run one direction over the whole sequence: batch × len × input -> batch × len × hidden.
///
/// With `reverse`, the recurrence consumes positions from last to first and
/// the output at position `t` is the state after reading `x_t`.
/// Initial states are zero.
pub fn rnn<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    p: &RnnParams,
    reverse: bool,
) -> Result<NodeId> {
    let xv = g.value(x);
    let (batch, len, d) = xv.dims3()?;
    if d != p.input {
        return Err(Error::shape("rnn input", xv.shape(), &[p.input]));
    }
    let h = p.hidden;
    let ng = p.cell.gates();
    let gh = ng * h;
    let wx = g.store().get(p.wx);
    let wh = g.store().get(p.wh);
    let bias = g.store().get(p.bias);
    if wx.shape() != [d, gh] || wh.shape() != [h, gh] || bias.shape() != [gh] {
        return Err(Error::shape("rnn params", wx.shape(), &[d, gh]));
    }

    // input projections for every position at once
    let mut xa = vec![T::zero(); batch * len * gh];
    for row in xa.chunks_mut(gh) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        xv.data(),
        MatView::row_major(batch * len, d),
        wx.data(),
        MatView::row_major(d, gh),
        T::one(),
        &mut xa,
        MatView::row_major(batch * len, gh),
    );

    let mut out = vec![T::zero(); batch * len * h];
    let mut cells = if p.cell == CellKind::Lstm {
        vec![T::zero(); batch * len * h]
    } else {
        Vec::new()
    };
    let mut h_prev = vec![T::zero(); batch * h];
    let mut c_prev = vec![T::zero(); batch * h];
    let mut pre = vec![T::zero(); batch * gh];
    let mut rh = vec![T::zero(); batch * h];
    let mut hh = vec![T::zero(); batch * h];
    let one = T::one();

    for step in 0..len {
        let t = if reverse { len - 1 - step } else { step };
        gather_rows(&xa, batch, len, gh, t, &mut pre);
        match p.cell {
            CellKind::Gru => {
                // z and r blocks take h_prev · Wh[:, :2h]
                gemm(
                    &h_prev,
                    MatView::row_major(batch, h),
                    wh.data(),
                    MatView {
                        rows: h,
                        cols: 2 * h,
                        offset: 0,
                        row_stride: gh,
                        col_stride: 1,
                    },
                    one,
                    &mut pre,
                    MatView {
                        rows: batch,
                        cols: 2 * h,
                        offset: 0,
                        row_stride: gh,
                        col_stride: 1,
                    },
                );
                for b in 0..batch {
                    let row = &mut pre[b * gh..(b + 1) * gh];
                    for j in 0..2 * h {
                        row[j] = sigmoid(row[j]);
                    }
                    for j in 0..h {
                        rh[b * h + j] = row[h + j] * h_prev[b * h + j];
                    }
                }
                gemm(
                    &rh,
                    MatView::row_major(batch, h),
                    wh.data(),
                    MatView {
                        rows: h,
                        cols: h,
                        offset: 2 * h,
                        row_stride: gh,
                        col_stride: 1,
                    },
                    T::zero(),
                    &mut hh,
                    MatView::row_major(batch, h),
                );
                for b in 0..batch {
                    let row = &mut pre[b * gh..(b + 1) * gh];
                    for j in 0..h {
                        let cand = (row[2 * h + j] + hh[b * h + j]).tanh();
                        row[2 * h + j] = cand;
                        let z = row[j];
                        let hp = h_prev[b * h + j];
                        h_prev[b * h + j] = (one - z) * hp + z * cand;
                    }
                }
            }
            CellKind::Lstm => {
                gemm(
                    &h_prev,
                    MatView::row_major(batch, h),
                    wh.data(),
                    MatView::row_major(h, gh),
                    one,
                    &mut pre,
                    MatView::row_major(batch, gh),
                );
                for b in 0..batch {
                    let row = &mut pre[b * gh..(b + 1) * gh];
                    for j in 0..h {
                        let i = sigmoid(row[j]);
                        let f = sigmoid(row[h + j]);
                        let gg = row[2 * h + j].tanh();
                        let o = sigmoid(row[3 * h + j]);
                        row[j] = i;
                        row[h + j] = f;
                        row[2 * h + j] = gg;
                        row[3 * h + j] = o;
                        let c = f * c_prev[b * h + j] + i * gg;
                        c_prev[b * h + j] = c;
                        h_prev[b * h + j] = o * c.tanh();
                        cells[(b * len + t) * h + j] = c;
                    }
                }
            }
        }
        for b in 0..batch {
            let s = (b * len + t) * h;
            out[s..s + h].copy_from_slice(&h_prev[b * h..(b + 1) * h]);
            let s = (b * len + t) * gh;
            xa[s..s + gh].copy_from_slice(&pre[b * gh..(b + 1) * gh]);
        }
    }

    let value = Tensor::new(&[batch, len, h], out)?;
    let inputs = [x, g.param(p.wx), g.param(p.wh), g.param(p.bias)];
    let op = RnnOp {
        cell: p.cell,
        reverse,
        batch,
        len,
        hidden: h,
        gates: xa,
        cells,
    };
    Ok(g.custom(op, &inputs, value))
}

impl<T: Scalar> CustomOp<T> for RnnOp<T> {
    fn name(&self) -> &'static str {
        match self.cell {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>> {
        let (x, wx, wh) = (inputs[0], inputs[1], inputs[2]);
        let (batch, len, h) = (self.batch, self.len, self.hidden);
        let d = x.last_dim();
        let gh = self.cell.gates() * h;
        let one = T::one();
        let out = output.data();

        // pre-activation gradients for every position
        let mut da = vec![T::zero(); batch * len * gh];
        let mut dwh = Tensor::zeros(&[h, gh]);
        let mut dh_carry = vec![T::zero(); batch * h];
        let mut dc_carry = vec![T::zero(); batch * h];
        let mut h_prev = vec![T::zero(); batch * h];
        let mut gates = vec![T::zero(); batch * gh];
        let mut dat = vec![T::zero(); batch * gh];
        let mut rh = vec![T::zero(); batch * h];
        let mut drh = vec![T::zero(); batch * h];

        for step in (0..len).rev() {
            let t = self.time(step);
            if step > 0 {
                gather_rows(out, batch, len, h, self.time(step - 1), &mut h_prev);
            } else {
                h_prev.fill(T::zero());
            }
            gather_rows(&self.gates, batch, len, gh, t, &mut gates);
            let mut dh = vec![T::zero(); batch * h];
            gather_rows(grad.data(), batch, len, h, t, &mut dh);
            for (a, c) in dh.iter_mut().zip(&dh_carry) {
                *a = *a + *c;
            }
            match self.cell {
                CellKind::Gru => {
                    for b in 0..batch {
                        for j in 0..h {
                            let (k, kg) = (b * h + j, b * gh);
                            let z = gates[kg + j];
                            let r = gates[kg + h + j];
                            let cand = gates[kg + 2 * h + j];
                            let hp = h_prev[k];
                            let g = dh[k];
                            dat[kg + 2 * h + j] = g * z * (one - cand * cand);
                            dat[kg + j] = g * (cand - hp) * z * (one - z);
                            dh_carry[k] = g * (one - z);
                            rh[k] = r * hp;
                        }
                    }
                    let cand_view = MatView {
                        rows: batch,
                        cols: h,
                        offset: 2 * h,
                        row_stride: gh,
                        col_stride: 1,
                    };
                    let wh_cand = MatView {
                        rows: h,
                        cols: h,
                        offset: 2 * h,
                        row_stride: gh,
                        col_stride: 1,
                    };
                    // d(r∘h_prev) = da_cand · Wh_candᵀ
                    gemm(
                        &dat,
                        cand_view,
                        wh.data(),
                        wh_cand.t(),
                        T::zero(),
                        &mut drh,
                        MatView::row_major(batch, h),
                    );
                    gemm(
                        &rh,
                        MatView::row_major(batch, h).t(),
                        &dat,
                        cand_view,
                        one,
                        dwh.data_mut(),
                        wh_cand,
                    );
                    for b in 0..batch {
                        for j in 0..h {
                            let (k, kg) = (b * h + j, b * gh);
                            let r = gates[kg + h + j];
                            dat[kg + h + j] = drh[k] * h_prev[k] * r * (one - r);
                            dh_carry[k] = dh_carry[k] + drh[k] * r;
                        }
                    }
                    let zr_view = MatView {
                        rows: batch,
                        cols: 2 * h,
                        offset: 0,
                        row_stride: gh,
                        col_stride: 1,
                    };
                    let wh_zr = MatView {
                        rows: h,
                        cols: 2 * h,
                        offset: 0,
                        row_stride: gh,
                        col_stride: 1,
                    };
                    gemm(
                        &h_prev,
                        MatView::row_major(batch, h).t(),
                        &dat,
                        zr_view,
                        one,
                        dwh.data_mut(),
                        wh_zr,
                    );
                    gemm(
                        &dat,
                        zr_view,
                        wh.data(),
                        wh_zr.t(),
                        one,
                        &mut dh_carry,
                        MatView::row_major(batch, h),
                    );
                }
                CellKind::Lstm => {
                    for b in 0..batch {
                        for j in 0..h {
                            let (k, kg) = (b * h + j, b * gh);
                            let i = gates[kg + j];
                            let f = gates[kg + h + j];
                            let gg = gates[kg + 2 * h + j];
                            let o = gates[kg + 3 * h + j];
                            let c = self.cells[(b * len + t) * h + j];
                            let c_prev = if step > 0 {
                                self.cells[(b * len + self.time(step - 1)) * h + j]
                            } else {
                                T::zero()
                            };
                            let tc = c.tanh();
                            let dc = dc_carry[k] + dh[k] * o * (one - tc * tc);
                            dat[kg + j] = dc * gg * i * (one - i);
                            dat[kg + h + j] = dc * c_prev * f * (one - f);
                            dat[kg + 2 * h + j] = dc * i * (one - gg * gg);
                            dat[kg + 3 * h + j] = dh[k] * tc * o * (one - o);
                            dc_carry[k] = dc * f;
                        }
                    }
                    let all = MatView::row_major(batch, gh);
                    gemm(
                        &h_prev,
                        MatView::row_major(batch, h).t(),
                        &dat,
                        all,
                        one,
                        dwh.data_mut(),
                        MatView::row_major(h, gh),
                    );
                    gemm(
                        &dat,
                        all,
                        wh.data(),
                        MatView::row_major(h, gh).t(),
                        T::zero(),
                        &mut dh_carry,
                        MatView::row_major(batch, h),
                    );
                }
            }
            for b in 0..batch {
                let s = (b * len + t) * gh;
                da[s..s + gh].copy_from_slice(&dat[b * gh..(b + 1) * gh]);
            }
        }

        let n = batch * len;
        let mut dwx = Tensor::zeros(&[d, gh]);
        gemm(
            x.data(),
            MatView::row_major(n, d).t(),
            &da,
            MatView::row_major(n, gh),
            T::zero(),
            dwx.data_mut(),
            MatView::row_major(d, gh),
        );
        let mut db = Tensor::zeros(&[gh]);
        for row in da.chunks(gh) {
            for (o, &v) in db.data_mut().iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            &da,
            MatView::row_major(n, gh),
            wx.data(),
            MatView::row_major(d, gh).t(),
            T::zero(),
            dx.data_mut(),
            MatView::row_major(n, d),
        );
        vec![Some(dx), Some(dwx), Some(dwh), Some(db)]
    }
}

/// Forward and reverse passes concatenated per position:
/// batch × len × input -> batch × len × (fwd.hidden + bwd.hidden).
pub fn birnn<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    fwd: &RnnParams,
    bwd: &RnnParams,
) -> Result<NodeId> {
    let f = rnn(g, x, fwd, false)?;
    let b = rnn(g, x, bwd, true)?;
    g.concat_last(&[f, b])
}
