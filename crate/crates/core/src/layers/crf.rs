use super::init::Init;
use crate::error::{Error, Result};
use crate::numcore::{logsumexp, CustomOp, Graph, NodeId, ParamId, ParamStore, Scalar, Tensor};

/// Linear-chain CRF scores over `tags` labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrfParams {
    pub tags: usize,
    /// `[i, j]`: score of tag `j` following tag `i`.
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
}

impl CrfParams {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, tags: usize) -> Result<Self> {
        if tags == 0 {
            return Err(Error::InvalidArgument("crf needs at least one tag".into()));
        }
        Ok(CrfParams {
            tags,
            transitions: init.zeros(&format!("{name}.transitions"), &[tags, tags])?,
            start: init.zeros(&format!("{name}.start"), &[tags])?,
            end: init.zeros(&format!("{name}.end"), &[tags])?,
        })
    }

    pub fn view<'s, T: Scalar>(&self, store: &'s ParamStore<T>) -> CrfView<'s, T> {
        CrfView {
            tags: self.tags,
            transitions: store.get(self.transitions).data(),
            start: store.get(self.start).data(),
            end: store.get(self.end).data(),
        }
    }
}

/// Borrowed CRF weights.
#[derive(Debug, Clone, Copy)]
pub struct CrfView<'s, T> {
    pub tags: usize,
    pub transitions: &'s [T],
    pub start: &'s [T],
    pub end: &'s [T],
}

impl<T: Scalar> CrfView<'_, T> {
    fn check(&self, emissions: &[T], len: usize) -> Result<()> {
        let k = self.tags;
        if len == 0 {
            return Err(Error::InvalidArgument("crf: sequence length 0".into()));
        }
        if emissions.len() < len * k {
            return Err(Error::InvalidArgument(format!(
                "crf: {} emission scores cannot cover {len} positions of {k} tags",
                emissions.len()
            )));
        }
        if self.transitions.len() != k * k || self.start.len() != k || self.end.len() != k {
            return Err(Error::InvalidArgument(
                "crf: parameter shapes do not match tag count".into(),
            ));
        }
        Ok(())
    }

    /// Score of one tag path over the first `path.len()` positions.
    pub fn path_score(&self, emissions: &[T], path: &[usize]) -> T {
        let k = self.tags;
        let mut s = self.start[path[0]] + self.end[path[path.len() - 1]];
        for (t, &y) in path.iter().enumerate() {
            s = s + emissions[t * k + y];
            if t > 0 {
                s = s + self.transitions[path[t - 1] * k + y];
            }
        }
        s
    }

    /// Log-space forward scores, `len × tags`.
    fn alphas(&self, emissions: &[T], len: usize) -> Vec<T> {
        let k = self.tags;
        let mut a = vec![T::zero(); len * k];
        for j in 0..k {
            a[j] = self.start[j] + emissions[j];
        }
        let mut buf = vec![T::zero(); k];
        for t in 1..len {
            for j in 0..k {
                for i in 0..k {
                    buf[i] = a[(t - 1) * k + i] + self.transitions[i * k + j];
                }
                a[t * k + j] = lse(&buf) + emissions[t * k + j];
            }
        }
        a
    }

    /// Log-space backward scores, `len × tags`, including the end scores.
    fn betas(&self, emissions: &[T], len: usize) -> Vec<T> {
        let k = self.tags;
        let mut b = vec![T::zero(); len * k];
        b[(len - 1) * k..].copy_from_slice(self.end);
        let mut buf = vec![T::zero(); k];
        for t in (0..len - 1).rev() {
            for i in 0..k {
                for j in 0..k {
                    buf[j] = self.transitions[i * k + j]
                        + emissions[(t + 1) * k + j]
                        + b[(t + 1) * k + j];
                }
                b[t * k + i] = lse(&buf);
            }
        }
        b
    }

    /// `log Σ_paths exp(score)` over the first `len` positions.
    pub fn log_partition(&self, emissions: &[T], len: usize) -> Result<T> {
        self.check(emissions, len)?;
        let k = self.tags;
        let a = self.alphas(emissions, len);
        let last: Vec<T> = (0..k).map(|j| a[(len - 1) * k + j] + self.end[j]).collect();
        Ok(lse(&last))
    }
}

fn lse<T: Scalar>(v: &[T]) -> T {
    logsumexp(v).expect("non-empty")
}

/// Highest-scoring tag path over the first `len` positions of `emissions`
/// (`len × tags`, row-major). Ties go to the lowest tag id at every argmax.
pub fn crf_viterbi<T: Scalar>(
    emissions: &[T],
    len: usize,
    crf: &CrfView<'_, T>,
) -> Result<Vec<usize>> {
    crf.check(emissions, len)?;
    let k = crf.tags;
    let mut delta: Vec<T> = (0..k).map(|j| crf.start[j] + emissions[j]).collect();
    let mut back = vec![0usize; len * k];
    let mut next = vec![T::zero(); k];
    for t in 1..len {
        for j in 0..k {
            let mut best = 0;
            let mut bv = delta[0] + crf.transitions[j];
            for i in 1..k {
                let v = delta[i] + crf.transitions[i * k + j];
                if v > bv {
                    best = i;
                    bv = v;
                }
            }
            back[t * k + j] = best;
            next[j] = bv + emissions[t * k + j];
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    let mut bv = delta[0] + crf.end[0];
    for j in 1..k {
        let v = delta[j] + crf.end[j];
        if v > bv {
            last = j;
            bv = v;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for t in (1..len).rev() {
        path[t - 1] = back[t * k + path[t]];
    }
    Ok(path)
}

struct CrfNllOp<T> {
    d_emissions: Tensor<T>,
    d_transitions: Tensor<T>,
    d_start: Tensor<T>,
    d_end: Tensor<T>,
}

/// Sum over utterances of `log Z − score(gold)`, divided by `norm`.
///
/// `emissions` is batch × len × tags; `gold` is batch × len row-major and is
/// read only below each utterance's length. Pass the batch size as `norm`
/// for the batch mean.
pub fn crf_nll<T: Scalar>(
    g: &mut Graph<'_, T>,
    emissions: NodeId,
    gold: &[usize],
    lengths: &[usize],
    p: &CrfParams,
    norm: T,
) -> Result<NodeId> {
    let ev = g.value(emissions);
    let (batch, len, k) = ev.dims3()?;
    if k != p.tags {
        return Err(Error::shape("crf_nll", ev.shape(), &[p.tags]));
    }
    if lengths.len() != batch || gold.len() != batch * len {
        return Err(Error::InvalidArgument(format!(
            "crf_nll: {} lengths and {} gold tags for a {batch}×{len} batch",
            lengths.len(),
            gold.len()
        )));
    }
    if norm <= T::zero() {
        return Err(Error::InvalidArgument(
            "crf_nll normaliser must be positive".into(),
        ));
    }
    if !ev.all_finite() {
        return Err(Error::NonFinite("crf emissions".into()));
    }
    let crf = p.view(g.store());
    let mut d_e = Tensor::zeros(ev.shape());
    let mut d_tr = Tensor::zeros(&[k, k]);
    let mut d_s = Tensor::zeros(&[k]);
    let mut d_en = Tensor::zeros(&[k]);
    let mut total = T::zero();
    for b in 0..batch {
        let n = lengths[b];
        if n == 0 || n > len {
            return Err(Error::InvalidArgument(format!(
                "crf_nll: utterance {b} has length {n}"
            )));
        }
        let y = &gold[b * len..b * len + n];
        if let Some(&bad) = y.iter().find(|&&t| t >= k) {
            return Err(Error::InvalidArgument(format!(
                "crf_nll: gold tag {bad} in utterance {b} is not a real tag (padding or unknown)"
            )));
        }
        let e = &ev.data()[b * len * k..(b * len + n) * k];
        let a = crf.alphas(e, n);
        let be = crf.betas(e, n);
        let last: Vec<T> = (0..k).map(|j| a[(n - 1) * k + j] + crf.end[j]).collect();
        let log_z = lse(&last);
        total = total + log_z - crf.path_score(e, y);

        let de = &mut d_e.data_mut()[b * len * k..];
        for t in 0..n {
            for j in 0..k {
                de[t * k + j] = de[t * k + j] + (a[t * k + j] + be[t * k + j] - log_z).exp();
            }
            de[t * k + y[t]] = de[t * k + y[t]] - T::one();
        }
        for t in 1..n {
            for i in 0..k {
                for j in 0..k {
                    let lp = a[(t - 1) * k + i]
                        + crf.transitions[i * k + j]
                        + e[t * k + j]
                        + be[t * k + j]
                        - log_z;
                    let m = &mut d_tr.data_mut()[i * k + j];
                    *m = *m + lp.exp();
                }
            }
            let m = &mut d_tr.data_mut()[y[t - 1] * k + y[t]];
            *m = *m - T::one();
        }
        for j in 0..k {
            d_s.data_mut()[j] = d_s.data()[j] + (a[j] + be[j] - log_z).exp();
            d_en.data_mut()[j] = d_en.data()[j] + (a[(n - 1) * k + j] + crf.end[j] - log_z).exp();
        }
        d_s.data_mut()[y[0]] = d_s.data()[y[0]] - T::one();
        d_en.data_mut()[y[n - 1]] = d_en.data()[y[n - 1]] - T::one();
    }
    let inv = T::one() / norm;
    let scale = |t: Tensor<T>| t.map(|v| v * inv);
    let op = CrfNllOp {
        d_emissions: scale(d_e),
        d_transitions: scale(d_tr),
        d_start: scale(d_s),
        d_end: scale(d_en),
    };
    let inputs = [
        emissions,
        g.param(p.transitions),
        g.param(p.start),
        g.param(p.end),
    ];
    Ok(g.custom(op, &inputs, Tensor::scalar(total * inv)))
}

impl<T: Scalar> CustomOp<T> for CrfNllOp<T> {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>> {
        let s = grad.item();
        [
            &self.d_emissions,
            &self.d_transitions,
            &self.d_start,
            &self.d_end,
        ]
        .into_iter()
        .map(|t| Some(t.map(|v| v * s)))
        .collect()
    }
}
