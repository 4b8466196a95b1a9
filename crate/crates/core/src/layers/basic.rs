use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::Init;
use crate::datapipe::PAD;
use crate::error::{Error, Result};
use crate::numcore::{Graph, NodeId, ParamId, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl DenseParams {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        input: usize,
        output: usize,
    ) -> Result<Self> {
        Ok(DenseParams {
            weight: init.glorot(&format!("{name}.weight"), &[input, output], input, output)?,
            bias: init.zeros(&format!("{name}.bias"), &[output])?,
            input,
            output,
        })
    }
}

/// Affine map along the trailing axis, then `act`.
pub fn dense<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    p: &DenseParams,
    act: Activation,
) -> Result<NodeId> {
    let w = g.param(p.weight);
    let b = g.param(p.bias);
    let y = g.linear(x, w)?;
    let y = g.add_bias(y, b)?;
    Ok(match act {
        Activation::None => y,
        Activation::Relu => g.relu(y),
        Activation::Softmax => g.softmax(y),
    })
}

/// Inverted dropout: in training, zero each element with probability `rate`
/// and scale survivors by `1 / (1 - rate)`. Identity at inference.
pub fn dropout<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: NodeId,
    rate: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<NodeId> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x);
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask = Tensor::from_fn(g.shape(x), |_| {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    });
    let m = g.input(mask);
    g.mul(x, m)
}

/// `ids` (batch × len, row-major) to batch × len × dim rows of `table`.
/// The padding row never receives gradient.
pub fn embed_lookup<T: Scalar>(
    g: &mut Graph<'_, T>,
    table: NodeId,
    ids: &[usize],
    batch: usize,
    len: usize,
) -> Result<NodeId> {
    g.gather(table, ids, &[batch, len], Some(PAD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ParamStore;
    use crate::rng::{stream, Purpose};

    #[test]
    fn dense_hand_arithmetic() {
        let mut s = ParamStore::<f64>::new();
        let weight = s
            .add("w", Tensor::from_f64(&[2, 1], &[1.0, 1.0]).unwrap())
            .unwrap();
        let bias = s.add("b", Tensor::from_f64(&[1], &[1.0]).unwrap()).unwrap();
        let p = DenseParams {
            weight,
            bias,
            input: 2,
            output: 1,
        };
        let mut g = Graph::new(&s);
        let x = g.input(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
        let y = dense(&mut g, x, &p, Activation::None).unwrap();
        assert_eq!(g.value(y).data(), [4.0]);
    }

    #[test]
    fn dense_identity_and_trailing_axis() {
        let mut s = ParamStore::<f64>::new();
        let weight = s.add("w", Tensor::eye(3)).unwrap();
        let bias = s.add("b", Tensor::zeros(&[3])).unwrap();
        let p = DenseParams {
            weight,
            bias,
            input: 3,
            output: 3,
        };
        let mut g = Graph::new(&s);
        let v = Tensor::from_fn(&[2, 4, 3], |i| i as f64 - 5.0);
        let x = g.input(v.clone());
        let y = dense(&mut g, x, &p, Activation::None).unwrap();
        assert_eq!(g.value(y), &v);
        let bad = g.input(Tensor::zeros(&[2, 4]));
        assert!(matches!(
            dense(&mut g, bad, &p, Activation::Relu),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn dropout_modes() {
        let s = ParamStore::<f64>::new();
        let mut g = Graph::new(&s);
        let mut rng = stream(1, Purpose::Dropout, 0);
        let x = g.input(Tensor::full(&[4], 2.0));
        assert_eq!(dropout(&mut g, x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.5, Mode::Infer, &mut rng).unwrap(), x);
        assert!(dropout(&mut g, x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&mut g, x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let s = ParamStore::<f64>::new();
        let mut g = Graph::new(&s);
        let mut rng = stream(2, Purpose::Dropout, 0);
        let x = g.input(Tensor::full(&[10_000], 1.0));
        let y = dropout(&mut g, x, 0.5, Mode::Train, &mut rng).unwrap();
        let v = g.value(y);
        assert!(v.data().iter().all(|&e| e == 0.0 || e == 2.0));
        let mean = v.sum() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn embedding_rows_and_padding() {
        let mut s = ParamStore::<f64>::new();
        let t = s
            .add(
                "e",
                Tensor::from_fn(&[4, 3], |i| if i < 3 { 0.0 } else { i as f64 }),
            )
            .unwrap();
        let mut g = Graph::new(&s);
        let tn = g.param(t);
        let y = embed_lookup(&mut g, tn, &[2, 0], 1, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2, 3]);
        assert_eq!(g.value(y).data(), [6.0, 7.0, 8.0, 0.0, 0.0, 0.0]);
        assert!(embed_lookup(&mut g, tn, &[4], 1, 1).is_err());
    }
}
