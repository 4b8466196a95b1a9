use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numcore::{ParamId, ParamStore, Scalar, Tensor};

/// Registers parameters in a store, drawing initial values from one stream.
pub struct Init<'s, T> {
    pub store: &'s mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<'s, T: Scalar> Init<'s, T> {
    pub fn new(store: &'s mut ParamStore<T>, rng: ChaCha8Rng) -> Self {
        Init { store, rng }
    }

    /// Uniform on `(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
    ) -> Result<ParamId> {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| T::of(rng.random_range(-s..s)));
        self.store.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(shape))
    }

    pub fn tensor(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        self.store.add(name, value)
    }
}
