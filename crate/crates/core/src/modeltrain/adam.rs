use crate::error::{Error, Result};
use crate::numcore::{Gradients, ParamId, ParamStore, Scalar, Tensor};

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor<T>> = store
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.shape()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update of every parameter not in `frozen`:
///
/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
/// `θ ← θ − lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
///
/// A non-finite gradient aborts before anything is modified.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
    frozen: &[ParamId],
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (id, g) in grads.iter() {
        if g.shape() != store.get(id).shape() {
            return Err(Error::shape(
                "adam gradient",
                g.shape(),
                store.get(id).shape(),
            ));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", store.name(id))));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::of(1.0 / (1.0 - b1.powi(t)));
    let c2 = T::of(1.0 / (1.0 - b2.powi(t)));
    let (tb1, tb2) = (T::of(b1), T::of(b2));
    let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let (lr, eps) = (T::of(lr), T::of(state.epsilon));
    for (id, g) in grads.iter() {
        if frozen.contains(&id) {
            continue;
        }
        let i = id.index();
        let theta = store.get_mut(id).data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((p, &gv), mv), vv) in theta
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mv = tb1 * *mv + ob1 * gv;
            *vv = tb2 * *vv + ob2 * gv * gv;
            let mhat = *mv * c1;
            let vhat = *vv * c2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::scalar(v)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = one_param(0.3);
        let mut st = AdamState::new(&s, 0.9, 0.999, 1e-7);
        let g = Gradients::zeros_like(&s);
        adam_step(&mut s, &g, &mut st, 0.1, &[]).unwrap();
        assert_eq!(s.get(id).item(), 0.3);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_by_hand() {
        let (mut s, id) = one_param(0.0);
        let mut st = AdamState::new(&s, 0.9, 0.999, 1e-7);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(id).data_mut()[0] = 1.0;
        adam_step(&mut s, &g, &mut st, 0.1, &[]).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let expect = -0.1 / (1.0 + 1e-7);
        assert!((s.get(id).item() - expect).abs() < 1e-15);
        adam_step(&mut s, &g, &mut st, 0.1, &[]).unwrap();
        assert!((s.get(id).item() - 2.0 * expect).abs() < 1e-12);
    }

    #[test]
    fn identical_gradients_identical_updates() {
        let mut s = ParamStore::<f64>::new();
        let a = s
            .add("a", Tensor::from_f64(&[2], &[1.0, -1.0]).unwrap())
            .unwrap();
        let b = s
            .add("b", Tensor::from_f64(&[2], &[1.0, -1.0]).unwrap())
            .unwrap();
        let mut st = AdamState::new(&s, 0.9, 0.999, 1e-7);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(a).data_mut().copy_from_slice(&[0.3, -2.0]);
        g.get_mut(b).data_mut().copy_from_slice(&[0.3, -2.0]);
        for _ in 0..3 {
            adam_step(&mut s, &g, &mut st, 0.01, &[]).unwrap();
        }
        assert_eq!(s.get(a), s.get(b));
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let (mut s, id) = one_param(0.5);
        let mut st = AdamState::new(&s, 0.9, 0.999, 1e-7);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(id).data_mut()[0] = f64::NAN;
        assert!(matches!(
            adam_step(&mut s, &g, &mut st, 0.1, &[]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(s.get(id).item(), 0.5);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn frozen_parameters_are_skipped() {
        let (mut s, id) = one_param(0.5);
        let mut st = AdamState::new(&s, 0.9, 0.999, 1e-7);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(id).data_mut()[0] = 1.0;
        adam_step(&mut s, &g, &mut st, 0.1, &[id]).unwrap();
        assert_eq!(s.get(id).item(), 0.5);
    }
}
