//! Central-difference verification of analytic gradients.

use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    /// Largest relative error seen for each parameter, in store order.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub pass: bool,
    pub step: f64,
    pub tolerance: f64,
}

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn eval<F>(f: &F, params: &ParamStore<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let mut g = Graph::new(params);
    let loss = f(&mut g)?;
    let v = g.value(loss);
    if !v.is_scalar() {
        return Err(Error::NonScalarLoss(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compare the tape's gradients of `f` against central differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every element of every parameter.
pub fn grad_check<F>(f: F, params: &ParamStore<f64>, h: f64, tol: f64) -> Result<GradientReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(params);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    compare_gradients(&analytic, f, params, h, tol)
}

/// [`grad_check`] skipping elements for which `frozen(param, index)` holds,
/// such as a constant padding row stored inside a trainable table.
pub fn grad_check_except<F>(
    f: F,
    params: &ParamStore<f64>,
    h: f64,
    tol: f64,
    frozen: &dyn Fn(ParamId, usize) -> bool,
) -> Result<GradientReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(params);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    compare(&analytic, f, params, h, tol, frozen)
}

/// Like [`grad_check`] but with caller-supplied analytic gradients.
pub fn compare_gradients<F>(
    analytic: &Gradients<f64>,
    f: F,
    params: &ParamStore<f64>,
    h: f64,
    tol: f64,
) -> Result<GradientReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    compare(analytic, f, params, h, tol, &|_, _| false)
}

fn compare<F>(
    analytic: &Gradients<f64>,
    f: F,
    params: &ParamStore<f64>,
    h: f64,
    tol: f64,
    frozen: &dyn Fn(ParamId, usize) -> bool,
) -> Result<GradientReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut work = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel = 0.0f64;
    for (id, name, tensor) in params.iter() {
        let mut worst = 0.0f64;
        for e in (0..tensor.len()).filter(|&e| !frozen(id, e)) {
            let orig = tensor.data()[e];
            work.get_mut(id).data_mut()[e] = orig + h;
            let plus = eval(&f, &work)?;
            work.get_mut(id).data_mut()[e] = orig - h;
            let minus = eval(&f, &work)?;
            work.get_mut(id).data_mut()[e] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("{name}[{e}] perturbed by ±{h}")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic.get(id).data()[e], numeric));
        }
        max_rel = max_rel.max(worst);
        per_param.push((name.to_string(), worst));
    }
    Ok(GradientReport {
        per_param,
        max_rel_error: max_rel,
        pass: max_rel < tol,
        step: h,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn sq_sum(g: &mut Graph<'_, f64>) -> Result<NodeId> {
        let w = g.param(g.store().id("w").unwrap());
        let sq = g.mul(w, w)?;
        Ok(g.sum_all(sq))
    }

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_f64(&[3], &[0.3, -1.2, 2.5]).unwrap())
            .unwrap();
        s
    }

    #[test]
    fn quadratic_passes() {
        let r = grad_check(sq_sum, &store(), 1e-5, 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_detected() {
        let s = store();
        let mut g = Graph::new(&s);
        let l = sq_sum(&mut g).unwrap();
        let mut grads = g.backward(l).unwrap();
        let id = s.id("w").unwrap();
        for v in grads.get_mut(id).data_mut() {
            *v *= 2.0;
        }
        let r = compare_gradients(&grads, sq_sum, &s, 1e-5, 1e-4).unwrap();
        assert!(!r.pass);
        assert!(r.max_rel_error > 0.3);
    }

    #[test]
    fn non_finite_perturbation_is_an_error() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_f64(&[1], &[0.0]).unwrap()).unwrap();
        let f = |g: &mut Graph<'_, f64>| -> Result<NodeId> {
            let w = g.param(g.store().id("w").unwrap());
            let v = g.value(w).item();
            // 1/w blows up on one side of zero
            Ok(g.input(Tensor::scalar(1.0 / (v - 1e-5))))
        };
        assert!(matches!(
            grad_check(f, &s, 1e-5, 1e-4),
            Err(Error::NonFinite(_))
        ));
    }
}
