use super::{Graph, HasParams, Var};
use crate::error::Result;

/// Compares analytic gradients of a scalar function against central
/// differences over every trainable parameter entry.
///
/// Returns the maximum relative error, using
/// `max(|analytic|, |numeric|, 1e-6)` as denominator, so entries whose true
/// gradient is zero are judged against difference roundoff. `f` must be
/// deterministic (no dropout).
pub fn finite_diff_check<M, F>(target: &mut M, mut f: F, eps: f64) -> Result<f64>
where
    M: HasParams,
    F: FnMut(&M, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(target, &mut g)?;
    g.backward(loss)?;
    let store = target.params();
    let mut analytic = Vec::new();
    for id in store.ids().filter(|&p| store.is_trainable(p)) {
        let n = store.get(id).numel();
        let grad = g
            .bound_params()
            .find(|&(p, _)| p == id)
            .and_then(|(_, v)| g.grad(v).map(<[f64]>::to_vec))
            .unwrap_or_else(|| vec![0.0; n]);
        analytic.push((id, grad));
    }

    let mut eval = |m: &M| -> Result<f64> {
        let mut g = Graph::new();
        let v = f(m, &mut g)?;
        Ok(g.data(v)[0])
    };

    let mut worst: f64 = 0.0;
    for (id, grad) in analytic {
        for j in 0..grad.len() {
            let orig = target.params().get(id).data()[j];
            target.params_mut().get_mut(id).data_mut()[j] = orig + eps;
            let plus = eval(target)?;
            target.params_mut().get_mut(id).data_mut()[j] = orig - eps;
            let minus = eval(target)?;
            target.params_mut().get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = grad[j].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((grad[j] - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
