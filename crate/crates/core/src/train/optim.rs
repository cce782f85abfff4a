use crate::error::{PotrError, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// AdamW state: per-parameter moments and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    moments: Vec<Option<Moments>>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn moments(&self, id: ParamId) -> Option<&Moments> {
        self.moments.get(id.index()).and_then(Option::as_ref)
    }

    pub fn set_moments(&mut self, id: ParamId, m: Moments) {
        if self.moments.len() <= id.index() {
            self.moments.resize(id.index() + 1, None);
        }
        self.moments[id.index()] = Some(m);
    }

    /// Moment tensors keyed by parameter name, for checkpointing.
    pub fn export(&self, store: &ParamStore) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for id in store.ids() {
            if let Some(m) = self.moments(id) {
                let shape = store.get(id).shape().to_vec();
                out.push((format!("adam.m.{}", store.name(id)), Tensor::new(&shape, m.first.clone()).unwrap()));
                out.push((format!("adam.v.{}", store.name(id)), Tensor::new(&shape, m.second.clone()).unwrap()));
            }
        }
        out.push(("adam.step".into(), Tensor::scalar(self.step as f64)));
        out
    }

    pub fn import(config: AdamWConfig, store: &ParamStore, lookup: impl Fn(&str) -> Option<Tensor>) -> Self {
        let mut state = OptimizerState::new(config);
        state.step = lookup("adam.step").map_or(0, |t| t.data()[0] as u64);
        for id in store.ids() {
            let name = store.name(id);
            if let (Some(m), Some(v)) = (lookup(&format!("adam.m.{name}")), lookup(&format!("adam.v.{name}"))) {
                state.set_moments(id, Moments { first: m.into_data(), second: v.into_data() });
            }
        }
        state
    }
}

/// Global L2 norm of all stored gradients, rescaled to at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let ids: Vec<_> = store.ids().collect();
    let norm = ids
        .iter()
        .filter_map(|&id| store.get(id).grad())
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for id in ids {
            let t = store.get_mut(id);
            if let Some(g) = t.grad() {
                let scaled: Vec<f64> = g.iter().map(|v| v * scale).collect();
                t.zero_grad();
                t.accumulate_grad(&scaled);
            }
        }
    }
    norm
}

/// One AdamW update over every trainable parameter, at learning rate `lr`.
///
/// Moments are bias-corrected; the weight decay `p ← p − lr·wd·p` is applied
/// after the adaptive step. Gradients are cleared afterwards.
pub fn adamw_step(store: &mut ParamStore, state: &mut OptimizerState, lr: f64) -> Result<()> {
    let ids: Vec<_> = store.ids().filter(|&id| store.is_trainable(id)).collect();
    if let Some(&missing) = ids.iter().find(|&&id| store.get(id).grad().is_none()) {
        return Err(PotrError::contract(format!("parameter {} has no gradient", store.name(missing))));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for id in ids {
        let n = store.get(id).numel();
        let mut m = state.moments(id).cloned().unwrap_or(Moments { first: vec![0.0; n], second: vec![0.0; n] });
        let tensor = store.get_mut(id);
        let grad = tensor.grad().expect("checked above").to_vec();
        let data = tensor.data_mut();
        for j in 0..n {
            let g = grad[j];
            m.first[j] = c.beta1 * m.first[j] + (1.0 - c.beta1) * g;
            m.second[j] = c.beta2 * m.second[j] + (1.0 - c.beta2) * g * g;
            let m_hat = m.first[j] / bc1;
            let v_hat = m.second[j] / bc2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + c.eps);
            data[j] -= lr * c.weight_decay * data[j];
        }
        tensor.zero_grad();
        state.set_moments(id, m);
    }
    Ok(())
}
