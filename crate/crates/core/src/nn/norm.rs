use super::{Ctx, StatUpdate};
use crate::error::Result;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), Tensor::filled(&[dim], 1.0), true),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[dim]), true),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Feature-wise batch normalisation with running statistics.
#[derive(Clone, Copy, Debug)]
pub struct BatchNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.1;

    pub fn new(store: &mut ParamStore, name: &str, features: usize) -> Self {
        BatchNorm {
            gain: store.add(format!("{name}.gain"), Tensor::filled(&[features], 1.0), true),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[features]), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[features]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::filled(&[features], 1.0), false),
        }
    }

    /// Train mode with more than one row normalises by batch statistics and
    /// records them in `ctx`; otherwise the running statistics are used.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        if ctx.is_train() && g.value(x).rows() > 1 {
            let (y, observed) = g.batch_norm(x, gain, bias, None)?;
            if let Some(observed) = observed {
                ctx.stat_updates.push(StatUpdate {
                    running_mean: self.running_mean,
                    running_var: self.running_var,
                    observed,
                });
            }
            Ok(y)
        } else {
            let mean = store.get(self.running_mean).data();
            let var = store.get(self.running_var).data();
            let (y, _) = g.batch_norm(x, gain, bias, Some((mean, var)))?;
            Ok(y)
        }
    }
}
