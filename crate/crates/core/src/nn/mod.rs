//! Neural building blocks recorded on a [`Graph`](crate::tensor::Graph).
//!
//! Layers hold [`ParamId`]s into a shared [`ParamStore`]; forward passes bind
//! them onto the graph on first use.

mod attention;
mod dropout;
mod feed_forward;
mod gcn;
mod linear;
mod norm;
mod positional;

pub use attention::{causal_mask, multi_head_attention, AttentionKind, AttentionMap, MultiHeadAttention};
pub use dropout::dropout;
pub use feed_forward::FeedForward;
pub use gcn::{gcn_layer, Activation, GcnLayer};
pub use linear::Linear;
pub use norm::{BatchNorm, LayerNorm};
pub use positional::{positional_encoding_table, PositionalEncoding};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{BatchStats, ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A running-statistics update observed by a train-mode batch-norm call.
#[derive(Clone, Debug)]
pub struct StatUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub observed: BatchStats,
}

/// Per-forward state: mode, dropout randomness, and side outputs.
#[derive(Debug)]
pub struct Ctx {
    pub mode: Mode,
    rng: ChaCha8Rng,
    pub record_attention: bool,
    pub attention: Vec<AttentionMap>,
    pub stat_updates: Vec<StatUpdate>,
}

impl Ctx {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Ctx {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            record_attention: false,
            attention: Vec::new(),
            stat_updates: Vec::new(),
        }
    }

    pub fn eval() -> Self {
        Ctx::new(Mode::Eval, 0)
    }

    pub fn train(seed: u64) -> Self {
        Ctx::new(Mode::Train, seed)
    }

    pub fn recording(mut self) -> Self {
        self.record_attention = true;
        self
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }
}

/// Applies the recorded batch-norm updates with the given momentum.
pub fn apply_stat_updates(store: &mut ParamStore, updates: &[StatUpdate], momentum: f64) {
    for u in updates {
        let mean = store.get_mut(u.running_mean).data_mut();
        for (m, o) in mean.iter_mut().zip(&u.observed.mean) {
            *m = (1.0 - momentum) * *m + momentum * o;
        }
        let var = store.get_mut(u.running_var).data_mut();
        for (v, o) in var.iter_mut().zip(&u.observed.var) {
            *v = (1.0 - momentum) * *v + momentum * o;
        }
    }
}

/// Xavier/Glorot uniform initialisation for a `fan_in × fan_out` matrix.
pub fn xavier_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("positive dims")
}
