use rand::Rng;

use super::xavier_uniform;
use crate::error::{PotrError, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
        }
    }
}

/// Graph convolution `σ(A · H · W + b)` with a fully learnable `K × K`
/// adjacency `A` over body nodes.
#[derive(Clone, Copy, Debug)]
pub struct GcnLayer {
    pub adjacency: ParamId,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub nodes: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl GcnLayer {
    /// `A` starts at identity plus uniform(−0.05, 0.05) noise; `W` is Xavier-uniform.
    pub fn new(store: &mut ParamStore, name: &str, nodes: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let mut adj = Tensor::eye(nodes);
        adj.data_mut().iter_mut().for_each(|a| *a += rng.gen_range(-0.05..0.05));
        let weight = xavier_uniform(rng, fan_in, fan_out);
        GcnLayer::from_parts(store, name, adj, weight)
    }

    /// Like [`GcnLayer::new`] but with `W` zeroed, so the layer outputs zero.
    pub fn zeroed(store: &mut ParamStore, name: &str, nodes: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let mut adj = Tensor::eye(nodes);
        adj.data_mut().iter_mut().for_each(|a| *a += rng.gen_range(-0.05..0.05));
        GcnLayer::from_parts(store, name, adj, Tensor::zeros(&[fan_in, fan_out]))
    }

    pub fn from_parts(store: &mut ParamStore, name: &str, adjacency: Tensor, weight: Tensor) -> Self {
        let (nodes, fan_in, fan_out) = (adjacency.rows(), weight.rows(), weight.cols());
        GcnLayer {
            adjacency: store.add(format!("{name}.adjacency"), adjacency, true),
            weight: store.add(format!("{name}.weight"), weight, true),
            bias: Some(store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]), true)),
            nodes,
            fan_in,
            fan_out,
        }
    }

    /// Applies the layer to every `K × F_in` block of a `(P·K) × F_in` stack.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var, activation: Activation) -> Result<Var> {
        let (rows, cols) = (g.value(h).rows(), g.value(h).cols());
        if cols != self.fan_in || rows % self.nodes != 0 {
            return Err(PotrError::shape("gcn_layer", g.shape(h), &[self.nodes, self.fan_in]));
        }
        let a = g.param(store, self.adjacency);
        let w = g.param(store, self.weight);
        let hw = g.matmul(h, w)?;
        let mut y = g.block_left_mul(a, hw)?;
        if let Some(b) = self.bias {
            let b = g.param(store, b);
            y = g.add_row(y, b)?;
        }
        Ok(activation.apply(g, y))
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.adjacency, self.weight].into_iter().chain(self.bias).collect()
    }
}

/// Single graph convolution `σ(A · H · W)` on one `K × F_in` feature matrix.
pub fn gcn_layer(g: &mut Graph, adjacency: Var, h: Var, weight: Var, activation: Activation) -> Result<Var> {
    let (k, k2) = (g.value(adjacency).rows(), g.value(adjacency).cols());
    if k != k2 || g.value(h).rows() != k {
        return Err(PotrError::shape("gcn_layer", g.shape(adjacency), g.shape(h)));
    }
    let ah = g.matmul(adjacency, h)?;
    let y = g.matmul(ah, weight)?;
    Ok(activation.apply(g, y))
}
