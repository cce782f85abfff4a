//! Pose codecs: the shared pose encoder (pose → embedding) and the pose
//! decoder (embedding → pose residual), each linear or graph-convolutional.

use rand::Rng;

use crate::error::{PotrError, Result};
use crate::nn::{dropout, Activation, BatchNorm, Ctx, GcnLayer, Linear};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// One residual module: two graph convolutions, each followed by batch
/// norm, tanh and dropout, with an additive skip around the pair.
#[derive(Clone, Debug)]
struct GcnBlock {
    first: GcnLayer,
    first_norm: BatchNorm,
    second: GcnLayer,
    second_norm: BatchNorm,
}

/// Input graph convolution, `S` residual modules, output graph convolution.
#[derive(Clone, Debug)]
pub struct GcnNet {
    input: GcnLayer,
    input_norm: BatchNorm,
    blocks: Vec<GcnBlock>,
    output: GcnLayer,
    nodes: usize,
    hidden: usize,
    dropout: f64,
}

impl GcnNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        nodes: usize,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
        stages: usize,
        dropout: f64,
        zero_output: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let input = GcnLayer::new(store, &format!("{name}.input"), nodes, fan_in, hidden, rng);
        let input_norm = BatchNorm::new(store, &format!("{name}.input_norm"), nodes * hidden);
        let blocks = (0..stages)
            .map(|s| GcnBlock {
                first: GcnLayer::new(store, &format!("{name}.block{s}.first"), nodes, hidden, hidden, rng),
                first_norm: BatchNorm::new(store, &format!("{name}.block{s}.first_norm"), nodes * hidden),
                second: GcnLayer::new(store, &format!("{name}.block{s}.second"), nodes, hidden, hidden, rng),
                second_norm: BatchNorm::new(store, &format!("{name}.block{s}.second_norm"), nodes * hidden),
            })
            .collect();
        let output = if zero_output {
            GcnLayer::zeroed(store, &format!("{name}.output"), nodes, hidden, fan_out, rng)
        } else {
            GcnLayer::new(store, &format!("{name}.output"), nodes, hidden, fan_out, rng)
        };
        GcnNet {
            input,
            input_norm,
            blocks,
            output,
            nodes,
            hidden,
            dropout,
        }
    }

    fn norm_act(&self, g: &mut Graph, store: &ParamStore, x: Var, norm: &BatchNorm, ctx: &mut Ctx) -> Result<Var> {
        let rows = g.value(x).rows() / self.nodes;
        let flat = g.reshape(x, &[rows, self.nodes * self.hidden])?;
        let y = norm.forward(g, store, flat, ctx)?;
        let y = g.reshape(y, &[rows * self.nodes, self.hidden])?;
        let y = g.tanh(y);
        dropout(g, y, self.dropout, ctx)
    }

    /// Maps a `(P·K) × F_in` node-feature stack to `(P·K) × F_out`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var, ctx: &mut Ctx) -> Result<Var> {
        let x = self.input.forward(g, store, h, Activation::Identity)?;
        let mut x = self.norm_act(g, store, x, &self.input_norm, ctx)?;
        for block in &self.blocks {
            let y = block.first.forward(g, store, x, Activation::Identity)?;
            let y = self.norm_act(g, store, y, &block.first_norm, ctx)?;
            let y = block.second.forward(g, store, y, Activation::Identity)?;
            let y = self.norm_act(g, store, y, &block.second_norm, ctx)?;
            x = g.add(x, y)?;
        }
        self.output.forward(g, store, x, Activation::Identity)
    }

    pub fn output_layer(&self) -> &GcnLayer {
        &self.output
    }
}

/// Pose encoder: `P × N` poses to `P × D` embeddings.
#[derive(Clone, Debug)]
pub enum PoseEncoder {
    Linear(Linear),
    Gcn { net: GcnNet, project: Linear, nodes: usize, features: usize },
}

impl PoseEncoder {
    pub fn linear(store: &mut ParamStore, pose_dim: usize, embed_dim: usize, rng: &mut impl Rng) -> Self {
        PoseEncoder::Linear(Linear::new(store, "pose_encoder", pose_dim, embed_dim, rng))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn gcn(
        store: &mut ParamStore,
        nodes: usize,
        features: usize,
        hidden: usize,
        stages: usize,
        embed_dim: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let per_node = embed_dim.div_ceil(nodes);
        let net = GcnNet::new(store, "pose_encoder.gcn", nodes, features, hidden, per_node, stages, dropout, false, rng);
        let project = Linear::new(store, "pose_encoder.project", nodes * per_node, embed_dim, rng);
        PoseEncoder::Gcn { net, project, nodes, features }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, poses: Var, ctx: &mut Ctx) -> Result<Var> {
        match self {
            PoseEncoder::Linear(l) => l.forward(g, store, poses),
            PoseEncoder::Gcn { net, project, nodes, features } => {
                let p = g.value(poses).rows();
                if g.value(poses).cols() != nodes * features {
                    return Err(PotrError::shape("pose_encoder", g.shape(poses), &[*nodes, *features]));
                }
                let h = g.reshape(poses, &[p * nodes, *features])?;
                let h = net.forward(g, store, h, ctx)?;
                let width = g.value(h).cols() * nodes;
                let flat = g.reshape(h, &[p, width])?;
                project.forward(g, store, flat)
            }
        }
    }
}

/// Pose decoder: `P × D` embeddings to `P × N` pose offsets. Its last layer
/// starts at zero so an untrained model predicts zero offsets.
#[derive(Clone, Debug)]
pub enum PoseDecoder {
    Linear(Linear),
    Gcn { lift: Linear, net: GcnNet, nodes: usize, per_node: usize },
}

impl PoseDecoder {
    pub fn linear(store: &mut ParamStore, name: &str, embed_dim: usize, pose_dim: usize) -> Self {
        PoseDecoder::Linear(Linear::zeroed(store, name, embed_dim, pose_dim))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn gcn(
        store: &mut ParamStore,
        name: &str,
        nodes: usize,
        features: usize,
        hidden: usize,
        stages: usize,
        embed_dim: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let per_node = embed_dim.div_ceil(nodes);
        let lift = Linear::new(store, &format!("{name}.lift"), embed_dim, nodes * per_node, rng);
        let net = GcnNet::new(store, &format!("{name}.gcn"), nodes, per_node, hidden, features, stages, dropout, true, rng);
        PoseDecoder::Gcn { lift, net, nodes, per_node }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, emb: Var, ctx: &mut Ctx) -> Result<Var> {
        match self {
            PoseDecoder::Linear(l) => l.forward(g, store, emb),
            PoseDecoder::Gcn { lift, net, nodes, per_node } => {
                let p = g.value(emb).rows();
                let h = lift.forward(g, store, emb)?;
                let h = g.reshape(h, &[p * nodes, *per_node])?;
                let h = net.forward(g, store, h, ctx)?;
                let width = g.value(h).cols() * nodes;
                g.reshape(h, &[p, width])
            }
        }
    }

    /// Parameters of the final layer (the ones that start at zero).
    pub fn output_params(&self) -> Vec<ParamId> {
        match self {
            PoseDecoder::Linear(l) => l.params(),
            PoseDecoder::Gcn { net, .. } => net.output_layer().params(),
        }
    }
}
