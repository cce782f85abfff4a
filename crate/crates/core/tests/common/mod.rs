#![allow(dead_code)]

use potr::data::{PoseSequence, Representation, Skeleton};
use potr::model::{Codec, ModelConfig, PotrModel};
use potr::tensor::{HasParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// T=3, T'=2, N=4 (2 nodes × 2 features), D=8, L=2, heads=2, no dropout.
pub fn toy_config(codec: Codec, num_classes: usize) -> ModelConfig {
    ModelConfig {
        pose_dim: 4,
        nodes: 2,
        embed_dim: 8,
        layers: 2,
        heads: 2,
        ff_dim: 16,
        codec,
        gcn_stages: 1,
        gcn_node_features: 6,
        input_len: 3,
        target_len: 2,
        num_classes,
        dropout: 0.0,
        gcn_dropout: 0.0,
        seed: 3,
        ..ModelConfig::default()
    }
}

pub fn random_tensor(seed: u64, rows: usize, cols: usize, scale: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn sequence(frames: Tensor, nodes: usize) -> PoseSequence {
    let f = frames.cols() / nodes;
    let repr = if f == 9 { Representation::RotationMatrices } else { Representation::Positions3d };
    PoseSequence::new(frames, 30.0, Skeleton::new(nodes, f), repr).unwrap()
}

/// Replaces the zero-initialised pose-decoder output layer with small
/// random values so predictions move away from the query.
pub fn randomize_pose_decoder(model: &mut PotrModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in model.pose_decoder_output_params() {
        model.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
}
