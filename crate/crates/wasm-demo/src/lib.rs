//! Browser bindings for the demo page in `www/`: synthetic motion, attention
//! heatmaps from a small model, and a NAR versus AR decoding race.

use potr::bench::{run_bench_with_clock, BenchMode, BenchOptions};
use potr::data::{generate_synthetic, PoseSequence, Representation, SyntheticSpec};
use potr::model::{ModelConfig, PotrModel};
use potr::nn::AttentionKind;
use wasm_bindgen::prelude::*;

const JOINTS: usize = 5;
const FRAME_RATE: f64 = 30.0;

/// Joint-0 trajectory of one sequence per class, laid out
/// `[class][frame][x, y, z]`.
pub fn class_trajectories(seed: u64, classes: usize, frames: usize, noise: f64) -> Result<Vec<f64>, String> {
    let data = generate_synthetic(&synthetic_spec(seed, classes, frames, noise)).map_err(|e| e.to_string())?;
    Ok(data.sequences.iter().flat_map(|s| (0..s.sequence.len()).flat_map(|t| s.sequence.frame(t)[..3].to_vec())).collect())
}

fn synthetic_spec(seed: u64, classes: usize, frames: usize, noise: f64) -> SyntheticSpec {
    SyntheticSpec {
        joints: JOINTS,
        representation: Representation::Positions3d,
        classes: SyntheticSpec::default_laws(classes),
        noise_sigma: noise,
        frame_rate: FRAME_RATE,
        sequence_len: frames,
        per_class: 1,
        jitter: false,
        seed,
    }
}

/// Row-major matrix handed to the page for drawing.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Heatmap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

fn demo_model(input_len: usize, target_len: usize, seed: u64) -> Result<PotrModel, String> {
    PotrModel::new(ModelConfig {
        pose_dim: JOINTS * 3,
        nodes: JOINTS,
        embed_dim: 32,
        layers: 2,
        heads: 2,
        ff_dim: 64,
        input_len,
        target_len,
        num_classes: 3,
        seed,
        ..ModelConfig::default()
    })
    .map_err(|e| e.to_string())
}

/// One attention map of a freshly initialised model run on a synthetic
/// sequence of class `class`. `cross` picks encoder-decoder attention,
/// otherwise decoder self-attention.
pub fn attention(seed: u64, class: usize, input_len: usize, target_len: usize, layer: usize, head: usize, cross: bool) -> Result<Heatmap, String> {
    let model = demo_model(input_len, target_len, seed)?;
    let data = generate_synthetic(&synthetic_spec(seed, class + 1, input_len, 0.002)).map_err(|e| e.to_string())?;
    let seq: &PoseSequence = &data.sequences[class].sequence;
    let prediction = model.predict(seq).map_err(|e| e.to_string())?;
    let kind = if cross { AttentionKind::EncoderDecoder } else { AttentionKind::SelfAttention };
    let map = prediction
        .attention
        .iter()
        .find(|m| m.stack == "decoder" && m.kind == kind && m.layer == layer && m.head == head)
        .ok_or_else(|| format!("no decoder map for layer {layer}, head {head}"))?;
    Ok(Heatmap {
        rows: map.weights.rows(),
        cols: map.weights.cols(),
        values: map.weights.data().to_vec(),
    })
}

/// Median throughput and decoder calls of both decoding schemes.
#[wasm_bindgen]
#[derive(Clone, Copy, Debug)]
pub struct DecodeRace {
    pub nar_sps: f64,
    pub ar_sps: f64,
    pub nar_decoder_calls: usize,
    pub ar_decoder_calls: usize,
}

pub fn decode_race(target_len: usize, reps: usize, clock: &mut dyn FnMut() -> f64) -> Result<DecodeRace, String> {
    let model = demo_model(25, target_len, 0)?;
    let options = BenchOptions {
        reps,
        warmup: 1,
        sequences_per_rep: 2,
        seed: 0,
    };
    let nar = run_bench_with_clock(&model, BenchMode::Nar, &options, clock).map_err(|e| e.to_string())?;
    let ar = run_bench_with_clock(&model, BenchMode::Ar, &options, clock).map_err(|e| e.to_string())?;
    Ok(DecodeRace {
        nar_sps: nar.median,
        ar_sps: ar.median,
        nar_decoder_calls: nar.decoder_calls_per_sequence,
        ar_decoder_calls: ar.decoder_calls_per_sequence,
    })
}

#[wasm_bindgen]
extern "C" {
    #[wasm_bindgen(js_namespace = performance, js_name = now)]
    fn performance_now() -> f64;
}

#[wasm_bindgen(js_name = classTrajectories)]
pub fn class_trajectories_js(seed: u32, classes: usize, frames: usize, noise: f64) -> Result<Vec<f64>, JsError> {
    class_trajectories(seed.into(), classes, frames, noise).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = attentionMap)]
pub fn attention_js(seed: u32, class: usize, input_len: usize, target_len: usize, layer: usize, head: usize, cross: bool) -> Result<Heatmap, JsError> {
    attention(seed.into(), class, input_len, target_len, layer, head, cross).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = decodeRace)]
pub fn decode_race_js(target_len: usize, reps: usize) -> Result<DecodeRace, JsError> {
    decode_race(target_len, reps, &mut || performance_now() / 1000.0).map_err(|e| JsError::new(&e))
}
