use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::codec::{PoseDecoder, PoseEncoder};
use super::config::{ActivitySource, ModelConfig};
use crate::data::PoseSequence;
use crate::error::{PotrError, Result};
use crate::nn::{
    causal_mask, dropout, positional_encoding_table, AttentionKind, AttentionMap, Ctx, FeedForward, LayerNorm, Linear,
    MultiHeadAttention, PositionalEncoding,
};
use crate::tensor::{Graph, HasParams, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug)]
struct EncoderLayer {
    norm_attn: LayerNorm,
    attn: MultiHeadAttention,
    norm_ff: LayerNorm,
    ff: FeedForward,
}

#[derive(Clone, Debug)]
struct DecoderLayer {
    norm_self: LayerNorm,
    self_attn: MultiHeadAttention,
    norm_cross: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm_ff: LayerNorm,
    ff: FeedForward,
}

/// Encoder output for a row-stacked batch.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `(B · memory_len) × D`.
    pub memory: Var,
    /// Class-token outputs `z₀`, `B × D`, when the class token is in use.
    pub class_embedding: Option<Var>,
}

/// Graph handles produced by a batched forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// One `(B·T') × N` prediction per decoder layer; the last is final.
    pub layers: Vec<Var>,
    /// `B × C` activity logits, when the activity head is enabled.
    pub logits: Option<Var>,
    pub encoded: Encoded,
}

/// Plain-value result of a single-sequence prediction.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Per decoder layer, `T' × N`.
    pub layers: Vec<Tensor>,
    pub logits: Option<Vec<f64>>,
    pub attention: Vec<AttentionMap>,
}

impl Prediction {
    pub fn final_layer(&self) -> &Tensor {
        self.layers.last().expect("at least one decoder layer")
    }
}

/// Pose Transformer: pose codecs around a pre-norm encoder-decoder with
/// non-autoregressive, residual decoding from copies of the last input pose.
#[derive(Debug)]
pub struct PotrModel {
    config: ModelConfig,
    params: ParamStore,
    pose_encoder: PoseEncoder,
    pose_decoders: Vec<PoseDecoder>,
    class_token: Option<ParamId>,
    encoder: Vec<EncoderLayer>,
    encoder_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    decoder_norm: LayerNorm,
    activity_head: Option<Linear>,
    positions: PositionalEncoding,
    decoder_calls: AtomicUsize,
}

impl Clone for PotrModel {
    fn clone(&self) -> Self {
        PotrModel {
            config: self.config.clone(),
            params: self.params.clone(),
            pose_encoder: self.pose_encoder.clone(),
            pose_decoders: self.pose_decoders.clone(),
            class_token: self.class_token,
            encoder: self.encoder.clone(),
            encoder_norm: self.encoder_norm,
            decoder: self.decoder.clone(),
            decoder_norm: self.decoder_norm,
            activity_head: self.activity_head,
            positions: self.positions.clone(),
            decoder_calls: AtomicUsize::new(0),
        }
    }
}

impl HasParams for PotrModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

impl PotrModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let d = config.embed_dim;
        let k = config.nodes;
        let f = config.features_per_node();

        let pose_encoder = if config.codec.gcn_encoder() {
            PoseEncoder::gcn(&mut store, k, f, config.gcn_node_features, config.gcn_stages, d, config.gcn_dropout, &mut rng)
        } else {
            PoseEncoder::linear(&mut store, config.pose_dim, d, &mut rng)
        };

        let class_token = config.uses_class_token().then(|| {
            let t = crate::nn::xavier_uniform(&mut rng, 1, d);
            store.add("class_token", t, true)
        });

        let mut encoder = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("encoder.{l}");
            encoder.push(EncoderLayer {
                norm_attn: LayerNorm::new(&mut store, &format!("{p}.norm_attn"), d),
                attn: MultiHeadAttention::new(&mut store, &format!("{p}.attn"), d, config.heads, &mut rng)?,
                norm_ff: LayerNorm::new(&mut store, &format!("{p}.norm_ff"), d),
                ff: FeedForward::new(&mut store, &format!("{p}.ff"), d, config.ff_dim, &mut rng),
            });
        }
        let encoder_norm = LayerNorm::new(&mut store, "encoder.norm", d);

        let mut decoder = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("decoder.{l}");
            decoder.push(DecoderLayer {
                norm_self: LayerNorm::new(&mut store, &format!("{p}.norm_self"), d),
                self_attn: MultiHeadAttention::new(&mut store, &format!("{p}.self_attn"), d, config.heads, &mut rng)?,
                norm_cross: LayerNorm::new(&mut store, &format!("{p}.norm_cross"), d),
                cross_attn: MultiHeadAttention::new(&mut store, &format!("{p}.cross_attn"), d, config.heads, &mut rng)?,
                norm_ff: LayerNorm::new(&mut store, &format!("{p}.norm_ff"), d),
                ff: FeedForward::new(&mut store, &format!("{p}.ff"), d, config.ff_dim, &mut rng),
            });
        }
        let decoder_norm = LayerNorm::new(&mut store, "decoder.norm", d);

        let decoder_count = if config.share_pose_decoder { 1 } else { config.layers };
        let pose_decoders = (0..decoder_count)
            .map(|i| {
                let name = if config.share_pose_decoder { "pose_decoder".to_string() } else { format!("pose_decoder.{i}") };
                if config.codec.gcn_decoder() {
                    PoseDecoder::gcn(&mut store, &name, k, f, config.gcn_node_features, config.gcn_stages, d, config.gcn_dropout, &mut rng)
                } else {
                    PoseDecoder::linear(&mut store, &name, d, config.pose_dim)
                }
            })
            .collect();

        let activity_head =
            (config.num_classes > 0).then(|| Linear::new(&mut store, "activity_head", d, config.num_classes, &mut rng));

        let positions = positional_encoding_table(config.memory_len().max(config.target_len), d)?;

        Ok(PotrModel {
            config,
            params: store,
            pose_encoder,
            pose_decoders,
            class_token,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            activity_head,
            positions,
            decoder_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Number of decoder-stack executions since construction or the last reset.
    pub fn decoder_calls(&self) -> usize {
        self.decoder_calls.load(Ordering::Relaxed)
    }

    pub fn reset_decoder_calls(&self) {
        self.decoder_calls.store(0, Ordering::Relaxed);
    }

    pub fn activity_head_params(&self) -> Vec<ParamId> {
        self.activity_head.map(|h| h.params()).unwrap_or_default()
    }

    /// Parameters of the pose decoders' final layers.
    pub fn pose_decoder_output_params(&self) -> Vec<ParamId> {
        self.pose_decoders.iter().flat_map(PoseDecoder::output_params).collect()
    }

    /// Zeroes every pose decoder's final layer, turning the model into the
    /// zero-velocity predictor.
    pub fn zero_pose_decoder_output(&mut self) {
        for id in self.pose_decoder_output_params() {
            self.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn check_batch(&self, g: &Graph, x: Var, len: usize, batch: usize, what: &'static str) -> Result<()> {
        let t = g.value(x);
        if batch == 0 || t.rows() != len * batch || t.cols() != self.config.pose_dim {
            return Err(PotrError::shape(what, t.shape(), &[batch * len, self.config.pose_dim]));
        }
        Ok(())
    }

    fn add_positions(&self, g: &mut Graph, x: Var, len: usize, batch: usize) -> Result<Var> {
        let pe = g.constant(self.positions.tiled(len, batch)?);
        g.add(x, pe)
    }

    /// Encodes `(B·T) × N` input poses into memory.
    pub fn encode(&self, g: &mut Graph, inputs: Var, batch: usize, ctx: &mut Ctx) -> Result<Encoded> {
        let t = self.config.input_len;
        self.check_batch(g, inputs, t, batch, "encoder input")?;
        let store = &self.params;
        let mut x = self.pose_encoder.forward(g, store, inputs, ctx)?;
        if let Some(token) = self.class_token {
            let token = g.param(store, token);
            let mut parts = Vec::with_capacity(2 * batch);
            for b in 0..batch {
                parts.push(token);
                parts.push(g.slice_rows(x, b * t, t)?);
            }
            x = g.concat_rows(&parts)?;
        }
        let len = self.config.memory_len();
        x = self.add_positions(g, x, len, batch)?;
        for (l, layer) in self.encoder.iter().enumerate() {
            let h = layer.norm_attn.forward(g, store, x)?;
            let a = layer.attn.forward(g, store, h, h, h, batch, None, ctx, ("encoder", l, AttentionKind::SelfAttention))?;
            let a = dropout(g, a, self.config.dropout, ctx)?;
            x = g.add(x, a)?;
            let h = layer.norm_ff.forward(g, store, x)?;
            let f = layer.ff.forward(g, store, h)?;
            let f = dropout(g, f, self.config.dropout, ctx)?;
            x = g.add(x, f)?;
        }
        let memory = self.encoder_norm.forward(g, store, x)?;
        let class_embedding = if self.class_token.is_some() {
            let rows = (0..batch).map(|b| g.slice_rows(memory, b * len, 1)).collect::<Result<Vec<_>>>()?;
            Some(g.concat_rows(&rows)?)
        } else {
            None
        };
        Ok(Encoded { memory, class_embedding })
    }

    /// Runs the decoder stack once over `(B·T_q) × N` query poses and returns
    /// the normalised embedding after every layer.
    pub fn decode(&self, g: &mut Graph, queries: Var, memory: Var, batch: usize, mask: Option<&[bool]>, ctx: &mut Ctx) -> Result<Vec<Var>> {
        let tq = g.value(queries).rows() / batch.max(1);
        self.check_batch(g, queries, tq, batch, "decoder query")?;
        if g.value(memory).rows() != batch * self.config.memory_len() {
            return Err(PotrError::shape("decoder memory", g.shape(memory), &[batch * self.config.memory_len()]));
        }
        self.decoder_calls.fetch_add(1, Ordering::Relaxed);
        let store = &self.params;
        let x = self.pose_encoder.forward(g, store, queries, ctx)?;
        let mut x = self.add_positions(g, x, tq, batch)?;
        let mut outputs = Vec::with_capacity(self.decoder.len());
        for (l, layer) in self.decoder.iter().enumerate() {
            let h = layer.norm_self.forward(g, store, x)?;
            let a = layer.self_attn.forward(g, store, h, h, h, batch, mask, ctx, ("decoder", l, AttentionKind::SelfAttention))?;
            let a = dropout(g, a, self.config.dropout, ctx)?;
            x = g.add(x, a)?;
            let h = layer.norm_cross.forward(g, store, x)?;
            let c = layer.cross_attn.forward(g, store, h, memory, memory, batch, None, ctx, ("decoder", l, AttentionKind::EncoderDecoder))?;
            let c = dropout(g, c, self.config.dropout, ctx)?;
            x = g.add(x, c)?;
            let h = layer.norm_ff.forward(g, store, x)?;
            let f = layer.ff.forward(g, store, h)?;
            let f = dropout(g, f, self.config.dropout, ctx)?;
            x = g.add(x, f)?;
            outputs.push(self.decoder_norm.forward(g, store, x)?);
        }
        Ok(outputs)
    }

    /// `q + ψ(embedding)` for one decoder layer's output.
    fn residual_pose(&self, g: &mut Graph, layer: usize, embedding: Var, queries: Var, ctx: &mut Ctx) -> Result<Var> {
        let psi = &self.pose_decoders[if self.config.share_pose_decoder { 0 } else { layer }];
        let offset = psi.forward(g, &self.params, embedding, ctx)?;
        g.add(queries, offset)
    }

    /// Activity logits from the class token or from mean-pooled memory.
    pub fn classify(&self, g: &mut Graph, encoded: &Encoded, batch: usize) -> Result<Option<Var>> {
        let Some(head) = self.activity_head else { return Ok(None) };
        let features = match self.config.activity_source {
            ActivitySource::ClassToken => encoded
                .class_embedding
                .ok_or_else(|| PotrError::contract("class token missing"))?,
            ActivitySource::Memory => {
                let len = self.config.memory_len();
                let pooled = (0..batch)
                    .map(|b| {
                        let z = g.slice_rows(encoded.memory, b * len, len)?;
                        g.mean_rows(z)
                    })
                    .collect::<Result<Vec<_>>>()?;
                g.concat_rows(&pooled)?
            }
        };
        head.forward(g, &self.params, features).map(Some)
    }

    /// Builds the query stack: `target_len` copies of each sequence's last pose.
    pub fn query_stack(&self, inputs: &Tensor, batch: usize) -> Result<Tensor> {
        let (t, n) = (self.config.input_len, self.config.pose_dim);
        if inputs.rows() != t * batch || inputs.cols() != n {
            return Err(PotrError::shape("query_stack", inputs.shape(), &[t * batch, n]));
        }
        let tq = self.config.target_len;
        let mut data = Vec::with_capacity(batch * tq * n);
        for b in 0..batch {
            let last = inputs.row(b * t + t - 1);
            for _ in 0..tq {
                data.extend_from_slice(last);
            }
        }
        Tensor::matrix(batch * tq, n, data)
    }

    /// Batched non-autoregressive forward over `(B·T) × N` inputs. The
    /// decoder stack runs exactly once.
    pub fn forward(&self, g: &mut Graph, inputs: &Tensor, batch: usize, ctx: &mut Ctx, with_logits: bool) -> Result<Forward> {
        let queries = self.query_stack(inputs, batch)?;
        let x = g.constant(inputs.clone());
        let encoded = self.encode(g, x, batch, ctx)?;
        let q = g.constant(queries);
        let embeddings = self.decode(g, q, encoded.memory, batch, None, ctx)?;
        let layers = embeddings
            .iter()
            .enumerate()
            .map(|(l, &e)| self.residual_pose(g, l, e, q, ctx))
            .collect::<Result<Vec<_>>>()?;
        let logits = if with_logits { self.classify(g, &encoded, batch)? } else { None };
        Ok(Forward { layers, logits, encoded })
    }

    /// Batched inference returning the final-layer `(B·T') × N` prediction.
    pub fn predict_batch(&self, inputs: &Tensor, batch: usize) -> Result<(Tensor, Option<Tensor>)> {
        let mut g = Graph::new();
        let mut ctx = Ctx::eval();
        let out = self.forward(&mut g, inputs, batch, &mut ctx, true)?;
        let last = *out.layers.last().expect("layers");
        Ok((g.value(last).clone(), out.logits.map(|l| g.value(l).clone())))
    }

    fn check_sequence(&self, x: &PoseSequence) -> Result<()> {
        if x.is_empty() {
            return Err(PotrError::contract("empty input sequence"));
        }
        if x.len() != self.config.input_len || x.pose_dim() != self.config.pose_dim {
            return Err(PotrError::shape("predict", x.frames().shape(), &[self.config.input_len, self.config.pose_dim]));
        }
        Ok(())
    }

    /// Non-autoregressive prediction for one sequence with attention maps.
    pub fn predict(&self, x: &PoseSequence) -> Result<Prediction> {
        self.check_sequence(x)?;
        let mut g = Graph::new();
        let mut ctx = Ctx::eval().recording();
        let out = self.forward(&mut g, x.frames(), 1, &mut ctx, true)?;
        Ok(Prediction {
            layers: out.layers.iter().map(|&v| g.value(v).clone()).collect(),
            logits: out.logits.map(|l| g.data(l).to_vec()),
            attention: ctx.attention,
        })
    }

    /// Autoregressive baseline: one decoder execution per output step, each
    /// feeding the previous prediction back as the next query under a
    /// look-ahead mask. Returns `(B·T') × N`.
    pub fn predict_autoregressive_batch(&self, inputs: &Tensor, batch: usize, ctx: &mut Ctx) -> Result<Tensor> {
        let (t, n, steps) = (self.config.input_len, self.config.pose_dim, self.config.target_len);
        if inputs.rows() != t * batch || inputs.cols() != n {
            return Err(PotrError::shape("predict_autoregressive", inputs.shape(), &[t * batch, n]));
        }
        let mut g = Graph::new();
        let x = g.constant(inputs.clone());
        let encoded = self.encode(&mut g, x, batch, ctx)?;
        // queries[b] holds the poses fed so far for sequence b.
        let mut queries: Vec<Vec<f64>> = (0..batch).map(|b| inputs.row(b * t + t - 1).to_vec()).collect();
        let mut outputs: Vec<Vec<f64>> = vec![Vec::with_capacity(steps * n); batch];
        for step in 1..=steps {
            let stacked: Vec<f64> = queries.concat();
            let q = g.constant(Tensor::matrix(batch * step, n, stacked)?);
            let mask = causal_mask(step);
            let embeddings = self.decode(&mut g, q, encoded.memory, batch, Some(&mask), ctx)?;
            let last_layer = self.config.layers - 1;
            let pred = self.residual_pose(&mut g, last_layer, embeddings[last_layer], q, ctx)?;
            let pred = g.data(pred);
            for b in 0..batch {
                let row = &pred[(b * step + step - 1) * n..(b * step + step) * n];
                outputs[b].extend_from_slice(row);
                queries[b].extend_from_slice(row);
            }
        }
        Tensor::matrix(batch * steps, n, outputs.concat())
    }

    pub fn predict_autoregressive(&self, x: &PoseSequence) -> Result<PoseSequence> {
        self.check_sequence(x)?;
        let mut ctx = Ctx::eval();
        let out = self.predict_autoregressive_batch(x.frames(), 1, &mut ctx)?;
        x.with_frames(out)
    }
}

/// `target_len` exact copies of the last input frame.
pub fn build_query_sequence(x: &PoseSequence, target_len: usize) -> Result<PoseSequence> {
    if x.is_empty() {
        return Err(PotrError::contract("cannot build queries from an empty sequence"));
    }
    if target_len == 0 {
        return Err(PotrError::contract("target length must be at least 1"));
    }
    let last = x.last_frame();
    let data = last.repeat(target_len);
    x.with_frames(Tensor::matrix(target_len, x.pose_dim(), data)?)
}
