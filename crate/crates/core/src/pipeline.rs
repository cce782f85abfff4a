//! Raw-space prediction and evaluation around a trained model and the
//! normalisation statistics it was trained with.

use crate::data::{normalize, Dataset, LabeledSequence, NormalizationStats, PoseSequence, WindowSet, window_dataset};
use crate::error::{PotrError, Result};
use crate::metrics::{argmax, zero_velocity_predict, EvalReport};
use crate::model::{Checkpoint, PotrModel, Prediction};
use crate::nn::Ctx;
use crate::tensor::Tensor;

const STATS_MEAN: &str = "stats.mean";
const STATS_STD: &str = "stats.std";

/// Model plus the per-dimension statistics that map raw poses into its
/// normalised input space.
#[derive(Clone, Debug)]
pub struct Forecaster {
    pub model: PotrModel,
    pub stats: NormalizationStats,
}

/// One raw-space forecast.
#[derive(Clone, Debug)]
pub struct Forecast {
    pub poses: PoseSequence,
    pub logits: Option<Vec<f64>>,
    pub prediction: Prediction,
}

impl Forecaster {
    pub fn new(model: PotrModel, stats: NormalizationStats) -> Result<Self> {
        if stats.dim() != model.config().pose_dim {
            return Err(PotrError::shape("forecaster", &[stats.dim()], &[model.config().pose_dim]));
        }
        Ok(Forecaster { model, stats })
    }

    /// Missing statistics blocks fall back to the identity transform.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let model = ckpt.to_model()?;
        let stats = match (ckpt.block(STATS_MEAN), ckpt.block(STATS_STD)) {
            (Some(m), Some(s)) => NormalizationStats { mean: m.data().to_vec(), std: s.data().to_vec() },
            _ => NormalizationStats::identity(model.config().pose_dim),
        };
        Forecaster::new(model, stats)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        checkpoint_with_stats(&self.model, &self.stats)
    }

    /// Normalises whole sequences for windowing and training.
    pub fn normalize_sequences(&self, seqs: &[LabeledSequence]) -> Result<Vec<LabeledSequence>> {
        normalize_sequences(seqs, &self.stats)
    }

    /// Forecasts from the last `T` frames of `input`, with attention maps.
    pub fn forecast(&self, input: &PoseSequence) -> Result<Forecast> {
        let t = self.model.config().input_len;
        if input.len() < t {
            return Err(PotrError::contract(format!("input has {} frames, model needs {t}", input.len())));
        }
        let recent = input.window(input.len() - t, t)?;
        let normed = recent.with_frames(normalize(recent.frames(), &self.stats)?)?;
        let prediction = self.model.predict(&normed)?;
        let queries = self.model.query_stack(normed.frames(), 1)?;
        let raw = residual_to_raw(recent.frames(), prediction.final_layer(), &queries, &self.stats, 1, t)?;
        Ok(Forecast { poses: recent.with_frames(raw)?, logits: prediction.logits.clone(), prediction })
    }

    /// Raw-space forecast from the autoregressive baseline decoder.
    pub fn forecast_autoregressive(&self, input: &PoseSequence) -> Result<PoseSequence> {
        let t = self.model.config().input_len;
        if input.len() < t {
            return Err(PotrError::contract(format!("input has {} frames, model needs {t}", input.len())));
        }
        let recent = input.window(input.len() - t, t)?;
        let normed = normalize(recent.frames(), &self.stats)?;
        let pred = self.model.predict_autoregressive_batch(&normed, 1, &mut Ctx::eval())?;
        let queries = self.model.query_stack(&normed, 1)?;
        recent.with_frames(residual_to_raw(recent.frames(), &pred, &queries, &self.stats, 1, t)?)
    }

    /// Batched raw-space forecasts for `(B·T) × N` raw inputs.
    pub fn forecast_batch(&self, raw_inputs: &Tensor, batch: usize) -> Result<(Tensor, Option<Tensor>)> {
        let t = self.model.config().input_len;
        let normed = normalize(raw_inputs, &self.stats)?;
        let (pred, logits) = self.model.predict_batch(&normed, batch)?;
        let queries = self.model.query_stack(&normed, batch)?;
        Ok((residual_to_raw(raw_inputs, &pred, &queries, &self.stats, batch, t)?, logits))
    }
}

/// Checkpoint of `model` carrying `stats` as extra blocks, readable by
/// [`Forecaster::from_checkpoint`].
pub fn checkpoint_with_stats(model: &PotrModel, stats: &NormalizationStats) -> Checkpoint {
    Checkpoint::from_model(model)
        .with_block(STATS_MEAN, Tensor::new(&[stats.dim()], stats.mean.clone()).expect("non-empty"))
        .with_block(STATS_STD, Tensor::new(&[stats.dim()], stats.std.clone()).expect("non-empty"))
}

/// `x_T + (ŷ − q) · σ`: the predicted offset from the query, rescaled and
/// added to the raw last pose. A zero offset returns `x_T` exactly.
fn residual_to_raw(raw_inputs: &Tensor, pred: &Tensor, queries: &Tensor, stats: &NormalizationStats, batch: usize, t: usize) -> Result<Tensor> {
    let n = stats.dim();
    let tq = pred.rows() / batch;
    let mut out = Vec::with_capacity(pred.numel());
    for b in 0..batch {
        let last = raw_inputs.row(b * t + t - 1);
        for s in 0..tq {
            let r = b * tq + s;
            let (p, q) = (pred.row(r), queries.row(r));
            out.extend((0..n).map(|j| last[j] + (p[j] - q[j]) * stats.std[j]));
        }
    }
    Tensor::matrix(batch * tq, n, out)
}

pub fn normalize_sequences(seqs: &[LabeledSequence], stats: &NormalizationStats) -> Result<Vec<LabeledSequence>> {
    seqs.iter()
        .map(|s| {
            Ok(LabeledSequence {
                sequence: s.sequence.with_frames(normalize(s.sequence.frames(), stats)?)?,
                label: s.label,
            })
        })
        .collect()
}

/// Evaluation settings for [`evaluate`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub horizons_ms: Vec<f64>,
    /// Distance threshold for mAP, in the data's length unit.
    pub map_threshold: f64,
    pub stride: usize,
    pub batch: usize,
    /// Cap on the number of windows scored; 0 means all.
    pub max_windows: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            horizons_ms: crate::metrics::DEFAULT_HORIZONS_MS.to_vec(),
            map_threshold: 0.1,
            stride: 10,
            batch: 32,
            max_windows: 0,
        }
    }
}

/// Scores the model against the zero-velocity baseline on raw windows of
/// `data`. Rows are named `potr` and `zero_velocity`; the summary carries
/// window count and, when labels exist, activity accuracy.
pub fn evaluate(forecaster: &Forecaster, data: &Dataset, options: &EvalOptions) -> Result<EvalReport> {
    let cfg = forecaster.model.config();
    if data.representation.features_per_node() != cfg.features_per_node() || data.skeleton.pose_dim() != cfg.pose_dim {
        return Err(PotrError::contract(format!(
            "data ({} with pose dim {}) does not match the model (pose dim {})",
            data.representation.name(),
            data.skeleton.pose_dim(),
            cfg.pose_dim
        )));
    }
    let mut windows: WindowSet = window_dataset(&data.sequences, cfg.input_len, cfg.target_len, options.stride)?;
    if options.max_windows > 0 {
        windows.windows.truncate(options.max_windows);
    }
    if windows.is_empty() {
        return Err(PotrError::contract("no sequence is long enough to evaluate"));
    }
    let template = &data.sequences[0].sequence;
    let mut report = EvalReport::new(&options.horizons_ms, data.frame_rate, cfg.target_len)?;
    let (mut preds, mut zv, mut gts) = (Vec::new(), Vec::new(), Vec::new());
    let (mut correct, mut labeled) = (0usize, 0usize);
    for chunk in windows.windows.chunks(options.batch.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let (inputs, _, labels) = crate::train::stack_windows(&refs)?;
        let (raw, logits) = forecaster.forecast_batch(&inputs, chunk.len())?;
        let tq = cfg.target_len;
        for (i, w) in chunk.iter().enumerate() {
            let rows = raw.data()[i * tq * cfg.pose_dim..(i + 1) * tq * cfg.pose_dim].to_vec();
            preds.push(template.with_frames(Tensor::matrix(tq, cfg.pose_dim, rows)?)?);
            let input = template.with_frames(w.input.clone())?;
            zv.push(zero_velocity_predict(&input, tq)?);
            gts.push(template.with_frames(w.target.clone())?);
        }
        if let (Some(logits), Some(labels)) = (logits, labels) {
            let c = logits.cols();
            for (i, &l) in labels.iter().enumerate() {
                labeled += 1;
                correct += usize::from(argmax(&logits.data()[i * c..(i + 1) * c]) == l);
            }
        }
    }
    report.add_predictor("potr", &preds, &gts, options.map_threshold)?;
    report.add_predictor("zero_velocity", &zv, &gts, options.map_threshold)?;
    report.summary.push(("windows".into(), windows.len() as f64));
    if labeled > 0 {
        report.summary.push(("activity_accuracy".into(), correct as f64 / labeled as f64));
    }
    Ok(report)
}
