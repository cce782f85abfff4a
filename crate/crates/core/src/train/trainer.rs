use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{cross_entropy_loss, motion_loss, total_loss};
use super::optim::{adamw_step, clip_grad_norm, AdamWConfig, OptimizerState};
use super::schedule::warmup_lr;
use crate::data::{Window, WindowSet};
use crate::error::{PotrError, Result};
use crate::metrics::argmax;
use crate::model::PotrModel;
use crate::nn::{apply_stat_updates, Ctx};
use crate::tensor::{Graph, HasParams, Tensor};

const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    /// Weight of the activity loss.
    pub lambda: f64,
    pub seed: u64,
    /// Evaluate (and checkpoint, from the CLI) every this many steps; 0 disables.
    pub eval_interval: u64,
    pub base_lr: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// At most this many held-out windows are scored at each evaluation.
    pub eval_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 2000,
            warmup_steps: 200,
            batch_size: 16,
            lambda: 1.0,
            seed: 0,
            eval_interval: 500,
            base_lr: 1e-4,
            weight_decay: 1e-5,
            clip_norm: Some(1.0),
            eval_limit: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(PotrError::config("warmup_steps must not exceed total_steps"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(PotrError::config("lambda must be a finite non-negative number"));
        }
        if self.batch_size == 0 {
            return Err(PotrError::config("batch size must be positive"));
        }
        if !(self.base_lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(PotrError::config("learning rate and weight decay must be non-negative"));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(PotrError::config("clip norm must be positive"));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig { lr: self.base_lr, weight_decay: self.weight_decay, ..AdamWConfig::default() }
    }
}

/// Held-out scores: final-layer mean L1 in normalized units and, when the
/// model classifies and windows carry labels, accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub l1: f64,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_motion: f64,
    /// `None` when the activity term is not part of the objective.
    pub loss_activity: Option<f64>,
    pub eval: Option<EvalPoint>,
}

pub const LOG_HEADER: &str = "step,lr,loss_total,loss_motion,loss_activity,eval_l1,eval_accuracy";

impl LogRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        format!(
            "{},{:?},{:?},{:?},{},{},{}",
            self.step,
            self.lr,
            self.loss_total,
            self.loss_motion,
            opt(self.loss_activity),
            opt(self.eval.map(|e| e.l1)),
            opt(self.eval.and_then(|e| e.accuracy)),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.to_csv_line());
        }
        s
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }
}

/// Owns the optimizer state and step counter for one model.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    optimizer: OptimizerState,
    step: u64,
    activity: bool,
}

impl Trainer {
    /// Starts from step 0. When the activity term is off (λ = 0, no classes,
    /// or unlabeled data) the activity head is frozen so it keeps its
    /// initial values.
    pub fn new(model: &mut PotrModel, config: TrainConfig, labeled: bool) -> Result<Self> {
        let optimizer = OptimizerState::new(config.adamw());
        Trainer::resume(model, config, optimizer, labeled)
    }

    /// Continues from a restored optimizer state; step numbering resumes at
    /// `optimizer.step`.
    pub fn resume(model: &mut PotrModel, config: TrainConfig, mut optimizer: OptimizerState, labeled: bool) -> Result<Self> {
        config.validate()?;
        optimizer.config = config.adamw();
        let activity = config.lambda > 0.0 && model.config().num_classes > 0 && labeled;
        for id in model.activity_head_params() {
            model.params_mut().set_trainable(id, activity);
        }
        Ok(Trainer { step: optimizer.step, config, optimizer, activity })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn uses_activity(&self) -> bool {
        self.activity
    }

    fn step_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(step);
        rng
    }

    /// One optimisation step on a batch drawn deterministically from
    /// `(seed, step)`, so split runs replay a continuous one exactly.
    pub fn train_step(&mut self, model: &mut PotrModel, data: &WindowSet) -> Result<LogRow> {
        if data.is_empty() {
            return Err(PotrError::contract("training set has no windows"));
        }
        let step = self.step + 1;
        let mut rng = self.step_rng(step);
        let b = self.config.batch_size.min(data.len());
        let picked: Vec<&Window> = sample(&mut rng, data.len(), b).into_iter().map(|i| &data.windows[i]).collect();
        let (inputs, targets, labels) = stack_windows(&picked)?;
        let use_labels = self.activity && labels.is_some();

        let mut g = Graph::new();
        let mut ctx = Ctx::train(rng.gen());
        let out = model.forward(&mut g, &inputs, b, &mut ctx, use_labels)?;
        let target = g.constant(targets);
        let motion = motion_loss(&mut g, &out.layers, target)?;
        let activity = match (use_labels, out.logits, &labels) {
            (true, Some(logits), Some(l)) => Some(cross_entropy_loss(&mut g, logits, l)?),
            _ => None,
        };
        let loss = total_loss(&mut g, motion, activity, self.config.lambda)?;
        g.backward(loss)?;

        let store = model.params_mut();
        store.zero_grad();
        store.collect_grads(&g);
        if let Some(max) = self.config.clip_norm {
            clip_grad_norm(store, max);
        }
        let lr = warmup_lr(step, self.config.base_lr, self.config.warmup_steps);
        adamw_step(store, &mut self.optimizer, lr)?;
        apply_stat_updates(store, &ctx.stat_updates, BN_MOMENTUM);
        self.step = step;

        Ok(LogRow {
            step,
            lr,
            loss_total: g.data(loss)[0],
            loss_motion: g.data(motion)[0],
            loss_activity: activity.map(|a| g.data(a)[0]),
            eval: None,
        })
    }

    /// Trains until `total_steps`, evaluating every `eval_interval` steps and
    /// at the end. `on_eval` runs after each evaluation (checkpointing hook).
    pub fn run<F>(&mut self, model: &mut PotrModel, train: &WindowSet, eval: Option<&WindowSet>, mut on_eval: F) -> Result<TrainingLog>
    where
        F: FnMut(&Trainer, &PotrModel, &LogRow) -> Result<()>,
    {
        let mut log = TrainingLog::default();
        while self.step < self.config.total_steps {
            let mut row = self.train_step(model, train)?;
            let interval = self.config.eval_interval;
            let due = (interval > 0 && row.step % interval == 0) || row.step == self.config.total_steps;
            if due {
                if let Some(e) = eval.filter(|e| !e.is_empty()) {
                    row.eval = Some(evaluate_windows(model, e, self.config.batch_size, self.config.eval_limit)?);
                }
                on_eval(self, model, &row)?;
            }
            if row.step % 100 == 0 || row.step == 1 {
                log::info!("step {} loss {:.5} (motion {:.5})", row.step, row.loss_total, row.loss_motion);
            }
            log.rows.push(row);
        }
        Ok(log)
    }
}

/// Convenience wrapper: fresh trainer, full run, no checkpoint hook.
pub fn train_loop(model: &mut PotrModel, train: &WindowSet, eval: Option<&WindowSet>, config: &TrainConfig) -> Result<TrainingLog> {
    let labeled = train.windows.iter().all(|w| w.label.is_some());
    let mut trainer = Trainer::new(model, config.clone(), labeled)?;
    trainer.run(model, train, eval, |_, _, _| Ok(()))
}

/// Scores the first `limit` windows in eval mode.
pub fn evaluate_windows(model: &PotrModel, data: &WindowSet, batch: usize, limit: usize) -> Result<EvalPoint> {
    let windows: Vec<&Window> = data.windows.iter().take(limit.max(1)).collect();
    if windows.is_empty() {
        return Err(PotrError::contract("no windows to evaluate"));
    }
    let (mut abs_sum, mut count, mut correct, mut labeled) = (0.0, 0usize, 0usize, 0usize);
    for chunk in windows.chunks(batch.max(1)) {
        let (inputs, targets, labels) = stack_windows(chunk)?;
        let (pred, logits) = model.predict_batch(&inputs, chunk.len())?;
        abs_sum += pred.data().iter().zip(targets.data()).map(|(p, t)| (p - t).abs()).sum::<f64>();
        count += pred.numel();
        if let (Some(logits), Some(labels)) = (logits, labels) {
            let c = logits.cols();
            for (i, &l) in labels.iter().enumerate() {
                labeled += 1;
                if argmax(&logits.data()[i * c..(i + 1) * c]) == l {
                    correct += 1;
                }
            }
        }
    }
    Ok(EvalPoint {
        l1: abs_sum / count as f64,
        accuracy: (labeled > 0).then(|| correct as f64 / labeled as f64),
    })
}

/// Row-stacks windows into `(B·T) × N` inputs and `(B·T') × N` targets.
/// Labels are returned only when every window has one.
pub fn stack_windows(windows: &[&Window]) -> Result<(Tensor, Tensor, Option<Vec<usize>>)> {
    let first = windows.first().ok_or_else(|| PotrError::contract("empty batch"))?;
    let (t, tq, n) = (first.input.rows(), first.target.rows(), first.input.cols());
    let mut inputs = Vec::with_capacity(windows.len() * t * n);
    let mut targets = Vec::with_capacity(windows.len() * tq * n);
    for w in windows {
        if w.input.rows() != t || w.target.rows() != tq || w.input.cols() != n {
            return Err(PotrError::shape("stack_windows", w.input.shape(), first.input.shape()));
        }
        inputs.extend_from_slice(w.input.data());
        targets.extend_from_slice(w.target.data());
    }
    let labels = windows.iter().map(|w| w.label).collect::<Option<Vec<_>>>();
    Ok((
        Tensor::matrix(windows.len() * t, n, inputs)?,
        Tensor::matrix(windows.len() * tq, n, targets)?,
        labels,
    ))
}
