//! Losses, AdamW, the warmup schedule, and the training loop.

mod loss;
mod optim;
mod schedule;
mod trainer;

pub use loss::{cross_entropy_loss, layerwise_l1_loss, motion_loss, total_loss};
pub use optim::{adamw_step, clip_grad_norm, AdamWConfig, Moments, OptimizerState};
pub use schedule::warmup_lr;
pub use trainer::{evaluate_windows, stack_windows, train_loop, EvalPoint, LogRow, TrainConfig, Trainer, TrainingLog, LOG_HEADER};
