/// Linear warmup to `base_lr` over `warmup_steps`, constant afterwards.
/// Steps are 1-based.
pub fn warmup_lr(step: u64, base_lr: f64, warmup_steps: u64) -> f64 {
    if warmup_steps == 0 {
        return base_lr;
    }
    base_lr * (step as f64 / warmup_steps as f64).min(1.0)
}
