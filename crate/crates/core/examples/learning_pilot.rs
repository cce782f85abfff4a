//! Pilot run for the learning-signal check: trains the default model on the
//! two-class synthetic set and prints held-out metrics along the way.
//!
//! `cargo run --release -p potr --example learning_pilot [steps]`

use std::time::Instant;

use potr::data::{compute_stats, generate_synthetic, window_dataset, SyntheticSpec};
use potr::model::{ModelConfig, PotrModel};
use potr::pipeline::{evaluate, normalize_sequences, EvalOptions, Forecaster};
use potr::train::{TrainConfig, Trainer};

fn main() -> potr::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let (train, test) = data.split(0.2);
    let stats = compute_stats(&train)?;
    let config = ModelConfig { input_len: 40, target_len: 20, num_classes: 2, ..ModelConfig::default() };
    let mut model = PotrModel::new(config)?;
    let windows = window_dataset(&normalize_sequences(&train.sequences, &stats)?, 40, 20, 5)?;
    let tc = TrainConfig { total_steps: steps, ..TrainConfig::default() };
    let mut trainer = Trainer::new(&mut model, tc, true)?;
    let options = EvalOptions { max_windows: 400, ..EvalOptions::default() };
    let start = Instant::now();
    while trainer.step() < steps {
        let row = trainer.train_step(&mut model, &windows)?;
        if row.step % 250 == 0 || row.step == steps {
            let f = Forecaster::new(model.clone(), stats.clone())?;
            let report = evaluate(&f, &test, &options)?;
            let potr = report.row("potr", "l1").unwrap().values.clone();
            let zv = report.row("zero_velocity", "l1").unwrap().values.clone();
            println!(
                "step {} loss {:.4} l1@400ms {:.5} zv {:.5} ratio {:.3} acc {:.3} elapsed {:.0}s",
                row.step,
                row.loss_total,
                potr[3],
                zv[3],
                potr[3] / zv[3],
                report.summary_value("activity_accuracy").unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
