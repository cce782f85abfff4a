//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so
//! the throughput measurement is not disturbed by other work.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{random_tensor, randomize_pose_decoder, toy_config};
use potr::bench::{run_bench, BenchMode, BenchOptions};
use potr::data::{
    compute_stats, generate_synthetic, load_poses, save_poses, window_dataset, NormalizationStats, Representation, SyntheticSpec,
};
use potr::metrics::{map_at_threshold, mpjpe};
use potr::model::{export_attention, matrix_from_csv, ActivitySource, Checkpoint, Codec, ModelConfig, PotrModel};
use potr::nn::{gcn_layer, Activation, AttentionKind, Ctx};
use potr::pipeline::{evaluate, normalize_sequences, EvalOptions, Forecaster};
use potr::tensor::{finite_diff_check, matmul, softmax_rows, Graph, HasParams, Tensor};
use potr::train::{cross_entropy_loss, motion_loss, total_loss, train_loop, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panic: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    let line = match &outcome {
        Ok(detail) => format!("ACCEPTANCE {n} {name}: PASS ({detail}; {secs:.1}s)\n"),
        Err(detail) => format!("ACCEPTANCE {n} {name}: FAIL ({detail}; {secs:.1}s)\n"),
    };
    // The raw handle is not captured by the test harness, so the verdicts
    // show up in plain `cargo test` output too.
    let _ = std::io::stderr().write_all(line.as_bytes());
    outcome.is_ok()
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for codec in [Codec::Linear, Codec::GcnFull] {
        let mut model = PotrModel::new(toy_config(codec, 2)).unwrap();
        randomize_pose_decoder(&mut model, 11);
        let inputs = random_tensor(1, 2 * 3, 4, 1.0);
        let targets = random_tensor(2, 2 * 2, 4, 1.0);
        let labels = [0usize, 1];
        let err = finite_diff_check(
            &mut model,
            |m, g| {
                let out = m.forward(g, &inputs, 2, &mut Ctx::train(0), true)?;
                let t = g.constant(targets.clone());
                let motion = motion_loss(g, &out.layers, t)?;
                let ce = cross_entropy_loss(g, out.logits.expect("classes configured"), &labels)?;
                total_loss(g, motion, Some(ce), 1.0)
            },
            1e-5,
        )
        .map_err(|e| e.to_string())?;
        ensure(err < 1e-4, format!("{} codec max relative error {err:e}", codec.name()))?;
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("max relative error {worst:.2e} over linear and gcn_full"))
}

fn zero_velocity_equivalence() -> Check {
    let spec = SyntheticSpec { per_class: 8, sequence_len: 40, ..SyntheticSpec::default() };
    let mut checked = 0;
    for representation in [Representation::Positions3d, Representation::RotationMatrices] {
        let data = generate_synthetic(&SyntheticSpec { representation, ..spec.clone() }).unwrap();
        let stats = compute_stats(&data).unwrap();
        let config = ModelConfig {
            pose_dim: data.skeleton.pose_dim(),
            nodes: data.skeleton.nodes,
            embed_dim: 16,
            layers: 2,
            heads: 2,
            ff_dim: 32,
            input_len: 10,
            target_len: 12,
            num_classes: 2,
            ..ModelConfig::default()
        };
        let forecaster = Forecaster::new(PotrModel::new(config).unwrap(), stats).unwrap();
        let report = evaluate(&forecaster, &data, &EvalOptions::default()).unwrap();
        for row in report.rows.iter().filter(|r| r.predictor == "potr") {
            let zv = report.row("zero_velocity", &row.metric).ok_or("missing baseline row")?;
            let same = row.values.iter().zip(&zv.values).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, format!("{} {}: {:?} vs {:?}", representation.name(), row.metric, row.values, zv.values))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} metric rows bitwise equal at every horizon"))
}

fn decoder_call_counts() -> Check {
    for tq in [1usize, 5, 25] {
        let model = PotrModel::new(ModelConfig { target_len: tq, ..toy_config(Codec::Linear, 0) }).unwrap();
        let x = common::sequence(random_tensor(tq as u64, 3, 4, 1.0), 2);
        model.reset_decoder_calls();
        model.predict(&x).unwrap();
        ensure(model.decoder_calls() == 1, format!("NAR T'={tq}: {} calls", model.decoder_calls()))?;
        model.reset_decoder_calls();
        model.predict_autoregressive(&x).unwrap();
        ensure(model.decoder_calls() == tq, format!("AR T'={tq}: {} calls", model.decoder_calls()))?;
    }
    Ok("NAR 1 call, AR T' calls for T' in {1, 5, 25}".into())
}

fn throughput_ratio() -> Check {
    let start = Instant::now();
    let config = ModelConfig {
        pose_dim: 15,
        nodes: 5,
        input_len: 50,
        target_len: 25,
        layers: 4,
        heads: 4,
        embed_dim: 128,
        ..ModelConfig::default()
    };
    let model = PotrModel::new(config).unwrap();
    let opts = BenchOptions { reps: 5, warmup: 1, sequences_per_rep: 4, seed: 0 };
    let nar = run_bench(&model, BenchMode::Nar, &opts).map_err(|e| e.to_string())?;
    let ar = run_bench(&model, BenchMode::Ar, &opts).map_err(|e| e.to_string())?;
    let ratio = nar.median / ar.median;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("NAR {:.1} SPS, AR {:.2} SPS, ratio {ratio:.1}x over {} reps", nar.median, ar.median, opts.reps);
    ensure(ratio >= 5.0, detail.clone())?;
    ensure(secs < 300.0, format!("took {secs:.0}s"))?;
    Ok(detail)
}

fn learning_signal() -> Check {
    let start = Instant::now();
    let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
    ensure(data.num_classes == 2 && data.len() == 1000, "unexpected dataset shape")?;
    let (train, test) = data.split(0.2);
    let stats = compute_stats(&train).unwrap();
    let config = ModelConfig { input_len: 40, target_len: 20, num_classes: 2, ..ModelConfig::default() };
    ensure(config.activity_source == ActivitySource::ClassToken, "class token not the default activity source")?;
    let mut model = PotrModel::new(config).unwrap();
    let windows = window_dataset(&normalize_sequences(&train.sequences, &stats).unwrap(), 40, 20, 5).unwrap();
    let tc = TrainConfig { total_steps: 2000, eval_interval: 0, ..TrainConfig::default() };
    let mut trainer = Trainer::new(&mut model, tc, true).unwrap();
    trainer.run(&mut model, &windows, None, |_, _, _| Ok(())).unwrap();
    let forecaster = Forecaster::new(model, stats).unwrap();
    let report = evaluate(&forecaster, &test, &EvalOptions::default()).unwrap();
    let at = report.horizons_ms.iter().position(|&h| h == 400.0).ok_or("400 ms horizon missing")?;
    let potr = report.row("potr", "l1").unwrap().values[at];
    let zv = report.row("zero_velocity", "l1").unwrap().values[at];
    let acc = report.summary_value("activity_accuracy").ok_or("no accuracy")?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("l1@400ms {potr:.5} vs zero-velocity {zv:.5} (ratio {:.3}), accuracy {acc:.3}", potr / zv);
    ensure(potr < 0.7 * zv, detail.clone())?;
    ensure(acc >= 0.90, detail.clone())?;
    ensure(secs < 1800.0, format!("took {secs:.0}s"))?;
    Ok(detail)
}

fn loss_arithmetic() -> Check {
    let mut g = Graph::new();
    let target = g.constant(Tensor::zeros(&[1, 2]));
    let l1 = g.constant(Tensor::filled(&[1, 2], 1.0));
    let l2 = g.constant(Tensor::filled(&[1, 2], 2.0));
    let motion = motion_loss(&mut g, &[l1, l2], target).unwrap();
    ensure(g.data(motion)[0] == 1.5, format!("layer average {}", g.data(motion)[0]))?;
    let logits = g.constant(Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
    let ce = cross_entropy_loss(&mut g, logits, &[0]).unwrap();
    let total = total_loss(&mut g, motion, Some(ce), 1.0).unwrap();
    let expected = 1.5 + 2f64.ln();
    ensure(g.data(total)[0] == expected, format!("total {} vs {expected}", g.data(total)[0]))?;
    for layers in 1..=6 {
        let t = random_tensor(99, 3, 4, 1.0);
        let preds: Vec<Tensor> = (0..layers).map(|l| random_tensor(l as u64, 3, 4, 2.0)).collect();
        let mut brute = 0.0;
        for p in &preds {
            let mut s = 0.0;
            for (a, b) in p.data().iter().zip(t.data()) {
                s += (a - b).abs();
            }
            brute += s / 12.0;
        }
        brute /= layers as f64;
        let mut g = Graph::new();
        let tv = g.constant(t);
        let vars: Vec<_> = preds.into_iter().map(|p| g.constant(p)).collect();
        let m = motion_loss(&mut g, &vars, tv).unwrap();
        ensure((g.data(m)[0] - brute).abs() < 1e-12, format!("L={layers}: {} vs {brute}", g.data(m)[0]))?;
    }
    Ok("(1+2)/2 = 1.5, λ=1 total exact, layer averaging matches for L in 1..=6".into())
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let instances = 120;
    for _ in 0..instances {
        // gcn_layer against a quadruple loop followed by tanh.
        let (k, fin, fout) = (rng.gen_range(1..6), rng.gen_range(1..5), rng.gen_range(1..5));
        let (a, h, w) = (rand_matrix(&mut rng, k, k), rand_matrix(&mut rng, k, fin), rand_matrix(&mut rng, fin, fout));
        let mut g = Graph::new();
        let (av, hv, wv) = (g.constant(a.clone()), g.constant(h.clone()), g.constant(w.clone()));
        let out = gcn_layer(&mut g, av, hv, wv, Activation::Tanh).unwrap();
        for i in 0..k {
            for j in 0..fout {
                let mut s = 0.0;
                for m in 0..k {
                    for p in 0..fin {
                        s += a.get(i, m) * h.get(m, p) * w.get(p, j);
                    }
                }
                ensure((g.value(out).get(i, j) - s.tanh()).abs() < 1e-9, "gcn_layer mismatch")?;
            }
        }

        let (n, kk, m) = (rng.gen_range(1..7), rng.gen_range(1..7), rng.gen_range(1..7));
        let (x, y) = (rand_matrix(&mut rng, n, kk), rand_matrix(&mut rng, kk, m));
        let prod = matmul(&x, &y).unwrap();
        for i in 0..n {
            for j in 0..m {
                let s: f64 = (0..kk).map(|p| x.get(i, p) * y.get(p, j)).sum();
                ensure((prod.get(i, j) - s).abs() < 1e-9, "matmul mismatch")?;
            }
        }

        let z = rand_matrix(&mut rng, n, m);
        let sm = softmax_rows(&z);
        for i in 0..n {
            let denom: f64 = z.row(i).iter().map(|v| v.exp()).sum();
            for j in 0..m {
                ensure((sm.get(i, j) - z.get(i, j).exp() / denom).abs() < 1e-9, "softmax mismatch")?;
            }
        }

        let (frames, joints) = (rng.gen_range(1..5), rng.gen_range(1..6));
        let pa = rand_matrix(&mut rng, frames, joints * 3);
        let pb = rand_matrix(&mut rng, frames, joints * 3);
        let th = rng.gen_range(0.5..3.0);
        let (mut dist_sum, mut hits) = (0.0, 0usize);
        for t in 0..frames {
            for j in 0..joints {
                let d = (0..3).map(|c| (pa.get(t, 3 * j + c) - pb.get(t, 3 * j + c)).powi(2)).sum::<f64>().sqrt();
                dist_sum += d;
                hits += usize::from(d < th);
            }
        }
        let count = (frames * joints) as f64;
        let (sa, sb) = (common::sequence(pa, joints), common::sequence(pb, joints));
        ensure((mpjpe(&sa, &sb).unwrap().mean - dist_sum / count).abs() < 1e-9, "mpjpe mismatch")?;
        ensure((map_at_threshold(&sa, &sb, th).unwrap().aggregate - hits as f64 / count).abs() < 1e-9, "mAP mismatch")?;
    }
    Ok(format!("{instances} random instances each for gcn_layer, matmul, softmax_rows, mpjpe, map_at_threshold"))
}

fn attention_sanity() -> Check {
    let mut model = PotrModel::new(ModelConfig { target_len: 5, ..toy_config(Codec::GcnFull, 2) }).unwrap();
    randomize_pose_decoder(&mut model, 4);
    let x = common::sequence(random_tensor(8, 3, 4, 1.0), 2);
    let pred = model.predict(&x).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_attention(&pred.attention, dir.path()).unwrap();
    let mut rows = 0;
    for f in &files {
        let m = matrix_from_csv(&std::fs::read_to_string(f).unwrap()).unwrap();
        for r in 0..m.rows() {
            let s: f64 = m.row(r).iter().sum();
            ensure((s - 1.0).abs() < 1e-9, format!("{} row {r} sums to {s}", f.display()))?;
            rows += 1;
        }
    }
    let mut ctx = Ctx::eval().recording();
    model.predict_autoregressive_batch(x.frames(), 1, &mut ctx).unwrap();
    let mut worst: f64 = 0.0;
    let mut maps = 0;
    for map in ctx.attention.iter().filter(|m| m.stack == "decoder" && m.kind == AttentionKind::SelfAttention) {
        let w = &map.weights;
        for i in 0..w.rows() {
            let future: f64 = (i + 1..w.cols()).map(|j| w.get(i, j)).sum();
            worst = worst.max(future.abs());
        }
        maps += 1;
    }
    ensure(maps > 0, "no masked self-attention maps recorded")?;
    ensure(worst < 1e-9, format!("future weight {worst:e}"))?;
    Ok(format!("{rows} exported rows within 1e-9 of 1; max future weight {worst:.1e} over {maps} AR maps"))
}

fn class_token_ablation() -> Check {
    let mut model = PotrModel::new(toy_config(Codec::Linear, 2)).unwrap();
    let before = model.clone();
    let windows = potr::data::WindowSet {
        windows: (0..8)
            .map(|i| potr::data::Window {
                input: random_tensor(i, 3, 4, 1.0),
                target: random_tensor(50 + i, 2, 4, 1.0),
                label: Some(i as usize % 2),
                source: i as usize,
                start: 0,
            })
            .collect(),
        skipped: 0,
    };
    let cfg = TrainConfig { total_steps: 20, warmup_steps: 2, batch_size: 4, lambda: 0.0, eval_interval: 0, base_lr: 1e-2, ..TrainConfig::default() };
    train_loop(&mut model, &windows, None, &cfg).unwrap();
    let head = model.activity_head_params();
    ensure(!head.is_empty(), "model has no activity head")?;
    for &id in &head {
        ensure(model.params().get(id).data() == before.params().get(id).data(), format!("{} changed", model.params().name(id)))?;
    }
    let moved = model.params().ids().any(|id| model.params().get(id).data() != before.params().get(id).data());
    ensure(moved, "no parameter trained")?;
    Ok(format!("{} head tensors bit-identical after 20 steps at λ=0", head.len()))
}

fn format_durability() -> Check {
    let data = generate_synthetic(&SyntheticSpec { per_class: 4, ..SyntheticSpec::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let pose = dir.path().join("d.pose");
    save_poses(&pose, &data).unwrap();
    let back = load_poses(&pose).unwrap();
    let bitwise = back.sequences.iter().zip(&data.sequences).all(|(a, b)| {
        a.label == b.label && a.sequence.frames().data().iter().zip(b.sequence.frames().data()).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    ensure(bitwise && back == data, "POSE round trip differs")?;

    let mut model = PotrModel::new(toy_config(Codec::GcnFull, 2)).unwrap();
    randomize_pose_decoder(&mut model, 6);
    let forecaster = Forecaster::new(model, NormalizationStats { mean: vec![0.1; 4], std: vec![2.0; 4] }).unwrap();
    let path = dir.path().join("m.ckpt");
    forecaster.to_checkpoint().save(&path).unwrap();
    let restored = Forecaster::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    let x = common::sequence(random_tensor(3, 3, 4, 1.0), 2);
    let (a, b) = (forecaster.forecast(&x).unwrap(), restored.forecast(&x).unwrap());
    let same = a.poses.frames().data().iter().zip(b.poses.frames().data()).all(|(p, q)| p.to_bits() == q.to_bits());
    ensure(same && a.logits == b.logits, "checkpoint predictions differ")?;
    Ok("POSE bitwise; checkpoint predictions and logits identical".into())
}

#[test]
fn acceptance_criteria() {
    let results = [
        run(1, "gradient correctness", gradient_correctness),
        run(2, "zero-velocity equivalence", zero_velocity_equivalence),
        run(3, "non-autoregressive decoder calls", decoder_call_counts),
        run(4, "throughput ratio", throughput_ratio),
        run(5, "learning signal", learning_signal),
        run(6, "loss arithmetic", loss_arithmetic),
        run(7, "oracle equivalence", oracle_equivalence),
        run(8, "attention sanity", attention_sanity),
        run(9, "class-token ablation", class_token_ablation),
        run(10, "format durability", format_durability),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
