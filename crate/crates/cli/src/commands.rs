use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use potr::bench::{run_bench, BenchMode, BenchOptions, BenchResult};
use potr::data::{
    compute_stats, dataset_to_csv, generate_synthetic, save_poses, sequence_to_csv, window_dataset, ClassLaw, Dataset, Representation,
    SyntheticSpec,
};
use potr::metrics::{argmax, DEFAULT_HORIZONS_MS};
use potr::model::{export_attention, Checkpoint, Codec, ModelConfig, PotrModel};
use potr::pipeline::{checkpoint_with_stats, evaluate, normalize_sequences, EvalOptions, Forecaster};
use potr::tensor::HasParams;
use potr::train::{OptimizerState, TrainConfig, Trainer, TrainingLog, LOG_HEADER};

use crate::settings::{load_dataset, parse_representation, require, usage, CsvLayout, Settings};
use crate::{Common, CsvFlags, ModelFlags};

const CHECKPOINT_FILE: &str = "checkpoint.potr";
const LOG_FILE: &str = "train_log.csv";

fn out_dir(common: &Common, default: &str) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_layout(settings: &Settings, flags: &CsvFlags, joints: usize, representation: Representation) -> Result<CsvLayout> {
    let representation = match settings.pick_opt(flags.representation.clone(), "representation")? {
        Some(r) => parse_representation(&r)?,
        None => representation,
    };
    Ok(CsvLayout {
        labels: flags.labels.clone(),
        joints: settings.pick(flags.joints, "joints", joints)?,
        representation,
        frame_rate: settings.pick(flags.frame_rate, "frame_rate", 30.0)?,
    })
}

fn model_config(settings: &Settings, flags: &ModelFlags, base: ModelConfig) -> Result<ModelConfig> {
    let mut cfg = base;
    cfg.apply_overrides(&settings.kv).map_err(|e| usage(e.to_string()))?;
    if let Some(c) = &flags.codec {
        cfg.codec = Codec::parse(c).map_err(|e| usage(e.to_string()))?;
    }
    cfg.layers = flags.layers.unwrap_or(cfg.layers);
    cfg.heads = flags.heads.unwrap_or(cfg.heads);
    cfg.embed_dim = flags.embed_dim.unwrap_or(cfg.embed_dim);
    cfg.input_len = flags.input_len.unwrap_or(cfg.input_len);
    cfg.target_len = flags.target_len.unwrap_or(cfg.target_len);
    cfg.dropout = flags.dropout.unwrap_or(cfg.dropout);
    Ok(cfg)
}

// ---------------------------------------------------------------- generate

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of activity classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Sequences per class.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    joints: Option<usize>,
    /// Frames per sequence.
    #[arg(long)]
    frames: Option<usize>,
    /// positions_3d or rotation_matrices.
    #[arg(long)]
    representation: Option<String>,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    frame_rate: Option<f64>,
    /// Use identical phase and amplitude for every sequence of a class.
    #[arg(long)]
    no_jitter: bool,
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let d = SyntheticSpec::default();
    let classes = s.pick(a.classes, "classes", 2)?;
    if classes == 0 {
        return Err(usage("--classes must be at least 1"));
    }
    let representation = match s.pick_opt(a.representation, "representation")? {
        Some(r) => parse_representation(&r)?,
        None => d.representation,
    };
    let spec = SyntheticSpec {
        joints: s.pick(a.joints, "joints", d.joints)?,
        representation,
        classes: SyntheticSpec::default_laws(classes),
        noise_sigma: s.pick(a.noise, "noise_sigma", d.noise_sigma)?,
        frame_rate: s.pick(a.frame_rate, "frame_rate", d.frame_rate)?,
        sequence_len: s.pick(a.frames, "sequence_len", d.sequence_len)?,
        per_class: s.pick(a.per_class, "per_class", d.per_class)?,
        jitter: !a.no_jitter && s.pick(None, "jitter", true)?,
        seed: s.pick(a.common.seed, "seed", d.seed)?,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let data = generate_synthetic(&spec)?;
    let out = a.common.out.clone().unwrap_or_else(|| PathBuf::from("synthetic.pose"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let (frames, labels) = dataset_to_csv(&data);
        write(&out, &frames)?;
        let sidecar = out.with_extension("labels");
        write(&sidecar, &labels.unwrap_or_default())?;
        println!("labels: {}", sidecar.display());
    } else {
        save_poses(&out, &data)?;
    }
    print_dataset_summary(&out, &data);
    describe_laws(&spec.classes);
    Ok(())
}

fn print_dataset_summary(path: &Path, data: &Dataset) {
    println!(
        "wrote {}: {} sequences, {} classes, {} frames ({} joints, {}, {} Hz)",
        path.display(),
        data.len(),
        data.num_classes,
        data.total_frames(),
        data.skeleton.nodes,
        data.representation.name(),
        data.frame_rate
    );
}

fn describe_laws(laws: &[ClassLaw]) {
    for (i, l) in laws.iter().enumerate() {
        log::info!("class {i}: {:.3} Hz, amplitude {}, drift {:?}", l.frequency, l.amplitude, l.drift);
    }
}

// ---------------------------------------------------------------- train

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    csv: CsvFlags,
    #[command(flatten)]
    model: ModelFlags,
    /// Total optimisation steps (a resumed run continues up to this count).
    #[arg(long)]
    steps: Option<u64>,
    /// Linear warmup steps; defaults to a tenth of --steps, at most 200.
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight of the activity loss; 0 trains motion only.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Evaluate and checkpoint every this many steps (0: only at the end).
    #[arg(long)]
    eval_interval: Option<u64>,
    /// Fraction of sequences held out for evaluation.
    #[arg(long)]
    holdout: Option<f64>,
    /// Stride between training windows.
    #[arg(long)]
    stride: Option<usize>,
    /// Continue from this checkpoint, including its optimizer state.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn train_config(s: &Settings, a: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let total_steps = s.pick(a.steps, "total_steps", d.total_steps)?;
    let clip: f64 = s.pick(None, "clip_norm", d.clip_norm.unwrap_or(0.0))?;
    let tc = TrainConfig {
        total_steps,
        warmup_steps: s.pick(a.warmup, "warmup_steps", d.warmup_steps.min(total_steps / 10))?,
        batch_size: s.pick(a.batch_size, "batch_size", d.batch_size)?,
        lambda: s.pick(a.lambda, "lambda", d.lambda)?,
        seed,
        eval_interval: s.pick(a.eval_interval, "eval_interval", d.eval_interval)?,
        base_lr: s.pick(a.lr, "base_lr", d.base_lr)?,
        weight_decay: s.pick(a.weight_decay, "weight_decay", d.weight_decay)?,
        clip_norm: (clip > 0.0).then_some(clip),
        eval_limit: s.pick(None, "eval_limit", d.eval_limit)?,
    };
    tc.validate().map_err(|e| usage(e.to_string()))?;
    Ok(tc)
}

fn training_checkpoint(model: &PotrModel, stats: &potr::data::NormalizationStats, trainer: &Trainer) -> Checkpoint {
    let mut ckpt = checkpoint_with_stats(model, stats).with_meta("step", trainer.step());
    for (name, t) in trainer.optimizer().export(model.params()) {
        ckpt = ckpt.with_block(&name, t);
    }
    ckpt
}

/// Rows of an earlier log up to `step`, so a resumed run extends it.
fn previous_log(path: &Path, step: u64) -> Vec<String> {
    let Ok(text) = fs::read_to_string(path) else {
        return Vec::new();
    };
    text.lines()
        .skip(1)
        .filter(|l| l.split(',').next().and_then(|v| v.parse::<u64>().ok()).is_some_and(|s| s <= step))
        .map(str::to_string)
        .collect()
}

pub fn train(a: TrainArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let seed = s.pick(a.common.seed, "seed", 0)?;
    let tc = train_config(&s, &a, seed)?;
    let holdout = s.pick(a.holdout, "holdout", 0.2)?;
    if !(0.0..1.0).contains(&holdout) {
        return Err(usage("--holdout must be in [0, 1)"));
    }
    let stride = s.pick(a.stride, "window_stride", 5)?;
    let path = require(&a.common.data, "--data")?;
    let data = load_dataset(path, &csv_layout(&s, &a.csv, 5, Representation::Positions3d)?)?;
    let (train_set, test_set) = data.split(holdout);
    if train_set.is_empty() {
        bail!("no training sequences in {}", path.display());
    }

    let (mut model, stats, optimizer) = match &a.resume {
        Some(ckpt_path) => {
            let ckpt = Checkpoint::load(ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
            let f = Forecaster::from_checkpoint(&ckpt)?;
            if f.model.config().pose_dim != data.skeleton.pose_dim() {
                bail!("checkpoint pose dim {} does not match data pose dim {}", f.model.config().pose_dim, data.skeleton.pose_dim());
            }
            let opt = OptimizerState::import(tc.adamw(), f.model.params(), |n| ckpt.block(n).cloned());
            (f.model, f.stats, opt)
        }
        None => {
            let mut cfg = model_config(&s, &a.model, ModelConfig::default())?;
            cfg.pose_dim = data.skeleton.pose_dim();
            cfg.nodes = data.skeleton.nodes;
            cfg.num_classes = if data.has_labels() { data.num_classes } else { 0 };
            cfg.seed = seed;
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            (PotrModel::new(cfg)?, compute_stats(&train_set)?, OptimizerState::new(tc.adamw()))
        }
    };
    let cfg = model.config().clone();
    let windows = window_dataset(&normalize_sequences(&train_set.sequences, &stats)?, cfg.input_len, cfg.target_len, stride)?;
    if windows.is_empty() {
        bail!("no training sequence has the {} frames a window needs", cfg.input_len + cfg.target_len);
    }
    let eval_windows = window_dataset(&normalize_sequences(&test_set.sequences, &stats)?, cfg.input_len, cfg.target_len, stride)?;

    let out = out_dir(&a.common, "run")?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let log_path = out.join(LOG_FILE);
    let start = optimizer.step;
    let earlier = if a.resume.is_some() { previous_log(&log_path, start) } else { Vec::new() };
    let mut trainer = Trainer::resume(&mut model, tc, optimizer, train_set.has_labels())?;
    println!(
        "training {} windows ({} held out) from step {start} to {}; {}",
        windows.len(),
        eval_windows.len(),
        trainer.config().total_steps,
        potr::bench::config_summary(&cfg)
    );
    let log = trainer.run(&mut model, &windows, Some(&eval_windows), |t, m, row| {
        training_checkpoint(m, &stats, t).save(&ckpt_path)?;
        if let Some(e) = row.eval {
            let acc = e.accuracy.map(|v| format!(", accuracy {v:.3}")).unwrap_or_default();
            println!("step {}: loss {:.5}, held-out l1 {:.5}{acc}", row.step, row.loss_total, e.l1);
        }
        Ok(())
    })?;
    if log.rows.is_empty() {
        // Already at the requested step count; still leave a checkpoint behind.
        training_checkpoint(&model, &stats, &trainer).save(&ckpt_path)?;
    }
    write(&log_path, &merge_log(&earlier, &log))?;
    println!("wrote {} and {}", ckpt_path.display(), log_path.display());
    Ok(())
}

fn merge_log(earlier: &[String], log: &TrainingLog) -> String {
    let mut text = String::from(LOG_HEADER);
    text.push('\n');
    for l in earlier {
        text.push_str(l);
        text.push('\n');
    }
    for r in &log.rows {
        text.push_str(&r.to_csv_line());
        text.push('\n');
    }
    text
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    /// Euler error for rotations, MPJPE and mAP for positions.
    Auto,
    Euler,
    Mpjpe,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    csv: CsvFlags,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated horizons in milliseconds.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<f64>>,
    /// mAP distance threshold in the data's length unit.
    #[arg(long)]
    map_threshold: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    /// Score at most this many windows (0: all).
    #[arg(long)]
    max_windows: Option<usize>,
    #[arg(long, value_enum, default_value_t = MetricChoice::Auto)]
    metric: MetricChoice,
}

fn load_forecaster(path: &Path) -> Result<Forecaster> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Forecaster::from_checkpoint(&ckpt)?)
}

fn default_representation(cfg: &ModelConfig) -> Representation {
    if cfg.features_per_node() == 9 {
        Representation::RotationMatrices
    } else {
        Representation::Positions3d
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let forecaster = load_forecaster(&a.checkpoint)?;
    let cfg = forecaster.model.config().clone();
    let path = require(&a.common.data, "--data")?;
    let data = load_dataset(path, &csv_layout(&s, &a.csv, cfg.nodes, default_representation(&cfg))?)?;
    match (a.metric, data.representation) {
        (MetricChoice::Euler, Representation::Positions3d) => {
            bail!(potr::PotrError::Contract("Euler angle error needs rotation_matrices data, got positions_3d".into()))
        }
        (MetricChoice::Mpjpe, Representation::RotationMatrices) => {
            bail!(potr::PotrError::Contract("MPJPE needs positions_3d data, got rotation_matrices".into()))
        }
        _ => {}
    }
    let d = EvalOptions::default();
    let horizons = match a.horizons {
        Some(h) => h,
        None => match s.kv.get("horizons") {
            Some(raw) => raw
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| usage(format!("invalid horizons {raw:?}")))?,
            None => DEFAULT_HORIZONS_MS.to_vec(),
        },
    };
    let options = EvalOptions {
        horizons_ms: horizons,
        map_threshold: s.pick(a.map_threshold, "map_threshold", d.map_threshold)?,
        stride: s.pick(a.stride, "stride", d.stride)?,
        batch: d.batch,
        max_windows: s.pick(a.max_windows, "max_windows", d.max_windows)?,
    };
    let report = evaluate(&forecaster, &data, &options)?;
    let out = out_dir(&a.common, "eval")?;
    write(&out.join("report.csv"), &report.to_csv())?;
    write(&out.join("per_joint.csv"), &report.per_joint_csv())?;
    write(&out.join("summary.csv"), &report.summary_csv())?;
    print!("{}", report.to_csv());
    for (k, v) in &report.summary {
        println!("{k}: {v}");
    }
    println!("wrote report.csv, per_joint.csv, summary.csv to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------- predict

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    csv: CsvFlags,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Which sequence of --data to forecast from (its last T frames).
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Frames to predict; defaults to the trained T'. Longer horizons
    /// extrapolate past anything seen in training.
    #[arg(long)]
    target_len: Option<usize>,
    /// Use the step-by-step baseline decoder instead (no attention export).
    #[arg(long)]
    autoregressive: bool,
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let mut ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    if let Some(tq) = s.pick_opt(a.target_len, "target_len")? {
        if tq == 0 {
            return Err(usage("--target-len must be at least 1"));
        }
        ckpt.config.target_len = tq;
    }
    let forecaster = Forecaster::from_checkpoint(&ckpt)?;
    let cfg = forecaster.model.config().clone();
    let path = require(&a.common.data, "--data")?;
    let data = load_dataset(path, &csv_layout(&s, &a.csv, cfg.nodes, default_representation(&cfg))?)?;
    let seq = &data
        .sequences
        .get(a.index)
        .ok_or_else(|| usage(format!("--index {} out of range for {} sequences", a.index, data.len())))?
        .sequence;
    if seq.pose_dim() != cfg.pose_dim {
        bail!("data pose dim {} does not match the model's {}", seq.pose_dim(), cfg.pose_dim);
    }
    let out = out_dir(&a.common, "prediction")?;
    let (poses, logits) = if a.autoregressive {
        (forecaster.forecast_autoregressive(seq)?, None)
    } else {
        let f = forecaster.forecast(seq)?;
        let dir = out.join("attention");
        let files = export_attention(&f.prediction.attention, &dir)?;
        println!("wrote {} attention maps to {}", files.len(), dir.display());
        (f.poses, f.logits)
    };
    let mut single = Dataset::new(poses.skeleton, poses.representation, poses.frame_rate, 0);
    single.push(poses.clone(), None)?;
    save_poses(out.join("prediction.pose"), &single)?;
    write(&out.join("prediction.csv"), &sequence_to_csv(&poses))?;
    println!("predicted {} frames from the last {} of sequence {}", poses.len(), cfg.input_len, a.index);
    if let Some(l) = logits {
        println!("activity class {} (logits {:?})", argmax(&l), l);
    }
    println!("wrote prediction.pose and prediction.csv to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Nar,
    Ar,
    Both,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long, value_enum, default_value_t = ModeChoice::Both)]
    mode: ModeChoice,
    /// Timed repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// Untimed repetitions run first.
    #[arg(long)]
    warmup: Option<usize>,
    /// Sequences forecast per repetition.
    #[arg(long)]
    sequences: Option<usize>,
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let d = BenchOptions::default();
    let options = BenchOptions {
        reps: s.pick(a.reps, "reps", d.reps)?,
        warmup: s.pick(a.warmup, "warmup", d.warmup)?,
        sequences_per_rep: s.pick(a.sequences, "sequences", d.sequences_per_rep)?,
        seed: s.pick(a.common.seed, "seed", d.seed)?,
    };
    if options.reps == 0 || options.sequences_per_rep == 0 {
        return Err(usage("--reps and --sequences must be at least 1"));
    }
    let mut cfg = model_config(&s, &a.model, ModelConfig::default())?;
    cfg.seed = options.seed;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let model = PotrModel::new(cfg)?;
    let modes: &[BenchMode] = match a.mode {
        ModeChoice::Nar => &[BenchMode::Nar],
        ModeChoice::Ar => &[BenchMode::Ar],
        ModeChoice::Both => &[BenchMode::Nar, BenchMode::Ar],
    };
    let results: Vec<BenchResult> = modes.iter().map(|&m| run_bench(&model, m, &options)).collect::<potr::Result<_>>()?;
    for r in &results {
        println!("{r}");
    }
    if let [nar, ar] = &results[..] {
        println!("NAR/AR median speedup: {:.1}x", nar.median / ar.median);
    }
    if let Some(path) = &a.common.out {
        let mut text = String::from(BenchResult::csv_header());
        text.push('\n');
        for r in &results {
            text.push_str(&r.to_csv_line());
            text.push('\n');
        }
        write(path, &text)?;
    }
    Ok(())
}
