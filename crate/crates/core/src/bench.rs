//! Forward-pass throughput, non-autoregressive versus autoregressive.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PotrError, Result};
use crate::model::{ModelConfig, PotrModel};
use crate::nn::Ctx;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchMode {
    Nar,
    Ar,
}

impl BenchMode {
    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Nar => "nar",
            BenchMode::Ar => "ar",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nar" => Ok(BenchMode::Nar),
            "ar" => Ok(BenchMode::Ar),
            _ => Err(PotrError::config(format!("unknown bench mode {s:?} (expected nar or ar)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchOptions {
    pub reps: usize,
    pub warmup: usize,
    /// Single-sequence forward passes timed per repetition.
    pub sequences_per_rep: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { reps: 5, warmup: 1, sequences_per_rep: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub mode: BenchMode,
    pub config_summary: String,
    /// Sequences per second for each timed repetition.
    pub sps: Vec<f64>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub reps: usize,
    pub warmup: usize,
    /// Decoder-stack executions per sequence.
    pub decoder_calls_per_sequence: usize,
}

impl fmt::Display for BenchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mode={} {} reps={} warmup={} sps_min={:.3} sps_median={:.3} sps_max={:.3} decoder_calls_per_seq={}",
            self.mode.name(),
            self.config_summary,
            self.reps,
            self.warmup,
            self.min,
            self.median,
            self.max,
            self.decoder_calls_per_sequence
        )
    }
}

impl BenchResult {
    pub fn csv_header() -> &'static str {
        "mode,config,reps,warmup,sps_min,sps_median,sps_max,decoder_calls_per_seq"
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:?},{:?},{:?},{}",
            self.mode.name(),
            self.config_summary.replace(' ', ";"),
            self.reps,
            self.warmup,
            self.min,
            self.median,
            self.max,
            self.decoder_calls_per_sequence
        )
    }
}

pub fn config_summary(c: &ModelConfig) -> String {
    format!(
        "T={} T'={} L={} heads={} D={} codec={}",
        c.input_len,
        c.target_len,
        c.layers,
        c.heads,
        c.embed_dim,
        c.codec.name()
    )
}

/// Times forward passes with `std::time::Instant`.
#[cfg(not(target_arch = "wasm32"))]
pub fn run_bench(model: &PotrModel, mode: BenchMode, options: &BenchOptions) -> Result<BenchResult> {
    let start = std::time::Instant::now();
    run_bench_with_clock(model, mode, options, &mut || start.elapsed().as_secs_f64())
}

/// Times forward passes with a caller-supplied clock returning seconds.
/// Only the model calls sit between clock readings.
pub fn run_bench_with_clock(model: &PotrModel, mode: BenchMode, options: &BenchOptions, clock: &mut dyn FnMut() -> f64) -> Result<BenchResult> {
    if options.reps == 0 || options.sequences_per_rep == 0 {
        return Err(PotrError::config("bench needs at least one repetition and one sequence"));
    }
    let c = model.config();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let inputs: Vec<Tensor> = (0..options.sequences_per_rep)
        .map(|_| {
            let data = (0..c.input_len * c.pose_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            Tensor::matrix(c.input_len, c.pose_dim, data)
        })
        .collect::<Result<_>>()?;
    let run_once = |x: &Tensor| -> Result<()> {
        match mode {
            BenchMode::Nar => model.predict_batch(x, 1).map(|_| ()),
            BenchMode::Ar => model.predict_autoregressive_batch(x, 1, &mut Ctx::eval()).map(|_| ()),
        }
    };
    for _ in 0..options.warmup {
        for x in &inputs {
            run_once(x)?;
        }
    }
    model.reset_decoder_calls();
    let mut sps = Vec::with_capacity(options.reps);
    for _ in 0..options.reps {
        let t0 = clock();
        for x in &inputs {
            run_once(x)?;
        }
        let elapsed = (clock() - t0).max(1e-9);
        sps.push(inputs.len() as f64 / elapsed);
    }
    let calls = model.decoder_calls() / (options.reps * inputs.len());
    let mut sorted = sps.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchResult {
        mode,
        config_summary: config_summary(c),
        min: sorted[0],
        median: median_sorted(&sorted),
        max: sorted[sorted.len() - 1],
        sps,
        reps: options.reps,
        warmup: options.warmup,
        decoder_calls_per_sequence: calls,
    })
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
