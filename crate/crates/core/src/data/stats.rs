use super::Dataset;
use crate::error::{PotrError, Result};
use crate::tensor::Tensor;

/// Lower bound applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation of the training frames.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(dim: usize) -> Self {
        NormalizationStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Statistics over every frame of every sequence in `split`.
pub fn compute_stats(split: &Dataset) -> Result<NormalizationStats> {
    if split.is_empty() {
        return Err(PotrError::contract("cannot compute statistics of an empty split"));
    }
    let n = split.skeleton.pose_dim();
    let mut count = 0usize;
    let mut mean = vec![0.0; n];
    for s in &split.sequences {
        for row in s.sequence.frames().data().chunks(n) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
            count += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; n];
    for s in &split.sequences {
        for row in s.sequence.frames().data().chunks(n) {
            for j in 0..n {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
    }
    let std = var.iter().map(|v| (v / count as f64).sqrt().max(STD_FLOOR)).collect();
    Ok(NormalizationStats { mean, std })
}

/// `(x − mean) / std`, row by row.
pub fn normalize(x: &Tensor, stats: &NormalizationStats) -> Result<Tensor> {
    map_rows(x, stats, |v, m, s| (v - m) / s)
}

/// `x̂ · std + mean`, row by row.
pub fn denormalize(x: &Tensor, stats: &NormalizationStats) -> Result<Tensor> {
    map_rows(x, stats, |v, m, s| v * s + m)
}

fn map_rows(x: &Tensor, stats: &NormalizationStats, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
    let n = stats.dim();
    if x.cols() != n {
        return Err(PotrError::shape("normalize", x.shape(), &[n]));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(n) {
        for j in 0..n {
            row[j] = f(row[j], stats.mean[j], stats.std[j]);
        }
    }
    Ok(out)
}
