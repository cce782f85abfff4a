//! Plain-text pose import: one frame per line, comma-separated, sequences
//! separated by blank lines. Labels live in an optional sidecar with one
//! integer per sequence.

use std::path::Path;

use super::{Dataset, PoseSequence, Representation, Skeleton};
use crate::error::{PotrError, Result};
use crate::tensor::Tensor;

pub fn parse_csv_poses(
    frames_text: &str,
    labels_text: Option<&str>,
    skeleton: Skeleton,
    representation: Representation,
    frame_rate: f64,
) -> Result<Dataset> {
    let n = skeleton.pose_dim();
    let mut blocks: Vec<Vec<f64>> = vec![Vec::new()];
    for (i, line) in frames_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if !blocks.last().unwrap().is_empty() {
                blocks.push(Vec::new());
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| PotrError::Validation(format!("line {}: not a number list", i + 1)))?;
        if row.len() != n {
            return Err(PotrError::Validation(format!("line {}: expected {n} values, got {}", i + 1, row.len())));
        }
        blocks.last_mut().unwrap().extend(row);
    }
    if blocks.last().is_some_and(Vec::is_empty) {
        blocks.pop();
    }
    let labels: Option<Vec<usize>> = labels_text
        .map(|t| {
            t.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| l.parse::<usize>().map_err(|_| PotrError::Validation(format!("bad label {l:?}"))))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    if let Some(l) = &labels {
        if l.len() != blocks.len() {
            return Err(PotrError::Validation(format!("{} labels for {} sequences", l.len(), blocks.len())));
        }
    }
    let num_classes = labels.as_ref().and_then(|l| l.iter().max()).map_or(0, |m| m + 1);
    let mut dataset = Dataset::new(skeleton, representation, frame_rate, num_classes);
    for (i, data) in blocks.into_iter().enumerate() {
        let t = data.len() / n;
        let seq = PoseSequence::new(Tensor::matrix(t, n, data)?, frame_rate, skeleton, representation)?;
        dataset.push(seq, labels.as_ref().map(|l| l[i]))?;
    }
    Ok(dataset)
}

pub fn read_csv_poses(
    frames: impl AsRef<Path>,
    labels: Option<&Path>,
    skeleton: Skeleton,
    representation: Representation,
    frame_rate: f64,
) -> Result<Dataset> {
    let text = std::fs::read_to_string(frames)?;
    let labels = labels.map(std::fs::read_to_string).transpose()?;
    parse_csv_poses(&text, labels.as_deref(), skeleton, representation, frame_rate)
}

/// One line per frame, values in shortest round-trip form.
pub fn sequence_to_csv(seq: &PoseSequence) -> String {
    let mut out = String::new();
    for t in 0..seq.len() {
        let line: Vec<String> = seq.frame(t).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Frames text (sequences separated by blank lines) and, when every
/// sequence is labelled, the labels sidecar.
pub fn dataset_to_csv(dataset: &Dataset) -> (String, Option<String>) {
    let frames: Vec<String> = dataset.sequences.iter().map(|s| sequence_to_csv(&s.sequence)).collect();
    let labels = dataset
        .has_labels()
        .then(|| dataset.sequences.iter().map(|s| format!("{}\n", s.label.unwrap_or_default())).collect());
    (frames.join("\n"), labels)
}
