use super::rotation::{mat3_from_slice, rotmat_to_euler};
use crate::data::{PoseSequence, Representation};
use crate::error::{PotrError, Result};
use crate::model::build_query_sequence;

/// Frame count covering `ms` milliseconds: `round(ms · frame_rate / 1000)`,
/// at least one.
pub fn horizon_frames(ms: f64, frame_rate: f64) -> usize {
    ((ms * frame_rate / 1000.0).round() as usize).max(1)
}

fn check_pair(pred: &PoseSequence, gt: &PoseSequence, repr: Representation, metric: &str) -> Result<()> {
    if pred.representation != repr || gt.representation != repr {
        return Err(PotrError::contract(format!(
            "{metric} needs {} data, got {} and {}",
            repr.name(),
            pred.representation.name(),
            gt.representation.name()
        )));
    }
    if pred.skeleton.features_per_node != repr.features_per_node() || gt.skeleton.features_per_node != repr.features_per_node() {
        return Err(PotrError::contract(format!("{metric} needs {} features per joint", repr.features_per_node())));
    }
    if pred.len() != gt.len() || pred.pose_dim() != gt.pose_dim() {
        return Err(PotrError::shape("metric", pred.frames().shape(), gt.frames().shape()));
    }
    Ok(())
}

/// Concatenated Z-Y-X Euler angles of every joint in frame `t`.
pub fn frame_euler(seq: &PoseSequence, t: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(seq.skeleton.nodes * 3);
    for k in 0..seq.skeleton.nodes {
        let (a, b, c) = rotmat_to_euler(&mat3_from_slice(seq.node(t, k)))?;
        out.extend([a, b, c]);
    }
    Ok(out)
}

/// Per frame, Euclidean norm of the difference between the concatenated
/// Euler vectors of `pred` and `gt`.
pub fn euler_error_per_frame(pred: &PoseSequence, gt: &PoseSequence) -> Result<Vec<f64>> {
    check_pair(pred, gt, Representation::RotationMatrices, "euler_angle_error")?;
    (0..pred.len())
        .map(|t| {
            let (p, g) = (frame_euler(pred, t)?, frame_euler(gt, t)?);
            Ok(p.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .collect()
}

/// Euler angle error at each 1-based horizon frame.
pub fn euler_angle_error(pred: &PoseSequence, gt: &PoseSequence, horizons: &[usize]) -> Result<Vec<f64>> {
    let per_frame = euler_error_per_frame(pred, gt)?;
    pick_horizons(&per_frame, horizons)
}

pub(crate) fn pick_horizons(per_frame: &[f64], horizons: &[usize]) -> Result<Vec<f64>> {
    horizons
        .iter()
        .map(|&h| {
            if h == 0 || h > per_frame.len() {
                Err(PotrError::contract(format!("horizon {h} outside 1..={}", per_frame.len())))
            } else {
                Ok(per_frame[h - 1])
            }
        })
        .collect()
}

/// Distance between joint `k` of `pred` and `gt` at frame `t`.
fn joint_distance(pred: &PoseSequence, gt: &PoseSequence, t: usize, k: usize) -> f64 {
    pred.node(t, k)
        .iter()
        .zip(gt.node(t, k))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mpjpe {
    pub per_frame: Vec<f64>,
    pub mean: f64,
}

/// Mean per-joint position error per frame and overall.
pub fn mpjpe(pred: &PoseSequence, gt: &PoseSequence) -> Result<Mpjpe> {
    check_pair(pred, gt, Representation::Positions3d, "mpjpe")?;
    let k = pred.skeleton.nodes;
    let per_frame: Vec<f64> = (0..pred.len())
        .map(|t| (0..k).map(|j| joint_distance(pred, gt, t, j)).sum::<f64>() / k as f64)
        .collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(Mpjpe { per_frame, mean })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapScore {
    /// Fraction of all (joint, frame) pairs closer than the threshold.
    pub aggregate: f64,
    pub per_joint: Vec<f64>,
    pub per_frame: Vec<f64>,
}

/// Fraction of predicted joints strictly within `threshold` of the truth.
pub fn map_at_threshold(pred: &PoseSequence, gt: &PoseSequence, threshold: f64) -> Result<MapScore> {
    if !(threshold > 0.0) {
        return Err(PotrError::config(format!("threshold must be positive, got {threshold}")));
    }
    check_pair(pred, gt, Representation::Positions3d, "map_at_threshold")?;
    let (frames, k) = (pred.len(), pred.skeleton.nodes);
    let mut per_joint = vec![0.0; k];
    let mut per_frame = vec![0.0; frames];
    for t in 0..frames {
        for j in 0..k {
            if joint_distance(pred, gt, t, j) < threshold {
                per_joint[j] += 1.0;
                per_frame[t] += 1.0;
            }
        }
    }
    let aggregate = per_frame.iter().sum::<f64>() / (frames * k) as f64;
    per_joint.iter_mut().for_each(|v| *v /= frames as f64);
    per_frame.iter_mut().for_each(|v| *v /= k as f64);
    Ok(MapScore { aggregate, per_joint, per_frame })
}

/// Repeats the last observed pose `target_len` times.
pub fn zero_velocity_predict(x: &PoseSequence, target_len: usize) -> Result<PoseSequence> {
    build_query_sequence(x, target_len)
}

/// Mean absolute error per frame.
pub fn l1_per_frame(pred: &PoseSequence, gt: &PoseSequence) -> Result<Vec<f64>> {
    if pred.len() != gt.len() || pred.pose_dim() != gt.pose_dim() {
        return Err(PotrError::shape("l1", pred.frames().shape(), gt.frames().shape()));
    }
    Ok((0..pred.len())
        .map(|t| {
            let (p, g) = (pred.frame(t), gt.frame(t));
            p.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64
        })
        .collect())
}
