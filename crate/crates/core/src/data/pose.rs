use crate::error::{PotrError, Result};
use crate::tensor::Tensor;

/// How each node's features encode the body.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// Three coordinates per joint.
    Positions3d,
    /// A row-major 3×3 rotation matrix per joint.
    RotationMatrices,
}

impl Representation {
    pub fn tag(self) -> u8 {
        match self {
            Representation::Positions3d => 0,
            Representation::RotationMatrices => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Representation::Positions3d),
            1 => Some(Representation::RotationMatrices),
            _ => None,
        }
    }

    pub fn features_per_node(self) -> usize {
        match self {
            Representation::Positions3d => 3,
            Representation::RotationMatrices => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Positions3d => "positions_3d",
            Representation::RotationMatrices => "rotation_matrices",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "positions_3d" | "positions" => Ok(Representation::Positions3d),
            "rotation_matrices" | "rotations" => Ok(Representation::RotationMatrices),
            other => Err(PotrError::config(format!("unknown representation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Skeleton {
    pub nodes: usize,
    pub features_per_node: usize,
}

impl Skeleton {
    pub fn new(nodes: usize, features_per_node: usize) -> Self {
        Skeleton { nodes, features_per_node }
    }

    pub fn pose_dim(&self) -> usize {
        self.nodes * self.features_per_node
    }
}

/// Time-ordered `T × N` pose matrix plus skeleton metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    frames: Tensor,
    pub frame_rate: f64,
    pub skeleton: Skeleton,
    pub representation: Representation,
}

impl PoseSequence {
    pub fn new(frames: Tensor, frame_rate: f64, skeleton: Skeleton, representation: Representation) -> Result<Self> {
        if frames.shape().len() != 2 || frames.cols() != skeleton.pose_dim() {
            return Err(PotrError::shape("pose_sequence", frames.shape(), &[skeleton.nodes, skeleton.features_per_node]));
        }
        if !frames.is_finite() {
            return Err(PotrError::Validation("pose sequence contains non-finite values".into()));
        }
        Ok(PoseSequence {
            frames,
            frame_rate,
            skeleton,
            representation,
        })
    }

    pub fn from_frames(frames: &[Vec<f64>], frame_rate: f64, skeleton: Skeleton, representation: Representation) -> Result<Self> {
        PoseSequence::new(Tensor::from_rows(frames)?, frame_rate, skeleton, representation)
    }

    /// Same metadata, new frames.
    pub fn with_frames(&self, frames: Tensor) -> Result<Self> {
        PoseSequence::new(frames, self.frame_rate, self.skeleton, self.representation)
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pose_dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.frames.row(t)
    }

    pub fn last_frame(&self) -> &[f64] {
        self.frame(self.len() - 1)
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(PotrError::contract(format!(
                "window {start}..{} outside sequence of length {}",
                start + len,
                self.len()
            )));
        }
        let n = self.pose_dim();
        let data = self.frames.data()[start * n..(start + len) * n].to_vec();
        self.with_frames(Tensor::matrix(len, n, data)?)
    }

    /// Coordinates of node `k` in frame `t`.
    pub fn node(&self, t: usize, k: usize) -> &[f64] {
        let f = self.skeleton.features_per_node;
        &self.frame(t)[k * f..(k + 1) * f]
    }
}

/// A pose sequence with an optional activity label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub sequence: PoseSequence,
    pub label: Option<usize>,
}

/// A collection of sequences sharing skeleton, representation, and frame rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub skeleton: Skeleton,
    pub representation: Representation,
    pub frame_rate: f64,
    pub num_classes: usize,
    pub sequences: Vec<LabeledSequence>,
}

impl Dataset {
    pub fn new(skeleton: Skeleton, representation: Representation, frame_rate: f64, num_classes: usize) -> Self {
        Dataset {
            skeleton,
            representation,
            frame_rate,
            num_classes,
            sequences: Vec::new(),
        }
    }

    pub fn push(&mut self, sequence: PoseSequence, label: Option<usize>) -> Result<()> {
        if sequence.skeleton != self.skeleton || sequence.representation != self.representation {
            return Err(PotrError::contract("sequence metadata does not match dataset"));
        }
        if let Some(l) = label {
            if l >= self.num_classes {
                return Err(PotrError::contract(format!("label {l} out of range for {} classes", self.num_classes)));
            }
        }
        self.sequences.push(LabeledSequence { sequence, label });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.num_classes > 0 && self.sequences.iter().all(|s| s.label.is_some())
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.sequence.len()).sum()
    }

    /// Deterministic split: every `k`-th sequence (k = round(1/fraction))
    /// goes to the held-out part.
    pub fn split(&self, holdout_fraction: f64) -> (Dataset, Dataset) {
        let mut train = Dataset { sequences: Vec::new(), ..self.clone_meta() };
        let mut test = Dataset { sequences: Vec::new(), ..self.clone_meta() };
        let every = if holdout_fraction <= 0.0 { usize::MAX } else { (1.0 / holdout_fraction).round().max(1.0) as usize };
        for (i, s) in self.sequences.iter().enumerate() {
            if every != usize::MAX && i % every == every - 1 {
                test.sequences.push(s.clone());
            } else {
                train.sequences.push(s.clone());
            }
        }
        (train, test)
    }

    fn clone_meta(&self) -> Dataset {
        Dataset::new(self.skeleton, self.representation, self.frame_rate, self.num_classes)
    }
}
