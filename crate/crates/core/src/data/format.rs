//! POSE binary container.
//!
//! ```text
//! magic             4 bytes "POSE"
//! version           u32     1
//! frame_rate        f64
//! representation    u8      0 = positions_3d, 1 = rotation_matrices
//! nodes K           u32
//! features_per_node u32
//! num_classes C     u32
//! sequence count    u64
//! per sequence:     u32 label (0xFFFF_FFFF = unlabelled), u64 T,
//!                   T × (K · features_per_node) f64 frames, row-major
//! ```
//!
//! Every field is little-endian.

use std::path::Path;

use super::{Dataset, PoseSequence, Representation, Skeleton};
use crate::binio::{put_f64s, put_u32, put_u64, Reader};
use crate::error::{PotrError, Result};
use crate::tensor::Tensor;

pub const POSE_MAGIC: &[u8; 4] = b"POSE";
pub const POSE_VERSION: u32 = 1;
const NO_LABEL: u32 = u32::MAX;

pub fn poses_to_bytes(dataset: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(POSE_MAGIC);
    put_u32(&mut out, POSE_VERSION);
    put_f64s(&mut out, &[dataset.frame_rate]);
    out.push(dataset.representation.tag());
    put_u32(&mut out, dataset.skeleton.nodes as u32);
    put_u32(&mut out, dataset.skeleton.features_per_node as u32);
    put_u32(&mut out, dataset.num_classes as u32);
    put_u64(&mut out, dataset.sequences.len() as u64);
    for s in &dataset.sequences {
        put_u32(&mut out, s.label.map_or(NO_LABEL, |l| l as u32));
        put_u64(&mut out, s.sequence.len() as u64);
        put_f64s(&mut out, s.sequence.frames().data());
    }
    out
}

pub fn poses_from_bytes(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf);
    if r.bytes(4, "magic")? != POSE_MAGIC {
        return r.fail("bad magic, not a POSE file");
    }
    let version = r.u32("version")?;
    if version != POSE_VERSION {
        return Err(PotrError::UnsupportedVersion { found: version, expected: POSE_VERSION });
    }
    let frame_rate = r.f64("frame rate")?;
    let tag = r.u8("representation")?;
    let Some(representation) = Representation::from_tag(tag) else {
        return r.fail(format!("unknown representation tag {tag}"));
    };
    let nodes = r.u32("node count")? as usize;
    let features = r.u32("features per node")? as usize;
    if nodes == 0 || features == 0 {
        return r.fail("skeleton dimensions must be positive");
    }
    let num_classes = r.u32("class count")? as usize;
    let count = r.u64("sequence count")?;
    let skeleton = Skeleton::new(nodes, features);
    let n = skeleton.pose_dim();
    let mut dataset = Dataset::new(skeleton, representation, frame_rate, num_classes);
    for _ in 0..count {
        let at = r.offset();
        let raw = r.u32("label")?;
        let label = (raw != NO_LABEL).then_some(raw as usize);
        if label.is_some_and(|l| l >= num_classes) {
            return Err(PotrError::Format { offset: at, message: format!("label {raw} out of range") });
        }
        let t = r.u64("sequence length")? as usize;
        if t == 0 {
            return r.fail("empty sequence");
        }
        let at = r.offset();
        let frames = r.f64s(t.saturating_mul(n), "frames")?;
        let frames = Tensor::matrix(t, n, frames)?;
        let seq = PoseSequence::new(frames, frame_rate, skeleton, representation)
            .map_err(|e| PotrError::Format { offset: at, message: e.to_string() })?;
        dataset.sequences.push(super::LabeledSequence { sequence: seq, label });
    }
    if !r.is_at_end() {
        return r.fail("trailing bytes after last sequence");
    }
    Ok(dataset)
}

pub fn save_poses(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    std::fs::write(path, poses_to_bytes(dataset))?;
    Ok(())
}

pub fn load_poses(path: impl AsRef<Path>) -> Result<Dataset> {
    poses_from_bytes(&std::fs::read(path)?)
}
