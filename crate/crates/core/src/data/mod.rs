//! Pose sequences, synthetic motion, preprocessing and the on-disk formats.

mod csv;
mod format;
mod pose;
mod stats;
mod synth;
mod window;

pub use csv::{dataset_to_csv, parse_csv_poses, read_csv_poses, sequence_to_csv};
pub use format::{load_poses, poses_from_bytes, poses_to_bytes, save_poses, POSE_MAGIC, POSE_VERSION};
pub use pose::{Dataset, LabeledSequence, PoseSequence, Representation, Skeleton};
pub use stats::{compute_stats, denormalize, normalize, NormalizationStats, STD_FLOOR};
pub use synth::{center_on_joint, generate_synthetic, ClassLaw, SyntheticSpec};
pub use window::{window_dataset, Window, WindowSet};
