//! Evaluation metrics: Euler angle error, MPJPE, mAP at a distance
//! threshold, classification accuracy, and the zero-velocity reference.

mod classification;
mod pose;
mod report;
mod rotation;

pub use classification::{argmax, classification_accuracy};
pub use pose::{
    euler_angle_error, euler_error_per_frame, frame_euler, horizon_frames, l1_per_frame, map_at_threshold, mpjpe,
    zero_velocity_predict, MapScore, Mpjpe,
};
pub use report::{EvalReport, JointRow, MetricRow, DEFAULT_HORIZONS_MS};
pub use rotation::{euler_zyx_to_rotmat, is_rotation, mat3_from_slice, orthonormalize, rotmat_to_euler, Mat3};
