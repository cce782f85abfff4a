use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, PoseSequence, Representation, Skeleton};
use crate::error::{PotrError, Result};
use crate::metrics::euler_zyx_to_rotmat;
use crate::tensor::Tensor;

/// Motion law of one activity class.
///
/// Coordinate `a` of joint `k` follows
/// `rest + amplitude·w(k,a)·sin(2π·frequency·t + phase + k·joint_phase + a·π/3) + drift[a]·t`,
/// with `w(k,a) = 1 / (1 + (k + a) mod 3)`. For rotation data the same law
/// drives the joint's Z-Y-X Euler angles.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassLaw {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub joint_phase: f64,
    pub drift: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub joints: usize,
    pub representation: Representation,
    pub classes: Vec<ClassLaw>,
    pub noise_sigma: f64,
    pub frame_rate: f64,
    pub sequence_len: usize,
    pub per_class: usize,
    /// Randomise each sequence's phase (uniform) and amplitude (±10 %).
    pub jitter: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            joints: 5,
            representation: Representation::Positions3d,
            classes: SyntheticSpec::default_laws(2),
            noise_sigma: 0.002,
            frame_rate: 30.0,
            sequence_len: 90,
            per_class: 500,
            jitter: true,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// `count` laws with frequencies spread geometrically over 0.5–2 Hz and
    /// distinct drift velocities, so every pair of classes is separable.
    pub fn default_laws(count: usize) -> Vec<ClassLaw> {
        (0..count)
            .map(|i| {
                let frac = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
                let centered = i as f64 - (count as f64 - 1.0) / 2.0;
                ClassLaw {
                    frequency: 0.5 * 4f64.powf(frac),
                    amplitude: 0.1,
                    phase: 0.0,
                    joint_phase: 0.4,
                    drift: [0.05 * centered, 0.0, 0.02 * centered],
                }
            })
            .collect()
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton::new(self.joints, self.representation.features_per_node())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(PotrError::config("at least one class is required"));
        }
        if self.joints == 0 || self.sequence_len == 0 || self.frame_rate <= 0.0 {
            return Err(PotrError::config("joints, sequence length and frame rate must be positive"));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(PotrError::config("noise sigma must be finite and non-negative"));
        }
        for law in &self.classes {
            let vals = [law.frequency, law.amplitude, law.phase, law.joint_phase];
            if vals.iter().chain(&law.drift).any(|v| !v.is_finite()) {
                return Err(PotrError::config("class laws must be finite"));
            }
        }
        Ok(())
    }
}

fn rest_position(k: usize) -> [f64; 3] {
    [0.15 * (k % 2) as f64, 0.2 * k as f64, 0.05 * (k % 3) as f64]
}

fn rest_angles(k: usize) -> [f64; 3] {
    [0.1 * k as f64, 0.05 * (k % 3) as f64, -0.1 * (k % 2) as f64]
}

/// Generates `per_class` labelled sequences per class, class-major order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let skeleton = spec.skeleton();
    let mut dataset = Dataset::new(skeleton, spec.representation, spec.frame_rate, spec.classes.len());
    for (label, law) in spec.classes.iter().enumerate() {
        for _ in 0..spec.per_class {
            let (phase, scale) = if spec.jitter {
                (rng.gen_range(0.0..TAU), rng.gen_range(0.9..1.1))
            } else {
                (0.0, 1.0)
            };
            let mut data = Vec::with_capacity(spec.sequence_len * skeleton.pose_dim());
            for step in 0..spec.sequence_len {
                let t = step as f64 / spec.frame_rate;
                for k in 0..spec.joints {
                    let mut coords = [0.0; 3];
                    let rest = match spec.representation {
                        Representation::Positions3d => rest_position(k),
                        Representation::RotationMatrices => rest_angles(k),
                    };
                    for a in 0..3 {
                        let w = 1.0 / (1 + (k + a) % 3) as f64;
                        let arg = TAU * law.frequency * t + law.phase + phase + k as f64 * law.joint_phase + a as f64 * PI / 3.0;
                        coords[a] = rest[a] + law.amplitude * scale * w * arg.sin() + law.drift[a] * t;
                        if spec.noise_sigma > 0.0 {
                            coords[a] += noise.sample(&mut rng);
                        }
                    }
                    match spec.representation {
                        Representation::Positions3d => data.extend_from_slice(&coords),
                        Representation::RotationMatrices => {
                            let limit = PI / 2.0 - 0.1;
                            let beta = coords[1].clamp(-limit, limit);
                            let r = euler_zyx_to_rotmat(coords[0], beta, coords[2]);
                            data.extend(r.iter().flatten());
                        }
                    }
                }
            }
            let frames = Tensor::matrix(spec.sequence_len, skeleton.pose_dim(), data)?;
            let seq = PoseSequence::new(frames, spec.frame_rate, skeleton, spec.representation)?;
            dataset.push(seq, Some(label))?;
        }
    }
    Ok(dataset)
}

/// Subtracts joint `joint`'s position from every joint, frame by frame.
pub fn center_on_joint(x: &PoseSequence, joint: usize) -> Result<PoseSequence> {
    if x.representation != Representation::Positions3d {
        return Err(PotrError::contract("centering requires positions_3d data"));
    }
    if joint >= x.skeleton.nodes {
        return Err(PotrError::contract(format!("joint {joint} out of range for {} joints", x.skeleton.nodes)));
    }
    let n = x.pose_dim();
    let mut frames = x.frames().clone();
    for row in frames.data_mut().chunks_mut(n) {
        let origin = [row[joint * 3], row[joint * 3 + 1], row[joint * 3 + 2]];
        for (i, v) in row.iter_mut().enumerate() {
            *v -= origin[i % 3];
        }
    }
    x.with_frames(frames)
}
