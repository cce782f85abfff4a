use std::f64::consts::TAU;

use potr::data::{
    center_on_joint, compute_stats, denormalize, generate_synthetic, load_poses, normalize, parse_csv_poses, poses_from_bytes,
    poses_to_bytes, read_csv_poses, save_poses, window_dataset, ClassLaw, Dataset, PoseSequence, Representation, Skeleton,
    SyntheticSpec, STD_FLOOR,
};
use potr::metrics::{is_rotation, mat3_from_slice};
use potr::tensor::Tensor;
use potr::PotrError;

fn small_spec() -> SyntheticSpec {
    SyntheticSpec { per_class: 6, sequence_len: 30, ..SyntheticSpec::default() }
}

#[test]
fn synthetic_is_deterministic_per_seed() {
    let a = generate_synthetic(&small_spec()).unwrap();
    let b = generate_synthetic(&small_spec()).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(&SyntheticSpec { seed: 8, ..small_spec() }).unwrap();
    assert_ne!(a, c);
    assert_eq!(a.len(), 12);
    assert_eq!(a.sequences[0].label, Some(0));
    assert_eq!(a.sequences[11].label, Some(1));
    assert_eq!(a.sequences[0].sequence.frames().shape(), &[30, 15]);
}

#[test]
fn still_law_gives_constant_rest_pose() {
    let law = ClassLaw { frequency: 1.0, amplitude: 0.0, phase: 0.0, joint_phase: 0.0, drift: [0.0; 3] };
    let spec = SyntheticSpec { classes: vec![law], noise_sigma: 0.0, ..small_spec() };
    let data = generate_synthetic(&spec).unwrap();
    for s in &data.sequences {
        let first = s.sequence.frame(0).to_vec();
        for t in 0..s.sequence.len() {
            assert_eq!(s.sequence.frame(t), &first[..]);
        }
    }
}

#[test]
fn rotation_synthetic_yields_rotations() {
    let spec = SyntheticSpec { representation: Representation::RotationMatrices, ..small_spec() };
    let data = generate_synthetic(&spec).unwrap();
    assert_eq!(data.skeleton, Skeleton::new(5, 9));
    let seq = &data.sequences[3].sequence;
    for t in 0..seq.len() {
        for k in 0..5 {
            assert!(is_rotation(&mat3_from_slice(seq.node(t, k)), 1e-9));
        }
    }
}

#[test]
fn invalid_spec_is_a_config_error() {
    let none = SyntheticSpec { classes: vec![], ..small_spec() };
    assert!(matches!(generate_synthetic(&none), Err(PotrError::Config(_))));
    let neg = SyntheticSpec { noise_sigma: -1.0, ..small_spec() };
    assert!(matches!(generate_synthetic(&neg), Err(PotrError::Config(_))));
}

/// Dominant frequency (in Hz) of a detrended signal, by brute DFT over a grid.
fn dominant_frequency(signal: &[f64], rate: f64) -> f64 {
    let n = signal.len() as f64;
    let slope = (signal[signal.len() - 1] - signal[0]) / (n - 1.0);
    let detrended: Vec<f64> = signal.iter().enumerate().map(|(i, v)| v - slope * i as f64).collect();
    let mean = detrended.iter().sum::<f64>() / n;
    let mut best = (0.0, 0.0);
    for step in 1..=60 {
        let f = step as f64 * 0.05;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in detrended.iter().enumerate() {
            let arg = TAU * f * i as f64 / rate;
            re += (v - mean) * arg.cos();
            im += (v - mean) * arg.sin();
        }
        let power = re * re + im * im;
        if power > best.1 {
            best = (f, power);
        }
    }
    best.0
}

#[test]
fn classes_are_separable_by_frequency_probe() {
    let spec = SyntheticSpec { per_class: 30, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec).unwrap();
    // Default laws run at 0.5 and 2 Hz, so a 1.25 Hz cut separates them.
    let mut correct = 0;
    for s in &data.sequences {
        let signal: Vec<f64> = (0..s.sequence.len()).map(|t| s.sequence.node(t, 1)[0]).collect();
        let predicted = usize::from(dominant_frequency(&signal, spec.frame_rate) > 1.25);
        correct += usize::from(Some(predicted) == s.label);
    }
    assert_eq!(correct, data.len());
}

#[test]
fn normalization_standardizes_training_frames() {
    let data = generate_synthetic(&small_spec()).unwrap();
    let stats = compute_stats(&data).unwrap();
    let all: Vec<Vec<f64>> = data.sequences.iter().flat_map(|s| (0..s.sequence.len()).map(move |t| s.sequence.frame(t).to_vec())).collect();
    let x = Tensor::from_rows(&all).unwrap();
    let z = normalize(&x, &stats).unwrap();
    let n = z.cols();
    for j in 0..n {
        let col: Vec<f64> = (0..z.rows()).map(|r| z.get(r, j)).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-9, "std {}", var.sqrt());
    }
    let back = denormalize(&z, &stats).unwrap();
    for (a, b) in back.data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn constant_dimension_gets_floored_std() {
    let skel = Skeleton::new(1, 3);
    let mut data = Dataset::new(skel, Representation::Positions3d, 30.0, 0);
    let seq = PoseSequence::from_frames(&[vec![1.0, 2.0, 5.0], vec![3.0, 2.0, 5.0]], 30.0, skel, Representation::Positions3d).unwrap();
    data.push(seq, None).unwrap();
    let stats = compute_stats(&data).unwrap();
    assert_eq!(stats.mean, vec![2.0, 2.0, 5.0]);
    assert_eq!(stats.std, vec![1.0, STD_FLOOR, STD_FLOOR]);
    let z = normalize(&Tensor::from_rows(&[vec![2.0, 2.0, 5.0]]).unwrap(), &stats).unwrap();
    assert!(z.is_finite());
    assert!(normalize(&Tensor::zeros(&[1, 2]), &stats).is_err());
}

#[test]
fn empty_split_stats_is_a_contract_error() {
    let data = Dataset::new(Skeleton::new(1, 3), Representation::Positions3d, 30.0, 0);
    assert!(matches!(compute_stats(&data), Err(PotrError::Contract(_))));
}

#[test]
fn centering_subtracts_root_joint() {
    let skel = Skeleton::new(2, 3);
    let seq = PoseSequence::from_frames(&[vec![1.0, 2.0, 3.0, 4.0, 6.0, 8.0]], 30.0, skel, Representation::Positions3d).unwrap();
    let c = center_on_joint(&seq, 0).unwrap();
    assert_eq!(c.frame(0), &[0.0, 0.0, 0.0, 3.0, 4.0, 5.0]);
    assert!(matches!(center_on_joint(&seq, 2), Err(PotrError::Contract(_))));
    let rot = generate_synthetic(&SyntheticSpec { representation: Representation::RotationMatrices, ..small_spec() }).unwrap();
    assert!(center_on_joint(&rot.sequences[0].sequence, 0).is_err());
}

#[test]
fn window_arithmetic() {
    let skel = Skeleton::new(1, 3);
    let frames: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64; 3]).collect();
    let mut data = Dataset::new(skel, Representation::Positions3d, 30.0, 1);
    data.push(PoseSequence::from_frames(&frames, 30.0, skel, Representation::Positions3d).unwrap(), Some(0)).unwrap();
    data.push(PoseSequence::from_frames(&frames[..4], 30.0, skel, Representation::Positions3d).unwrap(), Some(0)).unwrap();
    // (10 − 5) / 2 + 1 = 3 windows from the long sequence; the short one is skipped.
    let set = window_dataset(&data.sequences, 3, 2, 2).unwrap();
    assert_eq!(set.len(), 3);
    assert_eq!(set.skipped, 1);
    let w = &set.windows[1];
    assert_eq!(w.start, 2);
    assert_eq!(w.input.row(0), &[2.0; 3]);
    assert_eq!(w.input.row(2), &[4.0; 3]);
    assert_eq!(w.target.row(0), &[5.0; 3]);
    assert_eq!(w.label, Some(0));
    assert_eq!(window_dataset(&data.sequences, 3, 2, 1).unwrap().len(), 6);
    assert!(matches!(window_dataset(&data.sequences, 0, 2, 1), Err(PotrError::Config(_))));
}

#[test]
fn split_is_deterministic() {
    let data = generate_synthetic(&small_spec()).unwrap();
    let (train, test) = data.split(0.25);
    assert_eq!(test.len(), 3);
    assert_eq!(train.len() + test.len(), data.len());
    assert_eq!(test.sequences[0], data.sequences[3]);
}

#[test]
fn pose_file_round_trip_is_bitwise() {
    let mut data = generate_synthetic(&small_spec()).unwrap();
    data.sequences[1].label = None;
    let bytes = poses_to_bytes(&data);
    assert_eq!(&bytes[..4], b"POSE");
    let back = poses_from_bytes(&bytes).unwrap();
    assert_eq!(back, data);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.pose");
    save_poses(&path, &data).unwrap();
    assert_eq!(load_poses(&path).unwrap(), data);
}

#[test]
fn pose_file_errors() {
    let data = generate_synthetic(&small_spec()).unwrap();
    let bytes = poses_to_bytes(&data);
    assert!(matches!(poses_from_bytes(&bytes[..bytes.len() - 3]), Err(PotrError::Format { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(poses_from_bytes(&bad), Err(PotrError::Format { offset: 4, .. })));
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(poses_from_bytes(&v2), Err(PotrError::UnsupportedVersion { found: 2, expected: 1 })));
    let mut trailing = bytes;
    trailing.push(0);
    assert!(poses_from_bytes(&trailing).is_err());
    assert!(matches!(load_poses("/nonexistent/x.pose"), Err(PotrError::Io(_))));
}

#[test]
fn csv_import_splits_on_blank_lines() {
    let text = "0,0,0\n1,1,1\n\n\n2,2,2\n3,3,3\n4,4,4\n";
    let skel = Skeleton::new(1, 3);
    let data = parse_csv_poses(text, Some("1\n0\n"), skel, Representation::Positions3d, 25.0).unwrap();
    assert_eq!(data.len(), 2);
    assert_eq!(data.num_classes, 2);
    assert_eq!(data.sequences[1].sequence.len(), 3);
    assert_eq!(data.sequences[1].sequence.frame(2), &[4.0; 3]);
    assert_eq!(data.sequences[0].label, Some(1));
    let unlabeled = parse_csv_poses(text, None, skel, Representation::Positions3d, 25.0).unwrap();
    assert!(!unlabeled.has_labels());
}

#[test]
fn csv_import_errors() {
    let skel = Skeleton::new(1, 3);
    let repr = Representation::Positions3d;
    assert!(matches!(parse_csv_poses("1,2\n", None, skel, repr, 25.0), Err(PotrError::Validation(_))));
    assert!(matches!(parse_csv_poses("1,x,3\n", None, skel, repr, 25.0), Err(PotrError::Validation(_))));
    assert!(matches!(parse_csv_poses("1,2,3\n", Some("0\n1\n"), skel, repr, 25.0), Err(PotrError::Validation(_))));
}

#[test]
fn csv_file_import() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("f.csv");
    let labels = dir.path().join("l.txt");
    std::fs::write(&frames, "0,0,0\n1,1,1\n").unwrap();
    std::fs::write(&labels, "0\n").unwrap();
    let data = read_csv_poses(&frames, Some(&labels), Skeleton::new(1, 3), Representation::Positions3d, 30.0).unwrap();
    assert_eq!(data.len(), 1);
    assert!(data.has_labels());
}

#[test]
fn csv_export_round_trips() {
    let data = generate_synthetic(&small_spec()).unwrap();
    let (frames, labels) = potr::data::dataset_to_csv(&data);
    let back = parse_csv_poses(&frames, labels.as_deref(), data.skeleton, data.representation, data.frame_rate).unwrap();
    assert_eq!(back, data);
}
