mod common;

use common::{random_tensor, randomize_pose_decoder, sequence, toy_config};
use potr::model::{
    attention_file_name, build_query_sequence, export_attention, matrix_from_csv, ActivitySource, Checkpoint, Codec, ModelConfig,
    PotrModel, CHECKPOINT_VERSION,
};
use potr::model::PoseEncoder;
use potr::nn::{AttentionKind, Ctx};
use potr::tensor::{Graph, HasParams, ParamStore, Tensor};
use potr::PotrError;
use rand::SeedableRng;

const CODECS: [Codec; 4] = [Codec::Linear, Codec::GcnEnc, Codec::GcnDec, Codec::GcnFull];

fn toy_input(seed: u64) -> potr::data::PoseSequence {
    sequence(random_tensor(seed, 3, 4, 1.0), 2)
}

#[test]
fn query_sequence_copies_last_frame() {
    let x = sequence(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap(), 1);
    let q = build_query_sequence(&x, 2).unwrap();
    assert_eq!(q.frames().data(), &[5.0, 6.0, 5.0, 6.0]);
    let q1 = build_query_sequence(&x, 1).unwrap();
    assert_eq!(q1.frames().data(), &[5.0, 6.0]);
    let q9 = build_query_sequence(&x, 9).unwrap();
    assert!((0..9).all(|t| q9.frame(t) == x.last_frame()));
    assert!(matches!(build_query_sequence(&x, 0), Err(PotrError::Contract(_))));
}

#[test]
fn linear_pose_embedding_examples() {
    let mut store = ParamStore::new();
    let enc = PoseEncoder::linear(&mut store, 2, 2, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
    let PoseEncoder::Linear(lin) = &enc else { unreachable!() };
    let run = |store: &ParamStore, p: [f64; 2]| {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 2, p.to_vec()).unwrap());
        let y = enc.forward(&mut g, store, x, &mut Ctx::eval()).unwrap();
        g.data(y).to_vec()
    };
    store.get_mut(lin.weight).data_mut().fill(0.0);
    assert_eq!(run(&store, [1.0, 2.0]), vec![0.0, 0.0]);
    store.get_mut(lin.weight).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(run(&store, [1.0, 2.0]), vec![1.0, 2.0]);
    store.get_mut(lin.weight).data_mut().fill(1.0);
    assert_eq!(run(&store, [1.0, 2.0]), vec![3.0, 3.0]);
}

#[test]
fn gcn_pose_embedding_of_zero_pose_is_zero() {
    let mut store = ParamStore::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let enc = PoseEncoder::gcn(&mut store, 3, 3, 16, 2, 10, 0.1, &mut rng);
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[4, 9]));
    let y = enc.forward(&mut g, &store, x, &mut Ctx::eval()).unwrap();
    assert_eq!(g.shape(y), &[4, 10]);
    assert!(g.data(y).iter().all(|&v| v == 0.0));
    let bad = g.constant(Tensor::zeros(&[1, 8]));
    assert!(enc.forward(&mut g, &store, bad, &mut Ctx::eval()).is_err());
}

#[test]
fn config_validation() {
    let ok = ModelConfig::default();
    assert!(ok.validate().is_ok());
    assert_eq!((ok.embed_dim, ok.layers, ok.heads, ok.gcn_node_features, ok.gcn_stages), (128, 4, 4, 512, 1));
    let bad_heads = ModelConfig { heads: 3, ..ModelConfig::default() };
    assert!(matches!(PotrModel::new(bad_heads), Err(PotrError::Config(_))));
    let bad_nodes = ModelConfig { codec: Codec::GcnFull, pose_dim: 16, nodes: 5, ..ModelConfig::default() };
    assert!(matches!(bad_nodes.validate(), Err(PotrError::Config(_))));
    let zero_len = ModelConfig { target_len: 0, ..ModelConfig::default() };
    assert!(zero_len.validate().is_err());
}

#[test]
fn config_key_value_round_trip() {
    let cfg = ModelConfig {
        codec: Codec::GcnDec,
        activity_source: ActivitySource::Memory,
        dropout: 0.25,
        share_pose_decoder: false,
        num_classes: 7,
        ..ModelConfig::default()
    };
    assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    assert!(ModelConfig::from_kv("layers=four").is_err());
    assert!(ModelConfig::from_kv("codec=conv").is_err());
    assert!(ModelConfig::from_kv("no equals sign").is_err());
}

#[test]
fn memory_length_follows_class_token() {
    for (classes, source, expected) in [(0, ActivitySource::ClassToken, 3), (2, ActivitySource::ClassToken, 4), (2, ActivitySource::Memory, 3)] {
        let cfg = ModelConfig { activity_source: source, ..toy_config(Codec::Linear, classes) };
        let model = PotrModel::new(cfg).unwrap();
        let mut g = Graph::new();
        let x = g.constant(toy_input(0).frames().clone());
        let enc = model.encode(&mut g, x, 1, &mut Ctx::eval()).unwrap();
        assert_eq!(g.shape(enc.memory), &[expected, 8]);
        assert_eq!(enc.class_embedding.map(|z| g.shape(z).to_vec()), (source == ActivitySource::ClassToken && classes > 0).then(|| vec![1, 8]));
    }
}

#[test]
fn encoder_rejects_wrong_lengths() {
    let model = PotrModel::new(toy_config(Codec::Linear, 0)).unwrap();
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[4, 4]));
    assert!(matches!(model.encode(&mut g, x, 1, &mut Ctx::eval()), Err(PotrError::Shape { .. })));
    let short = sequence(Tensor::zeros(&[2, 4]), 2);
    assert!(model.predict(&short).is_err());
}

#[test]
fn encoding_is_deterministic_and_position_aware() {
    let model = PotrModel::new(toy_config(Codec::GcnFull, 2)).unwrap();
    let x = random_tensor(4, 3, 4, 1.0);
    let swapped = Tensor::from_rows(&[x.row(1).to_vec(), x.row(0).to_vec(), x.row(2).to_vec()]).unwrap();
    let memory = |t: &Tensor| {
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        let e = model.encode(&mut g, v, 1, &mut Ctx::eval()).unwrap();
        g.data(e.memory).to_vec()
    };
    assert_eq!(memory(&x), memory(&x));
    assert_ne!(memory(&x), memory(&swapped));
}

#[test]
fn decoder_returns_every_layer_and_reads_memory() {
    let mut model = PotrModel::new(toy_config(Codec::Linear, 2)).unwrap();
    randomize_pose_decoder(&mut model, 9);
    let x = toy_input(1);
    let pred = model.predict(&x).unwrap();
    assert_eq!(pred.layers.len(), 2);
    assert!(pred.layers.iter().all(|l| l.shape() == [2, 4]));
    assert_eq!(pred.logits.as_ref().unwrap().len(), 2);
    let cross: Vec<_> = pred.attention.iter().filter(|m| m.kind == AttentionKind::EncoderDecoder).collect();
    assert_eq!(cross.len(), 2 * 2);
    assert!(cross.iter().all(|m| m.weights.shape() == [2, 4]));

    let mut g = Graph::new();
    let q = g.constant(model.query_stack(x.frames(), 1).unwrap());
    let live = g.constant(random_tensor(2, 4, 8, 1.0));
    let dead = g.constant(Tensor::zeros(&[4, 8]));
    let a = model.decode(&mut g, q, live, 1, None, &mut Ctx::eval()).unwrap();
    let b = model.decode(&mut g, q, dead, 1, None, &mut Ctx::eval()).unwrap();
    assert_eq!(a.len(), 2);
    assert_ne!(g.data(a[1]), g.data(b[1]));
}

#[test]
fn decoder_self_attention_is_unmasked() {
    let model = PotrModel::new(toy_config(Codec::Linear, 0)).unwrap();
    let mut g = Graph::new();
    let memory = g.constant(random_tensor(3, 3, 8, 1.0));
    let q1 = random_tensor(5, 2, 4, 1.0);
    let mut q2 = q1.clone();
    q2.data_mut()[4] += 0.5; // perturb only the second query step
    let (v1, v2) = (g.constant(q1), g.constant(q2));
    let a = model.decode(&mut g, v1, memory, 1, None, &mut Ctx::eval()).unwrap();
    let b = model.decode(&mut g, v2, memory, 1, None, &mut Ctx::eval()).unwrap();
    assert_ne!(g.value(a[1]).row(0), g.value(b[1]).row(0), "first step must see the second query");
}

#[test]
fn zero_pose_decoder_gives_zero_velocity_for_every_codec() {
    for codec in CODECS {
        for share in [true, false] {
            let cfg = ModelConfig { share_pose_decoder: share, ..toy_config(codec, 2) };
            let model = PotrModel::new(cfg).unwrap();
            let x = toy_input(7);
            let pred = model.predict(&x).unwrap();
            for layer in &pred.layers {
                for t in 0..2 {
                    assert_eq!(layer.row(t), x.last_frame(), "{codec:?}");
                }
            }
            let ar = model.predict_autoregressive(&x).unwrap();
            for t in 0..2 {
                assert_eq!(ar.frame(t), x.last_frame());
            }
        }
    }
}

#[test]
fn single_step_autoregressive_matches_parallel() {
    for codec in CODECS {
        let cfg = ModelConfig { target_len: 1, ..toy_config(codec, 2) };
        let mut model = PotrModel::new(cfg).unwrap();
        randomize_pose_decoder(&mut model, 4);
        let x = toy_input(2);
        let nar = model.predict(&x).unwrap();
        let ar = model.predict_autoregressive(&x).unwrap();
        assert_ne!(nar.final_layer().data(), x.last_frame());
        for (a, b) in ar.frames().data().iter().zip(nar.final_layer().data()) {
            assert!((a - b).abs() < 1e-12, "{codec:?}: {a} vs {b}");
        }
    }
}

#[test]
fn decoder_call_counts() {
    for tq in [1, 3, 6] {
        let model = PotrModel::new(ModelConfig { target_len: tq, ..toy_config(Codec::Linear, 0) }).unwrap();
        let x = toy_input(3);
        model.reset_decoder_calls();
        model.predict(&x).unwrap();
        assert_eq!(model.decoder_calls(), 1);
        model.reset_decoder_calls();
        model.predict_autoregressive(&x).unwrap();
        assert_eq!(model.decoder_calls(), tq);
    }
}

#[test]
fn logits_depend_on_input() {
    for source in [ActivitySource::ClassToken, ActivitySource::Memory] {
        let model = PotrModel::new(ModelConfig { activity_source: source, ..toy_config(Codec::Linear, 3) }).unwrap();
        let a = model.predict(&toy_input(1)).unwrap().logits.unwrap();
        let b = model.predict(&toy_input(2)).unwrap().logits.unwrap();
        assert_eq!(a.len(), 3);
        assert_ne!(a, b);
    }
}

#[test]
fn batched_forward_matches_single_sequences() {
    let mut model = PotrModel::new(toy_config(Codec::GcnFull, 2)).unwrap();
    randomize_pose_decoder(&mut model, 1);
    let (x1, x2) = (toy_input(10), toy_input(11));
    let stacked = Tensor::matrix(6, 4, [x1.frames().data(), x2.frames().data()].concat()).unwrap();
    let (pred, logits) = model.predict_batch(&stacked, 2).unwrap();
    let p1 = model.predict(&x1).unwrap();
    let p2 = model.predict(&x2).unwrap();
    let single = [p1.final_layer().data(), p2.final_layer().data()].concat();
    for (a, b) in pred.data().iter().zip(&single) {
        assert!((a - b).abs() < 1e-12);
    }
    let single_logits = [p1.logits.unwrap(), p2.logits.unwrap()].concat();
    for (a, b) in logits.unwrap().data().iter().zip(&single_logits) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn attention_export_files() {
    let model = PotrModel::new(toy_config(Codec::Linear, 2)).unwrap();
    let pred = model.predict(&toy_input(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = export_attention(&pred.attention, dir.path()).unwrap();
    // layers × heads × {encoder self, decoder self, encoder-decoder}
    assert_eq!(written.len(), 2 * 2 * 3);
    assert!(dir.path().join("attn_encdec_L1_H0.csv").exists());
    assert!(dir.path().join("attn_encoder_self_L0_H1.csv").exists());
    for map in &pred.attention {
        let text = std::fs::read_to_string(dir.path().join(attention_file_name(map))).unwrap();
        let parsed = matrix_from_csv(&text).unwrap();
        assert_eq!(parsed.shape(), map.weights.shape());
        for (a, b) in parsed.data().iter().zip(map.weights.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        for r in 0..parsed.rows() {
            assert!((parsed.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    assert!(matches!(export_attention(&[], dir.path()), Err(PotrError::Contract(_))));
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let mut model = PotrModel::new(toy_config(Codec::GcnFull, 2)).unwrap();
    randomize_pose_decoder(&mut model, 3);
    let ckpt = Checkpoint::from_model(&model).with_meta("step", 12).with_block("extra", Tensor::scalar(2.5));
    let bytes = ckpt.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.meta("step"), Some("12"));
    let restored = back.to_model().unwrap();
    let x = toy_input(6);
    assert_eq!(model.predict(&x).unwrap().final_layer(), restored.predict(&x).unwrap().final_layer());
    for id in model.params().ids() {
        assert_eq!(model.params().get(id).data(), restored.params().get(id).data());
    }

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(PotrError::Format { offset: 4, .. })));
    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&future), Err(PotrError::UnsupportedVersion { .. })));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(PotrError::Format { .. })));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.potr");
    ckpt.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
}

#[test]
fn shared_and_per_layer_pose_decoders() {
    let shared = PotrModel::new(toy_config(Codec::Linear, 0)).unwrap();
    let split = PotrModel::new(ModelConfig { share_pose_decoder: false, ..toy_config(Codec::Linear, 0) }).unwrap();
    assert_eq!(split.pose_decoder_output_params().len(), 2 * shared.pose_decoder_output_params().len());
}
