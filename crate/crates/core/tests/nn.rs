use approx::assert_abs_diff_eq;
use potr::nn::{
    causal_mask, dropout, gcn_layer, multi_head_attention, positional_encoding_table, Activation, BatchNorm, Ctx, FeedForward,
    GcnLayer, LayerNorm, Linear, MultiHeadAttention,
};
use potr::tensor::{finite_diff_check, Graph, ParamStore, Tensor};
use potr::PotrError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn attention_with_ones(dim: usize) -> (ParamStore, MultiHeadAttention) {
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", dim, 1, &mut rng(0)).unwrap();
    for id in mha.params() {
        store.get_mut(id).data_mut().fill(1.0);
    }
    (store, mha)
}

#[test]
fn attention_single_key_has_unit_weight() {
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng(1)).unwrap();
    let mut g = Graph::new();
    let q = g.constant(random_matrix(&mut rng(2), 3, 4));
    let k = g.constant(random_matrix(&mut rng(3), 1, 4));
    let (_, maps) = multi_head_attention(&mut g, &store, &mha, q, k, k, None).unwrap();
    assert_eq!(maps.len(), 2);
    for m in &maps {
        assert!(m.weights.data().iter().all(|&w| w == 1.0));
    }
}

#[test]
fn attention_identical_keys_give_uniform_weights() {
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng(1)).unwrap();
    let mut g = Graph::new();
    let q = g.constant(random_matrix(&mut rng(2), 3, 4));
    let row = random_matrix(&mut rng(3), 1, 4);
    let k = g.constant(Tensor::matrix(5, 4, row.data().repeat(5)).unwrap());
    let (_, maps) = multi_head_attention(&mut g, &store, &mha, q, k, k, None).unwrap();
    for m in &maps {
        for &w in m.weights.data() {
            assert_abs_diff_eq!(w, 0.2, epsilon = 1e-15);
        }
    }
}

#[test]
fn attention_hand_example() {
    // All-ones projections: q = k = v = row sum in both channels.
    let (store, mha) = attention_with_ones(2);
    let mut g = Graph::new();
    let q = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
    let kv = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap());
    let (out, _) = multi_head_attention(&mut g, &store, &mha, q, kv, kv, None).unwrap();
    // Row 0 scores: [2, 4] / sqrt(2); row 1 scores are zero.
    let s = 2f64.sqrt();
    let w2 = s.exp() / (1.0 + s.exp());
    let expected = [2.0 * (1.0 + w2), 2.0 * (1.0 + w2), 3.0, 3.0];
    for (a, b) in g.data(out).iter().zip(expected) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
    }
}

#[test]
fn attention_mask_shape_is_checked() {
    let (store, mha) = attention_with_ones(2);
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[3, 2]));
    let bad = vec![false; 4];
    assert!(matches!(
        multi_head_attention(&mut g, &store, &mha, x, x, x, Some(&bad)),
        Err(PotrError::Shape { .. })
    ));
}

#[test]
fn heads_must_divide_dimension() {
    let mut store = ParamStore::new();
    assert!(matches!(MultiHeadAttention::new(&mut store, "m", 6, 4, &mut rng(0)), Err(PotrError::Config(_))));
}

#[test]
fn causal_mask_blocks_future_keys() {
    let m = causal_mask(3);
    assert_eq!(m, vec![false, true, true, false, false, true, false, false, false]);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng(5)).unwrap();
    let mut g = Graph::new();
    let x = g.constant(random_matrix(&mut rng(6), 3, 4));
    let (_, maps) = multi_head_attention(&mut g, &store, &mha, x, x, x, Some(&m)).unwrap();
    for map in maps {
        for i in 0..3 {
            let row = map.weights.row(i);
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(row[i + 1..].iter().sum::<f64>() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn attention_is_permutation_equivariant_in_queries(seed in 0u64..1000) {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut r).unwrap();
        let q = random_matrix(&mut r, 4, 4);
        let kv = random_matrix(&mut r, 3, 4);
        let perm = [2usize, 0, 3, 1];
        let permuted = Tensor::matrix(4, 4, perm.iter().flat_map(|&p| q.row(p).to_vec()).collect()).unwrap();
        let mut g = Graph::new();
        let (qv, pv, kvv) = (g.constant(q), g.constant(permuted), g.constant(kv));
        let (a, maps) = multi_head_attention(&mut g, &store, &mha, qv, kvv, kvv, None).unwrap();
        let (b, _) = multi_head_attention(&mut g, &store, &mha, pv, kvv, kvv, None).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for (x, y) in g.value(b).row(i).iter().zip(g.value(a).row(p)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
        for m in maps {
            for i in 0..4 {
                prop_assert!((m.weights.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gcn_layer_matches_triple_loop(k in 1usize..=5, fin in 1usize..=4, fout in 1usize..=4, seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (a, h, w) = (random_matrix(&mut r, k, k), random_matrix(&mut r, k, fin), random_matrix(&mut r, fin, fout));
        let mut g = Graph::new();
        let (av, hv, wv) = (g.constant(a.clone()), g.constant(h.clone()), g.constant(w.clone()));
        let out = gcn_layer(&mut g, av, hv, wv, Activation::Identity).unwrap();
        for i in 0..k {
            for j in 0..fout {
                let mut expected = 0.0;
                for m in 0..k {
                    for p in 0..fin {
                        expected += a.get(i, m) * h.get(m, p) * w.get(p, j);
                    }
                }
                prop_assert!((g.value(out).get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_standardises_rows(seed in 0u64..10_000) {
        let mut r = rng(seed);
        // Scaled so every row's variance dwarfs the 1e-5 epsilon.
        let x = random_matrix(&mut r, 3, 6);
        let x = Tensor::matrix(3, 6, x.data().iter().map(|v| 10.0 * v).collect()).unwrap();
        for i in 0..3 {
            let row = x.row(i);
            let m = row.iter().sum::<f64>() / 6.0;
            prop_assume!(row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 6.0 > 1.0);
        }
        let mut store = ParamStore::new();
        let ln = LayerNorm::new(&mut store, "ln", 6);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = ln.forward(&mut g, &store, xv).unwrap();
        for i in 0..3 {
            let row = g.value(y).row(i);
            let mean = row.iter().sum::<f64>() / 6.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn gcn_examples() {
    let mut g = Graph::new();
    let h = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let (a, hv, w) = (g.constant(Tensor::eye(2)), g.constant(h.clone()), g.constant(Tensor::eye(2)));
    let out = gcn_layer(&mut g, a, hv, w, Activation::Identity).unwrap();
    assert_eq!(g.data(out), h.data());

    let a = g.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
    let hv = g.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
    let w = g.constant(Tensor::matrix(1, 1, vec![1.0]).unwrap());
    let out = gcn_layer(&mut g, a, hv, w, Activation::Identity).unwrap();
    assert_eq!(g.data(out), &[2.0, 1.0]);

    let a = g.constant(Tensor::eye(3));
    let hv = g.constant(Tensor::zeros(&[3, 2]));
    let w = g.constant(random_matrix(&mut rng(1), 2, 4));
    let out = gcn_layer(&mut g, a, hv, w, Activation::Tanh).unwrap();
    assert!(g.data(out).iter().all(|&v| v == 0.0));
}

#[test]
fn gcn_layer_applies_per_node_block() {
    let mut store = ParamStore::new();
    let adj = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let layer = GcnLayer::from_parts(&mut store, "gcn", adj, Tensor::eye(1));
    let mut g = Graph::new();
    // Two stacked 2-node blocks.
    let h = g.constant(Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = layer.forward(&mut g, &store, h, Activation::Identity).unwrap();
    assert_eq!(g.data(y), &[2.0, 1.0, 4.0, 3.0]);
}

#[test]
fn feed_forward_examples() {
    let mut store = ParamStore::new();
    let ff = FeedForward::new(&mut store, "ff", 1, 1, &mut rng(0));
    let ids = ff.params();
    for &id in &ids {
        store.get_mut(id).data_mut().fill(0.0);
    }
    let run = |store: &ParamStore, x: f64| {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::matrix(1, 1, vec![x]).unwrap());
        let y = ff.forward(&mut g, store, xv).unwrap();
        g.data(y)[0]
    };
    assert_eq!(run(&store, 5.0), 0.0);
    for &id in &ids {
        if store.get(id).shape().len() == 2 {
            store.get_mut(id).data_mut().fill(1.0);
        }
    }
    assert_eq!(run(&store, -2.0), 0.0);
    assert_eq!(run(&store, 3.0), 3.0);
}

#[test]
fn layer_norm_examples() {
    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, "ln", 2);
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_rows(&[vec![1.0, -1.0], vec![4.0, 4.0]]).unwrap());
    let y = ln.forward(&mut g, &store, x).unwrap();
    assert_abs_diff_eq!(g.data(y)[0], 1.0, epsilon = 1e-5);
    assert_abs_diff_eq!(g.data(y)[1], -1.0, epsilon = 1e-5);
    assert_eq!(&g.data(y)[2..], &[0.0, 0.0]);

    store.get_mut(ln.gain).data_mut().fill(0.0);
    store.get_mut(ln.bias).data_mut().copy_from_slice(&[0.5, -0.5]);
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_rows(&[vec![3.0, 1.0]]).unwrap());
    let y = ln.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.data(y), &[0.5, -0.5]);
}

#[test]
fn batch_norm_examples() {
    let mut store = ParamStore::new();
    let bn = BatchNorm::new(&mut store, "bn", 1);
    let mut g = Graph::new();
    let x = g.constant(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
    let mut ctx = Ctx::train(0);
    let y = bn.forward(&mut g, &store, x, &mut ctx).unwrap();
    assert_abs_diff_eq!(g.data(y)[0], -1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(g.data(y)[1], 1.0, epsilon = 1e-4);
    assert_eq!(ctx.stat_updates.len(), 1);
    assert_eq!(ctx.stat_updates[0].observed.mean, vec![2.0]);

    let same = g.constant(Tensor::matrix(3, 1, vec![7.0; 3]).unwrap());
    let y = bn.forward(&mut g, &store, same, &mut ctx).unwrap();
    assert!(g.data(y).iter().all(|&v| v == 0.0));

    // Eval mode with fresh running stats (mean 0, var 1) is the identity up to eps.
    let mut eval = Ctx::eval();
    let x = g.constant(Tensor::matrix(2, 1, vec![0.25, -4.0]).unwrap());
    let y = bn.forward(&mut g, &store, x, &mut eval).unwrap();
    assert_abs_diff_eq!(g.data(y)[0], 0.25, epsilon = 1e-5);
    assert_abs_diff_eq!(g.data(y)[1], -4.0, epsilon = 1e-4);
    assert!(eval.stat_updates.is_empty());

    // One row in train mode falls back to running statistics.
    let one = g.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
    let mut ctx = Ctx::train(0);
    let y = bn.forward(&mut g, &store, one, &mut ctx).unwrap();
    assert_abs_diff_eq!(g.data(y)[0], 2.0, epsilon = 1e-4);
    assert!(ctx.stat_updates.is_empty());
}

#[test]
fn running_stats_follow_momentum() {
    let mut store = ParamStore::new();
    let bn = BatchNorm::new(&mut store, "bn", 1);
    let mut g = Graph::new();
    let x = g.constant(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
    let mut ctx = Ctx::train(0);
    bn.forward(&mut g, &store, x, &mut ctx).unwrap();
    potr::nn::apply_stat_updates(&mut store, &ctx.stat_updates, 0.1);
    assert_abs_diff_eq!(store.get(bn.running_mean).data()[0], 0.2, epsilon = 1e-15);
    assert_abs_diff_eq!(store.get(bn.running_var).data()[0], 0.9 + 0.1 * 1.0, epsilon = 1e-15);
}

#[test]
fn positional_table_examples() {
    let pe = positional_encoding_table(50, 8).unwrap();
    let t = pe.table();
    for i in 0..4 {
        assert_eq!(t.get(0, 2 * i), 0.0);
        assert_eq!(t.get(0, 2 * i + 1), 1.0);
    }
    assert_abs_diff_eq!(t.get(1, 0), 0.8415, epsilon = 1e-4);
    assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!(matches!(positional_encoding_table(10, 7), Err(PotrError::Config(_))));
    assert_eq!(pe.tiled(3, 2).unwrap().rows(), 6);
    assert!(pe.tiled(51, 1).is_err());
}

#[test]
fn dropout_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::filled(&[100, 100], 1.0));
    let mut train = Ctx::train(3);
    let same = dropout(&mut g, x, 0.0, &mut train).unwrap();
    assert_eq!(same, x);
    let mut eval = Ctx::eval();
    assert_eq!(dropout(&mut g, x, 0.7, &mut eval).unwrap(), x);
    assert!(matches!(dropout(&mut g, x, 1.0, &mut train), Err(PotrError::Config(_))));

    let y = dropout(&mut g, x, 0.5, &mut train).unwrap();
    let mean = g.data(y).iter().sum::<f64>() / 1e4;
    assert!((mean - 1.0).abs() < 0.05, "{mean}");
    assert!(g.data(y).iter().all(|&v| v == 0.0 || v == 2.0));

    let mut again = Ctx::train(3);
    let _ = dropout(&mut g, x, 0.0, &mut again).unwrap();
    let z = dropout(&mut g, x, 0.5, &mut again).unwrap();
    assert_eq!(g.data(y), g.data(z));
}

#[test]
fn layers_pass_finite_difference_checks() {
    let mut r = rng(11);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut r).unwrap();
    let ff = FeedForward::new(&mut store, "ff", 4, 6, &mut r);
    let ln = LayerNorm::new(&mut store, "ln", 4);
    let lin = Linear::new(&mut store, "lin", 4, 3, &mut r);
    let gcn = GcnLayer::new(&mut store, "gcn", 3, 2, 2, &mut r);
    let bn = BatchNorm::new(&mut store, "bn", 2);
    for id in lin.params() {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v += 0.1);
    }
    let x = random_matrix(&mut r, 3, 4);
    let mask = causal_mask(3);
    let err = finite_diff_check(
        &mut store,
        |s, g| {
            let xv = g.constant(x.clone());
            let mut ctx = Ctx::train(0);
            let n = ln.forward(g, s, xv)?;
            let a = mha.forward(g, s, n, n, n, 1, Some(&mask), &mut ctx, ("t", 0, potr::nn::AttentionKind::SelfAttention))?;
            let h = ff.forward(g, s, a)?;
            let p = lin.forward(g, s, h)?; // 3×3
            let stack = g.reshape(p, &[9, 1])?;
            let two = g.concat_cols(&[stack, stack])?; // 9×2: three 3-node blocks
            let y = gcn.forward(g, s, two, Activation::Tanh)?;
            let z = bn.forward(g, s, y, &mut ctx)?;
            let sq = g.mul(z, y)?;
            Ok(g.mean(sq))
        },
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}
