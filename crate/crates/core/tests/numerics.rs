use gwlab::numerics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_matmul(x: &[f64], w: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut y = vec![0.0; m];
    for j in 0..m {
        for i in 0..n {
            y[j] += x[i] * w[i * m + j];
        }
    }
    y
}

#[test]
fn linear_identity_and_sum_cases() {
    let mut g = Graph::new();
    let x = g.constant_vec(vec![1.0, 0.0]);
    let w = g.constant(Tensor::identity(2));
    let b = g.constant_vec(vec![0.0, 0.0]);
    let y = forward_linear(&mut g, x, w, b).unwrap();
    assert_eq!(g.value(y), &[1.0, 0.0]);

    let x = g.constant_vec(vec![1.0, 2.0]);
    let w = g.constant(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
    let b = g.constant_vec(vec![3.0]);
    let y = forward_linear(&mut g, x, w, b).unwrap();
    assert_eq!(g.value(y), &[6.0]);
}

#[test]
fn linear_rows_match_triple_loop_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let w: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        for _ in 0..3 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut g = Graph::new();
            let xv = g.constant_vec(x.clone());
            let wv = g.constant(Tensor::new(vec![4, 2], w.clone()).unwrap());
            let bv = g.constant_vec(vec![0.0, 0.0]);
            let y = forward_linear(&mut g, xv, wv, bv).unwrap();
            let oracle = naive_matmul(&x, &w, 4, 2);
            for (a, b) in g.value(y).iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar GRU reference, written independently of the graph composite.
fn gru_reference(x: &[f64], h: &[f64], wx: &[f64], bx: &[f64], wh: &[f64], bh: &[f64]) -> Vec<f64> {
    let hs = h.len();
    let n = x.len();
    let col = |wmat: &[f64], rows: usize, v: &[f64], j: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..rows {
            s += v[i] * wmat[i * 3 * hs + j];
        }
        s
    };
    (0..hs)
        .map(|k| {
            let r = sig(col(wx, n, x, k) + bx[k] + col(wh, hs, h, k) + bh[k]);
            let z = sig(col(wx, n, x, hs + k) + bx[hs + k] + col(wh, hs, h, hs + k) + bh[hs + k]);
            let cand = (col(wx, n, x, 2 * hs + k) + bx[2 * hs + k] + r * (col(wh, hs, h, 2 * hs + k) + bh[2 * hs + k])).tanh();
            (1.0 - z) * h[k] + z * cand
        })
        .collect()
}

#[test]
fn gru_zero_everything_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cell = Gru::new(&mut store, "gru", 5, 64, &mut rng);
    for i in 0..store.len() {
        store.entry_mut(i).tensor.data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let x = g.constant_vec(vec![0.0; 5]);
    let h = g.constant_vec(vec![0.0; 64]);
    let out = forward_gru(&mut g, x, h, &cell, &p).unwrap();
    assert!(g.value(out).iter().all(|v| *v == 0.0));
}

#[test]
fn gru_saturated_update_gate_yields_candidate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let (n, hs) = (3, 4);
    let cell = Gru::new(&mut store, "gru", n, hs, &mut rng);
    // push the update-gate bias far positive so z == 1 to machine precision
    for k in 0..hs {
        store.get_mut(cell.bx).data_mut()[hs + k] = 60.0;
    }
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..hs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let xv = g.constant_vec(x.clone());
    let hv = g.constant_vec(h.clone());
    let out = forward_gru(&mut g, xv, hv, &cell, &p).unwrap();
    let (wx, bx, wh, bh) = (
        store.get(cell.wx).data(),
        store.get(cell.bx).data(),
        store.get(cell.wh).data(),
        store.get(cell.bh).data(),
    );
    for k in 0..hs {
        let mut a = bx[2 * hs + k];
        for i in 0..n {
            a += x[i] * wx[i * 3 * hs + 2 * hs + k];
        }
        let mut b = bh[2 * hs + k];
        for i in 0..hs {
            b += h[i] * wh[i * 3 * hs + 2 * hs + k];
        }
        let mut rpre = bx[k] + bh[k];
        for i in 0..n {
            rpre += x[i] * wx[i * 3 * hs + k];
        }
        for i in 0..hs {
            rpre += h[i] * wh[i * 3 * hs + k];
        }
        let cand = (a + sig(rpre) * b).tanh();
        assert!((g.value(out)[k] - cand).abs() < 1e-12);
    }
}

#[test]
fn gru_step_matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let mut store = ParamStore::new();
        let (n, hs) = (rng.random_range(1..10), rng.random_range(1..10));
        let cell = Gru::new(&mut store, "gru", n, hs, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..hs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xv = g.constant_vec(x.clone());
        let hv = g.constant_vec(h.clone());
        let out = cell.step(&mut g, &p, xv, hv).unwrap();
        let oracle = gru_reference(
            &x,
            &h,
            store.get(cell.wx).data(),
            store.get(cell.bx).data(),
            store.get(cell.wh).data(),
            store.get(cell.bh).data(),
        );
        for (a, b) in g.value(out).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn gru_rejects_wrong_state_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cell = Gru::new(&mut store, "gru", 2, 64, &mut rng);
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let x = g.constant_vec(vec![0.0; 2]);
    let h = g.constant_vec(vec![0.0; 63]);
    assert!(forward_gru(&mut g, x, h, &cell, &p).is_err());
}

#[test]
fn conv_matches_sliding_window_on_single_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let x: Vec<f64> = (0..49).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = rng.random_range(-1.0..1.0);
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![1, 7, 7], x.clone()).unwrap());
        let kv = g.constant(Tensor::new(vec![1, 1, 3, 3], k.clone()).unwrap());
        let bv = g.constant_vec(vec![bias]);
        let y = g.conv2d(xv, kv, bv).unwrap();
        assert_eq!(g.shape(y), &[1, 5, 5]);
        for r in 0..5 {
            for c in 0..5 {
                let mut acc = bias;
                for dr in 0..3 {
                    for dc in 0..3 {
                        acc += x[(r + dr) * 7 + c + dc] * k[dr * 3 + dc];
                    }
                }
                assert!((g.value(y)[r * 5 + c] - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn encoder_output_is_151_and_zero_for_zero_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let enc = ConvEncoder::new(&mut store, "enc", &mut rng);
    for _ in 0..5 {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let grid: Vec<f64> = (0..147).map(|_| rng.random_range(0.0..1.0)).collect();
        let gv = g.constant(Tensor::new(vec![3, 7, 7], grid).unwrap());
        let tv = g.constant_vec(vec![0.5; TASK_DIM]);
        let e = forward_conv_encoder(&mut g, gv, tv, &enc, &p).unwrap();
        assert_eq!(g.value(e).len(), EMBED_DIM);
        assert_eq!(EMBED_DIM, 151);
    }
    for i in 0..store.len() {
        store.entry_mut(i).tensor.data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let gv = g.constant(Tensor::zeros(&[3, 7, 7]));
    let tv = g.constant_vec(vec![0.0; TASK_DIM]);
    let e = enc.forward(&mut g, &p, gv, tv).unwrap();
    assert!(g.value(e).iter().all(|v| *v == 0.0));
}

#[test]
fn encoder_rejects_wrong_grid_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let enc = ConvEncoder::new(&mut store, "enc", &mut rng);
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let gv = g.constant(Tensor::zeros(&[3, 6, 7]));
    let tv = g.constant_vec(vec![0.0; TASK_DIM]);
    let err = enc.forward(&mut g, &p, gv, tv).unwrap_err();
    assert!(err.to_string().contains("[3, 6, 7]"));
}

#[test]
fn every_layer_passes_gradcheck() {
    for kind in LayerKind::ALL {
        let r = gradcheck(kind, 100, 6, 1e-5, 11).unwrap();
        assert_eq!(r.cases, 100);
        assert!(r.max_rel_err < 1e-4, "{kind:?}: {}", r.max_rel_err);
    }
}

#[test]
fn backward_is_linear_over_summed_objectives() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[4, 5, 3], &mut rng);
    let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let run = |which: u8| {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xv = g.constant_vec(x.clone());
        let y = mlp.forward(&mut g, &p, xv).unwrap();
        let a = g.slice(y, 0, 1).unwrap();
        let b = g.slice(y, 2, 1).unwrap();
        let t = g.tanh(b);
        let root = match which {
            0 => a,
            1 => t,
            _ => g.add(a, t).unwrap(),
        };
        g.backward(root).unwrap();
        store.collect_grads(&g, &p)
    };
    let (ga, gb, gs) = (run(0), run(1), run(2));
    for ((a, b), s) in ga.iter().zip(&gb).zip(&gs) {
        for ((x, y), z) in a.iter().zip(b).zip(s) {
            assert!((x + y - z).abs() < 1e-12);
        }
    }
}

fn train_run(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[3, 8, 2], &mut rng);
    let mut st = AdamState::new(&store, AdamConfig::default());
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xv = g.constant_vec(x);
        let y = mlp.forward(&mut g, &p, xv).unwrap();
        let loss = kl_bc_loss(&mut g, &[1.0, 0.0], y, 1.0).unwrap();
        g.backward(loss).unwrap();
        let grads = store.collect_grads(&g, &p);
        adam_step(&mut store, &grads, &mut st).unwrap();
    }
    store.digest()
}

#[test]
fn hundred_adam_steps_are_bit_reproducible() {
    assert_eq!(train_run(42), train_run(42));
    assert_ne!(train_run(42), train_run(43));
}

proptest! {
    #[test]
    fn softmax_is_normalized(logits in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let p = softmax(&logits);
        let s: f64 = p.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kl_is_nonnegative(logits in prop::collection::vec(-10.0f64..10.0, 7), k in 0usize..7) {
        let mut t = [0.0; 7];
        t[k] = 1.0;
        prop_assert!(kl_bc_value(&t, &logits, 1.0).unwrap() >= 0.0);
    }
}
