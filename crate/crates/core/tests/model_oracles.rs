#![allow(clippy::needless_range_loop)] // the oracles index on purpose

use asim::autodiff::{Dense, Graph, ParamStore, Tensor};
use asim::embeddings::{EmbeddingTable, PAD};
use asim::model::{fuse, inter_attention, Asim, AsimConfig, Dropout, Fusion, Mode, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn random_rows(n: usize, k: usize, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..k).map(|_| r.gen_range(-2.0..2.0)).collect()).collect()
}

fn tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

type Rows = Vec<Vec<f64>>;

/// Scores, alignment weights and aligned rows written out as plain loops.
fn brute_force(x: &[Vec<f64>], y: &[Vec<f64>], mask_y: &[bool]) -> (Rows, Rows, Rows) {
    let k = x[0].len();
    let mut e = vec![vec![0.0; y.len()]; x.len()];
    for i in 0..x.len() {
        for j in 0..y.len() {
            for l in 0..k {
                e[i][j] += x[i][l] * y[j][l];
            }
        }
    }
    let mut w = vec![vec![0.0; y.len()]; x.len()];
    let mut hat = vec![vec![0.0; k]; x.len()];
    for i in 0..x.len() {
        let mut z = 0.0;
        for j in 0..y.len() {
            if mask_y[j] {
                z += (e[i][j] / (k as f64).sqrt()).exp();
            }
        }
        for j in 0..y.len() {
            if mask_y[j] {
                w[i][j] = (e[i][j] / (k as f64).sqrt()).exp() / z;
            }
            for l in 0..k {
                hat[i][l] += w[i][j] * y[j][l];
            }
        }
    }
    (e, w, hat)
}

fn assert_close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: row count");
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < tol, "{what}: {x} vs {y}");
        }
    }
}

#[test]
fn attention_matches_triple_loop() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for (n, m, k) in [(3, 4, 2), (4, 3, 5), (3, 3, 8), (4, 4, 1)] {
        let (x, y) = (random_rows(n, k, &mut r), random_rows(m, k, &mut r));
        let mask_x = vec![true; n];
        let mut mask_y = vec![true; m];
        if k > 2 {
            mask_y[m - 1] = false;
        }
        let (tx, ty) = (tensor(&x), tensor(&y));
        let mut g = Graph::new();
        let (vx, vy) = (g.constant_ref(&tx), g.constant_ref(&ty));
        let att = inter_attention(&mut g, vx, vy, &mask_x, &mask_y).unwrap();
        let (e, w, hat) = brute_force(&x, &y, &mask_y);
        assert_close(&rows(g.value(att.scores)), &e, 1e-10, "scores");
        assert_close(&rows(g.value(att.weights_x)), &w, 1e-10, "weights_x");
        assert_close(&rows(g.value(att.x_hat)), &hat, 1e-10, "x_hat");
        let (_, w_y, hat_y) = brute_force(&y, &x, &mask_x);
        assert_close(&rows(g.value(att.weights_y)), &w_y, 1e-10, "weights_y");
        assert_close(&rows(g.value(att.y_hat)), &hat_y, 1e-10, "y_hat");
    }
}

#[test]
fn attention_rows_are_distributions_and_scores_transpose() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (n, m, k) = (r.gen_range(1..7), r.gen_range(1..7), r.gen_range(1..9));
        let (x, y) = (tensor(&random_rows(n, k, &mut r)), tensor(&random_rows(m, k, &mut r)));
        let (mx, my) = (vec![true; n], vec![true; m]);
        let mut g = Graph::new();
        let (vx, vy) = (g.constant_ref(&x), g.constant_ref(&y));
        let xy = inter_attention(&mut g, vx, vy, &mx, &my).unwrap();
        let yx = inter_attention(&mut g, vy, vx, &my, &mx).unwrap();
        for w in [xy.weights_x, xy.weights_y] {
            let t = g.value(w);
            for i in 0..t.rows() {
                assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(g.value(xy.scores).max_abs_diff(&g.value(yx.scores).transpose()) < 1e-12);
        assert!(g.value(xy.weights_y).max_abs_diff(g.value(yx.weights_x)) < 1e-12);
    }
}

fn dense_ref(store: &ParamStore, layer: &Dense, x: &[f64]) -> Vec<f64> {
    let (w, b) = (store.get(layer.weight), store.get(layer.bias));
    (0..layer.output_dim)
        .map(|o| {
            let z: f64 = b.data()[o] + x.iter().enumerate().map(|(i, v)| v * w.get(i, o)).sum::<f64>();
            z.max(0.0)
        })
        .collect()
}

#[test]
fn fusion_matches_transcription() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (k, h) = (4, 6);
    let mut store = ParamStore::new();
    let f = Fusion {
        concat: Dense::new(&mut store, "f1", 2 * k, h, &mut r),
        difference: Dense::new(&mut store, "f2", 2 * k, h, &mut r),
        product: Dense::new(&mut store, "f3", 2 * k, h, &mut r),
        merge: Dense::new(&mut store, "f", 3 * h, h, &mut r),
    };
    // non-zero biases so the affine part is exercised
    for t in store.tensors_mut() {
        if t.shape().len() == 1 {
            for v in t.data_mut() {
                *v = r.gen_range(-0.5..0.5);
            }
        }
    }
    let (x, x_hat) = (random_rows(5, k, &mut r), random_rows(5, k, &mut r));
    let (tx, th) = (tensor(&x), tensor(&x_hat));
    let mut g = Graph::new();
    let bound = store.bind(&mut g);
    let (vx, vh) = (g.constant_ref(&tx), g.constant_ref(&th));
    let out = fuse(&mut g, &bound, &f, vx, vh, &mut Dropout::eval()).unwrap();

    let expected: Vec<Vec<f64>> = x
        .iter()
        .zip(&x_hat)
        .map(|(a, b)| {
            let join = |other: Vec<f64>| [a.clone(), other].concat();
            let o1 = dense_ref(&store, &f.concat, &join(b.clone()));
            let o2 = dense_ref(&store, &f.difference, &join(a.iter().zip(b).map(|(p, q)| p - q).collect()));
            let o3 = dense_ref(&store, &f.product, &join(a.iter().zip(b).map(|(p, q)| p * q).collect()));
            dense_ref(&store, &f.merge, &[o1, o2, o3].concat())
        })
        .collect();
    assert_close(&rows(g.value(out)), &expected, 1e-10, "fusion");
}

fn model(variant: Variant, seed: u64) -> Asim {
    let cfg = variant.apply(&AsimConfig {
        embed_dim: 8,
        hidden: 6,
        prediction_hidden_dims: vec![6],
        ..AsimConfig::default()
    });
    Asim::new(cfg, &EmbeddingTable::random(20, 8, 0.5, seed), seed).unwrap()
}

const X: [usize; 5] = [4, 9, 2, 13, 7];
const Y: [usize; 4] = [7, 18, 3, 4];

#[test]
fn swapping_sides_swaps_pooled_vectors_and_negates_difference() {
    for variant in Variant::ALL {
        let m = model(variant, 2);
        let features = |a: &[usize], b: &[usize]| {
            let mut g = Graph::new();
            let bound = m.store.bind(&mut g);
            let n = m.forward_graph(&mut g, &bound, a, b, &mut Dropout::eval()).unwrap();
            (g.value(n.pooled_x).clone(), g.value(n.pooled_y).clone(), g.value(n.features).clone())
        };
        let (px, py, fxy) = features(&X, &Y);
        let (qx, qy, fyx) = features(&Y, &X);
        assert_eq!(px, qy, "{variant:?}");
        assert_eq!(py, qx, "{variant:?}");
        let d = px.len();
        let f = |t: &Tensor, block: usize| t.data()[block * d..(block + 1) * d].to_vec();
        assert_eq!(f(&fxy, 0), f(&fyx, 1));
        for (a, b) in f(&fxy, 2).iter().zip(f(&fyx, 2)) {
            assert_eq!(*a, -b);
        }
        assert_eq!(f(&fxy, 3), f(&fyx, 3));
    }
}

#[test]
fn padding_does_not_change_the_prediction() {
    for variant in Variant::ALL {
        let m = model(variant, 4);
        let base = m.forward_ids(&X, &Y, Mode::Eval).unwrap();
        let padded_x = [&X[..], &[PAD; 3]].concat();
        let interior_y = [Y[0], PAD, Y[1], Y[2], PAD, Y[3]];
        let padded = m.forward_ids(&padded_x, &interior_y, Mode::Eval).unwrap();
        for (a, b) in base.logits.iter().zip(&padded.logits) {
            assert!((a - b).abs() < 1e-8, "{variant:?}: {a} vs {b}");
        }
        if let Some(w) = padded.weights_x {
            for i in 0..w.rows() {
                assert_eq!(w.get(i, 1), 0.0);
                assert_eq!(w.get(i, 4), 0.0);
            }
        }
    }
}

#[test]
fn every_variant_scores_four_classes() {
    for variant in Variant::ALL {
        let m = model(variant, 6);
        let t = m.forward_ids(&X, &Y, Mode::Eval).unwrap();
        assert_eq!(t.logits.len(), 4, "{variant:?}");
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(t.attention.is_some(), m.config.use_attention);
    }
}

#[test]
fn shared_token_draws_the_most_attention() {
    // identical rows with a dominant norm: each x row attends to its twin in y
    let html = vec![3.0, 0.0, 0.5];
    let java = vec![0.0, 3.0, -0.5];
    let tag = vec![0.4, 0.2, 0.1];
    let x = tensor(&[html.clone(), java.clone()]);
    let y = tensor(&[tag, java, html]);
    let mut g = Graph::new();
    let (vx, vy) = (g.constant_ref(&x), g.constant_ref(&y));
    let att = inter_attention(&mut g, vx, vy, &[true; 2], &[true; 3]).unwrap();
    let w = g.value(att.weights_x);
    assert_eq!(asim::model::argmax(w.row(0)), 2);
    assert_eq!(asim::model::argmax(w.row(1)), 1);
}
