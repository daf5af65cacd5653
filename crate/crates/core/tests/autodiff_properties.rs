use asim::autodiff::{grad_check, Bound, Graph, LstmParams, ParamStore, Tensor, Var};
use asim::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const CASES: u64 = 20;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, 1.0, r)
}

/// Reduces any output to a scalar through fixed random weights, so every
/// element gets a distinct upstream gradient.
fn project(g: &mut Graph<'_>, out: Var, seed: u64) -> Result<Var> {
    let w = uniform(g.shape(out), &mut rng(seed ^ 0x9e37));
    let w = g.constant(w);
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn check<F>(name: &str, mut make: impl FnMut(&mut ChaCha8Rng) -> Vec<Tensor>, build: F)
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var> + Copy,
{
    for seed in 0..CASES {
        let mut r = rng(seed);
        let mut inputs = make(&mut r);
        let report = grad_check(&mut inputs, EPS, build).unwrap();
        assert!(
            report.max_relative_error < TOL,
            "{name} seed {seed}: relative error {:.3e}",
            report.max_relative_error
        );
        assert!(report.checked > 0);
    }
}

fn dims(r: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5))
}

#[test]
fn matmul_gradients() {
    check(
        "matmul",
        |r| {
            let (a, b, c) = dims(r);
            vec![uniform(&[a, b], r), uniform(&[b, c], r)]
        },
        |g, v| {
            let m = g.matmul(v[0], v[1])?;
            project(g, m, 1)
        },
    );
}

#[test]
fn elementwise_binary_gradients() {
    let make = |r: &mut ChaCha8Rng| {
        let (a, b, _) = dims(r);
        vec![uniform(&[a, b], r), uniform(&[a, b], r)]
    };
    check("add", make, |g, v| {
        let o = g.add(v[0], v[1])?;
        project(g, o, 2)
    });
    check("sub", make, |g, v| {
        let o = g.sub(v[0], v[1])?;
        project(g, o, 3)
    });
    check("mul", make, |g, v| {
        let o = g.mul(v[0], v[1])?;
        project(g, o, 4)
    });
}

#[test]
fn add_row_and_scale_gradients() {
    check(
        "add_row",
        |r| {
            let (a, b, _) = dims(r);
            vec![uniform(&[a, b], r), uniform(&[b], r)]
        },
        |g, v| {
            let o = g.add_row(v[0], v[1])?;
            let o = g.scale(o, -1.7);
            project(g, o, 5)
        },
    );
}

#[test]
fn smooth_activation_gradients() {
    let make = |r: &mut ChaCha8Rng| {
        let (a, b, _) = dims(r);
        vec![Tensor::uniform(&[a, b], 3.0, r)]
    };
    check("sigmoid", make, |g, v| {
        let o = g.sigmoid(v[0]);
        project(g, o, 6)
    });
    check("tanh", make, |g, v| {
        let o = g.tanh(v[0]);
        project(g, o, 7)
    });
}

#[test]
fn relu_gradients_away_from_zero() {
    check(
        "relu",
        |r| {
            let (a, b, _) = dims(r);
            let mut t = uniform(&[a, b], r);
            for x in t.data_mut() {
                // keep every input at least 0.01 from the kink
                *x = x.signum() * (x.abs() + 0.01);
            }
            vec![t]
        },
        |g, v| {
            let o = g.relu(v[0]);
            project(g, o, 8)
        },
    );
}

#[test]
fn shape_op_gradients() {
    check(
        "concat/slice",
        |r| {
            let (a, b, c) = dims(r);
            vec![uniform(&[a, b], r), uniform(&[a, c], r)]
        },
        |g, v| {
            let cat = g.concat_cols(&[v[0], v[1], v[0]])?;
            let (rows, cols) = g.value(cat).dims2();
            let s = g.slice_cols(cat, 1, cols)?;
            let s = g.slice_rows(s, rows / 2, rows)?;
            project(g, s, 9)
        },
    );
    check(
        "stack/transpose",
        |r| {
            let (_, b, _) = dims(r);
            vec![uniform(&[b], r), uniform(&[1, b], r)]
        },
        |g, v| {
            let s = g.stack_rows(&[v[0], v[1], v[0]])?;
            let t = g.transpose(s);
            project(g, t, 10)
        },
    );
}

#[test]
fn masked_softmax_gradients() {
    check(
        "softmax",
        |r| {
            let (a, _, _) = dims(r);
            let b = r.gen_range(2..6);
            vec![Tensor::uniform(&[a, b], 2.0, r)]
        },
        |g, v| {
            let c = g.value(v[0]).cols();
            let mask: Vec<bool> = (0..c).map(|j| j % 3 != 1).collect();
            let o = g.scaled_softmax_rows(v[0], 3, &mask)?;
            project(g, o, 11)
        },
    );
}

#[test]
fn max_over_time_gradients_with_unique_maxima() {
    check(
        "max_over_time",
        |r| {
            let (n, d, _) = dims(r);
            let n = n + 1;
            // distinct values spaced well beyond eps so no ties appear
            let mut vals: Vec<f64> = (0..n * d).map(|i| i as f64 * 0.05).collect();
            for i in (1..vals.len()).rev() {
                vals.swap(i, r.gen_range(0..=i));
            }
            vec![Tensor::matrix(n, d, vals).unwrap()]
        },
        |g, v| {
            let n = g.value(v[0]).rows();
            let mask: Vec<bool> = (0..n).map(|i| i != 1 || n == 1).collect();
            let o = g.max_over_time(v[0], &mask)?;
            project(g, o, 12)
        },
    );
}

#[test]
fn cross_entropy_and_gather_gradients() {
    check(
        "cross_entropy",
        |r| {
            let c = r.gen_range(2..6);
            vec![Tensor::uniform(&[1, c], 2.0, r)]
        },
        |g, v| {
            let c = g.value(v[0]).cols();
            g.cross_entropy(v[0], c - 1)
        },
    );
    check(
        "gather_rows",
        |r| {
            let (_, d, _) = dims(r);
            vec![uniform(&[5, d], r)]
        },
        |g, v| {
            let rows = g.gather_rows(v[0], &[3, 1, 3, 2, 4], Some(0))?;
            project(g, rows, 13)
        },
    );
}

#[test]
fn gather_never_updates_the_frozen_row() {
    let table = uniform(&[4, 3], &mut rng(1));
    let mut g = Graph::new();
    let t = g.param(&table);
    let rows = g.gather_rows(t, &[0, 2, 0, 1], Some(0)).unwrap();
    let loss = project(&mut g, rows, 14).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(t).unwrap();
    assert!(grad.row(0).iter().all(|&x| x == 0.0));
    assert!(grad.row(2).iter().all(|&x| x != 0.0));
    assert!(grad.row(3).iter().all(|&x| x == 0.0));
}

#[test]
fn lstm_gradients() {
    for seed in 0..CASES {
        let mut r = rng(100 + seed);
        let (i, h) = (r.gen_range(1..4), r.gen_range(1..4));
        let n = r.gen_range(1..5);
        let mut store = ParamStore::new();
        let lstm = LstmParams::new(&mut store, "lstm", i, h, &mut r);
        let mut inputs = store.tensors().to_vec();
        inputs.push(uniform(&[n, i], &mut r));
        let mask: Vec<bool> = (0..n).map(|t| t != 2).collect();
        let reverse = seed % 2 == 1;
        let report = grad_check(&mut inputs, EPS, |g, v| {
            let bound = Bound::from_vars(v[..v.len() - 1].to_vec());
            let p = lstm.bind(g, &bound)?;
            let out = asim::autodiff::lstm_sequence(g, v[v.len() - 1], &mask, &p, reverse)?;
            project(g, out, seed)
        })
        .unwrap();
        assert!(
            report.max_relative_error < TOL,
            "lstm seed {seed}: {:.3e}",
            report.max_relative_error
        );
    }
}

fn matrix(max_r: usize, max_c: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_r, 1..=max_c).prop_flat_map(|(r, c)| {
        prop::collection::vec(-20.0f64..20.0, r * c).prop_map(move |d| Tensor::matrix(r, c, d).unwrap())
    })
}

fn with_mask(max_r: usize, max_c: usize) -> impl Strategy<Value = (Tensor, Vec<bool>)> {
    matrix(max_r, max_c).prop_flat_map(|t| {
        let c = t.cols();
        (Just(t), prop::collection::vec(any::<bool>(), c))
            .prop_filter("at least one visible column", |(_, m)| m.iter().any(|&b| b))
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions((e, mask) in with_mask(6, 8), k in 1usize..64) {
        let p = asim::autodiff::scaled_softmax_rows(&e, k, &mask).unwrap();
        for i in 0..p.rows() {
            let row = p.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (j, &w) in row.iter().enumerate() {
                if mask[j] {
                    prop_assert!(w >= 0.0);
                } else {
                    prop_assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn scaling_matches_plain_softmax_of_scaled_input((e, mask) in with_mask(5, 7), k in 1usize..400) {
        let scaled = asim::autodiff::scaled_softmax_rows(&e, k, &mask).unwrap();
        for i in 0..e.rows() {
            let visible: Vec<f64> = e.row(i).iter().zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| v / (k as f64).sqrt())
                .collect();
            let plain = asim::autodiff::softmax(&visible);
            let got: Vec<f64> = scaled.row(i).iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
            for (a, b) in got.iter().zip(&plain) {
                prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn max_pool_sends_each_dimension_to_one_row(t in matrix(7, 6), rows_seed in any::<u64>()) {
        let n = t.rows();
        let mut r = rng(rows_seed);
        let mut mask: Vec<bool> = (0..n).map(|_| r.gen_bool(0.7)).collect();
        mask[r.gen_range(0..n)] = true;
        let upstream = uniform(&[t.cols()], &mut r);
        let mut g = Graph::new();
        let v = g.param(&t);
        let pooled = g.max_over_time(v, &mask).unwrap();
        let w = g.constant(upstream.clone());
        let p = g.mul(pooled, w).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        let grad = g.grad(v).unwrap();
        for j in 0..t.cols() {
            let hits: Vec<usize> = (0..n).filter(|&i| grad.get(i, j) != 0.0).collect();
            prop_assert!(hits.len() <= 1);
            let total: f64 = (0..n).map(|i| grad.get(i, j)).sum();
            prop_assert_eq!(total, upstream.data()[j]);
            if let Some(&i) = hits.first() {
                prop_assert!(mask[i]);
                prop_assert_eq!(g.value(pooled).data()[j], t.get(i, j));
            }
        }
    }

    #[test]
    fn forward_and_backward_are_bitwise_deterministic(a in matrix(4, 4), seed in any::<u64>()) {
        let run = || {
            let mut r = rng(seed);
            let b = uniform(&[a.cols(), 3], &mut r);
            let mut g = Graph::new();
            let (va, vb) = (g.param(&a), g.param(&b));
            let m = g.matmul(va, vb).unwrap();
            let t = g.tanh(m);
            let mask = vec![true; 3];
            let s = g.scaled_softmax_rows(t, 2, &mask).unwrap();
            let p = g.max_over_time(s, &vec![true; a.rows()]).unwrap();
            let p = g.stack_rows(&[p]).unwrap();
            let loss = g.cross_entropy(p, 1).unwrap();
            g.backward(loss).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            (g.value(loss).item().to_bits(), bits(g.grad(va).unwrap()), bits(g.grad(vb).unwrap()))
        };
        prop_assert_eq!(run(), run());
    }
}
