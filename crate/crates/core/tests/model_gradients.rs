use asim::autodiff::{grad_check, Bound, Graph, Tensor};
use asim::embeddings::EmbeddingTable;
use asim::model::{Asim, AsimConfig, Dropout, Mode, Variant};

const X: [usize; 6] = [2, 3, 4, 5, 6, 7];
const Y: [usize; 6] = [7, 8, 9, 2, 3, 1];
const LABEL: usize = 2;
const EPS: f64 = 1e-5;

fn tiny(variant: Variant) -> AsimConfig {
    variant.apply(&AsimConfig {
        embed_dim: 6,
        hidden: 8,
        prediction_hidden_dims: vec![8],
        train_embeddings: true,
        ..AsimConfig::default()
    })
}

fn model(variant: Variant, seed: u64) -> Asim {
    let table = EmbeddingTable::random(10, 6, 1.0, seed);
    Asim::new(tiny(variant), &table, seed).unwrap()
}

fn loss_of(m: &Asim) -> f64 {
    let mut g = Graph::new();
    let b = m.store.bind(&mut g);
    let n = m.forward_graph(&mut g, &b, &X, &Y, &mut Dropout::eval()).unwrap();
    let l = g.cross_entropy(n.logits, LABEL).unwrap();
    g.value(l).item()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for seed in 1..=3 {
        let m = model(Variant::Full, seed);
        let mut inputs: Vec<Tensor> = m.store.tensors().to_vec();
        let r = grad_check(&mut inputs, EPS, |g, vars| {
            let bound = Bound::from_vars(vars.to_vec());
            let nodes = m.forward_graph(g, &bound, &X, &Y, &mut Dropout::eval())?;
            g.cross_entropy(nodes.logits, LABEL)
        })
        .unwrap();
        let worst = m.store.name(r.worst_input.unwrap());
        assert!(r.max_relative_error < 1e-4, "seed {seed}: {} at {worst}", r.max_relative_error);
        assert_eq!(r.checked, m.store.tensors().iter().map(Tensor::len).sum::<usize>());
    }
}

// ReLU and max-pool are piecewise smooth, so a central difference that
// straddles a kink is meaningless. Such elements show up as disagreeing
// one-sided slopes; there the analytic value must match the slope on its
// own side instead.
#[test]
fn ablation_gradients_match_away_from_kinks() {
    for variant in Variant::ABLATIONS {
        let m = model(variant, 1);
        let (_, grads) = m.loss_and_grads(&X, &Y, LABEL, Mode::Eval).unwrap();
        let base = loss_of(&m);
        let (mut checked, mut kinks) = (0, 0);
        for (ti, grad) in grads.iter().enumerate() {
            let grad = grad.as_ref().expect("all parameters trainable");
            for ei in 0..grad.len() {
                let shifted = |h: f64| {
                    let mut p = m.clone();
                    p.store.tensors_mut()[ti].data_mut()[ei] += h;
                    loss_of(&p)
                };
                let (plus, minus) = (shifted(EPS), shifted(-EPS));
                let a = grad.data()[ei];
                let central = (plus - minus) / (2.0 * EPS);
                let close = |n: f64, rel: f64| (a - n).abs() <= rel * a.abs().max(n.abs()) + 1e-8;
                checked += 1;
                if close(central, 1e-4) {
                    continue;
                }
                let (right, left) = ((plus - base) / EPS, (base - minus) / EPS);
                kinks += 1;
                assert!(
                    close(right, 1e-3) || close(left, 1e-3),
                    "{variant:?} {}[{ei}]: analytic {a:e}, left {left:e}, right {right:e}",
                    m.store.name(ti)
                );
            }
        }
        assert!(kinks * 50 < checked, "{variant:?}: {kinks} kinks in {checked} elements");
    }
}
