use asim::embeddings::{EmbeddingTable, Vocabulary};
use asim::eval::evaluate;
use asim::model::{Asim, AsimConfig, Checkpoint};
use asim::synth::{generate_pairs, SynthConfig};
use asim::text::{to_examples, tokenize_records, vocab_from_pairs, Example};
use asim::train::{adam_step, batch_gradient, make_batches, train, AdamState, TrainConfig};
use asim::Task;

const MAX_LEN: usize = 40;

fn data(n: usize, seed: u64) -> (Vocabulary, Vec<Example>) {
    let records = generate_pairs(n, Task::Ku4, seed, &SynthConfig::default());
    let pairs = tokenize_records(&records, MAX_LEN).unwrap();
    let vocab = vocab_from_pairs(&pairs, 1).unwrap();
    let examples = to_examples(&pairs, &vocab, MAX_LEN).unwrap();
    (vocab, examples)
}

fn config(train_embeddings: bool) -> AsimConfig {
    AsimConfig {
        embed_dim: 8,
        hidden: 6,
        max_len: MAX_LEN,
        dropout: 0.0,
        prediction_hidden_dims: vec![6],
        train_embeddings,
        ..AsimConfig::default()
    }
}

fn model(vocab: &Vocabulary, seed: u64, train_embeddings: bool) -> Asim {
    let table = EmbeddingTable::random(vocab.len(), 8, 0.5, seed);
    Asim::new(config(train_embeddings), &table, seed).unwrap()
}

#[test]
fn a_few_adam_steps_lower_the_batch_loss() {
    let mut failures = Vec::new();
    for seed in 1..=5 {
        let (vocab, examples) = data(16, seed);
        let mut m = model(&vocab, seed, true);
        let batch = &make_batches(&examples, 16, seed)[0];
        let names = m.store.names().to_vec();
        let mut adam = AdamState::new(m.store.tensors(), 1e-3);
        let (first, _) = batch_gradient(&m, batch, seed, 1, 0).unwrap();
        let mut loss = first;
        for step in 0..5 {
            let (l, grads) = batch_gradient(&m, batch, seed, 1, step).unwrap();
            loss = l;
            adam_step(m.store.tensors_mut(), &grads, &names, &mut adam).unwrap();
        }
        let (after, _) = batch_gradient(&m, batch, seed, 1, 5).unwrap();
        assert!(loss.is_finite());
        if after >= first {
            failures.push((seed, first, after));
        }
    }
    assert!(failures.len() <= 1, "loss did not drop: {failures:?}");
}

#[test]
fn gradients_reach_almost_every_parameter() {
    let (vocab, examples) = data(32, 9);
    for train_embeddings in [true, false] {
        let m = model(&vocab, 9, train_embeddings);
        let batch = &make_batches(&examples, 32, 1)[0];
        let (_, grads) = batch_gradient(&m, batch, 1, 1, 0).unwrap();
        let emb = m.embedding_id().index();
        let (mut nonzero, mut total) = (0usize, 0usize);
        for (i, g) in grads.iter().enumerate() {
            if i == emb {
                assert_eq!(g.is_some(), train_embeddings, "embedding trainability");
                if let Some(g) = g {
                    assert!(g.row(0).iter().all(|&v| v == 0.0), "padding row moved");
                }
                continue;
            }
            let g = g.as_ref().unwrap_or_else(|| panic!("{} has no gradient", m.store.name(i)));
            assert!(g.squared_norm() > 0.0, "{} gets no signal", m.store.name(i));
            total += g.len();
            nonzero += g.data().iter().filter(|&&v| v != 0.0).count();
        }
        let fraction = nonzero as f64 / total as f64;
        assert!(fraction >= 0.99, "only {fraction:.4} of gradient entries are non-zero");
    }
}

#[test]
fn batch_gradient_ignores_thread_count() {
    let (vocab, examples) = data(24, 4);
    let mut cfg = config(true);
    cfg.dropout = 0.3;
    let m = Asim::new(cfg, &EmbeddingTable::random(vocab.len(), 8, 0.5, 4), 4).unwrap();
    let batch = &make_batches(&examples, 24, 2)[0];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| batch_gradient(&m, batch, 7, 3, 1).unwrap())
    };
    let (l1, g1) = run(1);
    let (l4, g4) = run(4);
    assert_eq!(l1.to_bits(), l4.to_bits());
    assert_eq!(g1, g4);
}

#[test]
fn checkpoint_roundtrip_reproduces_scores() {
    let (vocab, examples) = data(40, 12);
    let (train_set, val_set) = examples.split_at(30);
    let cfg = TrainConfig {
        lr: 0.003,
        batch_size: 8,
        epochs: 2,
        seed: 12,
        ..TrainConfig::default()
    };
    let out = train(model(&vocab, 12, true), &vocab, train_set, val_set, &cfg).unwrap();
    assert_eq!(out.log.len(), 2);
    let ck = out.selected();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.vocab, ck.vocab);
    assert_eq!(back.model.store.tensors(), ck.model.store.tensors());
    let before = evaluate(&ck.model, val_set, Task::Ku4).unwrap();
    let after = evaluate(&back.model, val_set, Task::Ku4).unwrap();
    assert_eq!(before.micro_f1, after.micro_f1);
    assert_eq!(before.confusion, after.confusion);
    assert_eq!(Some(&before.micro_f1), out.best.as_ref().map(|b| &b.2));
}

#[test]
fn training_twice_gives_identical_weights() {
    let (vocab, examples) = data(20, 5);
    let (train_set, val_set) = examples.split_at(15);
    let cfg = TrainConfig {
        lr: 0.003,
        batch_size: 4,
        epochs: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let mut cfg_model = config(true);
    cfg_model.dropout = 0.2;
    let run = || {
        let m = Asim::new(cfg_model.clone(), &EmbeddingTable::random(vocab.len(), 8, 0.5, 5), 5).unwrap();
        train(m, &vocab, train_set, val_set, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.last.model.store.tensors(), b.last.model.store.tensors());
    assert_eq!(a.log[0].train_loss.to_bits(), b.log[0].train_loss.to_bits());
}
