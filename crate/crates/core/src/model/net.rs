use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::AsimConfig;
use crate::autodiff::{softmax, BiLstm, Bound, Dense, Graph, LstmVars, ParamId, ParamStore, Tensor, Var};
use crate::embeddings::{EmbeddingTable, PAD};
use crate::error::{Error, Result};
use crate::text::KnowledgeUnit;

/// Whether dropout is active for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

/// Dropout state threaded through one forward pass.
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn new(rate: f64, mode: Mode) -> Self {
        let rng = match mode {
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Mode::Eval => None,
        };
        Dropout { rate, rng }
    }

    pub fn eval() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn apply(&mut self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        match &mut self.rng {
            Some(rng) => g.dropout(x, self.rate, true, rng),
            None => Ok(x),
        }
    }
}

/// The four fusion networks.
#[derive(Debug, Clone, Copy)]
pub struct Fusion {
    pub concat: Dense,
    pub difference: Dense,
    pub product: Dense,
    pub merge: Dense,
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: ParamId,
    encoder: BiLstm,
    attention_input: Option<Dense>,
    fusion: Option<Fusion>,
    projection: Option<Dense>,
    composer: BiLstm,
    hidden: Vec<Dense>,
    output: Dense,
}

/// ASIM network: configuration plus every parameter tensor.
#[derive(Debug, Clone)]
pub struct Asim {
    pub config: AsimConfig,
    pub store: ParamStore,
    layout: Layout,
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub logits: Var,
    pub attention: Option<AttentionNodes>,
    pub pooled_x: Var,
    pub pooled_y: Var,
    pub features: Var,
}

/// Raw scores `E` and both row-normalized alignment matrices.
#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub scores: Var,
    pub weights_x: Var,
    pub weights_y: Var,
    pub x_hat: Var,
    pub y_hat: Var,
}

/// Values recorded by [`Asim::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Attention scores (n×m), absent when attention is ablated.
    pub attention: Option<Tensor>,
    /// Row-softmaxed alignment of x over y (n×m).
    pub weights_x: Option<Tensor>,
    /// Row-softmaxed alignment of y over x (m×n).
    pub weights_y: Option<Tensor>,
    pub pooled_x: Tensor,
    pub pooled_y: Tensor,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Padding mask of a token-id sequence.
pub fn mask_of(ids: &[usize]) -> Vec<bool> {
    ids.iter().map(|&id| id != PAD).collect()
}

/// Scores `E = X·Yᵀ`, alignments softmax(E/√k) in both directions and the
/// aligned representations `X̂ = e_X·Y`, `Ŷ = e_Y·X`.
pub fn inter_attention(g: &mut Graph<'_>, x: Var, y: Var, mask_x: &[bool], mask_y: &[bool]) -> Result<AttentionNodes> {
    let k = g.value(x).cols();
    if g.value(y).cols() != k {
        return Err(Error::dim("inter_attention", g.shape(x), g.shape(y)));
    }
    let yt = g.transpose(y);
    let scores = g.matmul(x, yt)?;
    let weights_x = g.scaled_softmax_rows(scores, k, mask_y)?;
    let st = g.transpose(scores);
    let weights_y = g.scaled_softmax_rows(st, k, mask_x)?;
    let x_hat = g.matmul(weights_x, y)?;
    let y_hat = g.matmul(weights_y, x)?;
    Ok(AttentionNodes {
        scores,
        weights_x,
        weights_y,
        x_hat,
        y_hat,
    })
}

fn relu_dense(g: &mut Graph<'_>, bound: &Bound, layer: &Dense, x: Var, drop: &mut Dropout) -> Result<Var> {
    let z = layer.forward(g, bound, x)?;
    let a = g.relu(z);
    drop.apply(g, a)
}

/// `F([F1([X;X̂]); F2([X;X−X̂]); F3([X;X∘X̂])])`
pub fn fuse(g: &mut Graph<'_>, bound: &Bound, f: &Fusion, x: Var, x_hat: Var, drop: &mut Dropout) -> Result<Var> {
    let diff = g.sub(x, x_hat)?;
    let prod = g.mul(x, x_hat)?;
    let in1 = g.concat_cols(&[x, x_hat])?;
    let in2 = g.concat_cols(&[x, diff])?;
    let in3 = g.concat_cols(&[x, prod])?;
    let o1 = relu_dense(g, bound, &f.concat, in1, drop)?;
    let o2 = relu_dense(g, bound, &f.difference, in2, drop)?;
    let o3 = relu_dense(g, bound, &f.product, in3, drop)?;
    let merged = g.concat_cols(&[o1, o2, o3])?;
    relu_dense(g, bound, &f.merge, merged, drop)
}

impl Asim {
    /// Fresh parameters drawn from `seed`; the embedding rows come from `table`.
    pub fn new(config: AsimConfig, table: &EmbeddingTable, seed: u64) -> Result<Self> {
        config.validate()?;
        if table.dim() != config.embed_dim {
            return Err(Error::Config(format!(
                "embedding table has dimension {}, config expects {}",
                table.dim(),
                config.embed_dim
            )));
        }
        if table.len() < 2 {
            return Err(Error::EmptyVocab);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (d, h, k) = (config.embed_dim, config.hidden, config.k());
        let embedding = store.add("embedding", table.vectors.clone(), config.train_embeddings);
        let encoder = BiLstm::new(&mut store, "encoder", d, h, &mut rng);
        let (mut attention_input, mut fusion, mut projection) = (None, None, None);
        if config.use_attention {
            if config.use_shortcuts {
                attention_input = Some(Dense::new(&mut store, "attention_input", d + k, k, &mut rng));
            }
            if config.use_fusion {
                fusion = Some(Fusion {
                    concat: Dense::new(&mut store, "fusion.f1", 2 * k, k, &mut rng),
                    difference: Dense::new(&mut store, "fusion.f2", 2 * k, k, &mut rng),
                    product: Dense::new(&mut store, "fusion.f3", 2 * k, k, &mut rng),
                    merge: Dense::new(&mut store, "fusion.f", 3 * k, k, &mut rng),
                });
            } else {
                projection = Some(Dense::new(&mut store, "fusion.concat_projection", 2 * k, k, &mut rng));
            }
        }
        let composer_in = if config.use_shortcuts { k + d } else { k };
        let composer = BiLstm::new(&mut store, "composer", composer_in, h, &mut rng);
        let mut width = 4 * k;
        let mut hidden = Vec::new();
        for (i, &w) in config.prediction_hidden_dims.iter().enumerate() {
            hidden.push(Dense::new(&mut store, &format!("prediction.hidden{i}"), width, w, &mut rng));
            width = w;
        }
        let output = Dense::new(&mut store, "prediction.output", width, config.num_classes, &mut rng);
        Ok(Asim {
            config,
            store,
            layout: Layout {
                embedding,
                encoder,
                attention_input,
                fusion,
                projection,
                composer,
                hidden,
                output,
            },
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.store.get(self.layout.embedding).rows()
    }

    pub fn embedding(&self) -> &Tensor {
        self.store.get(self.layout.embedding)
    }

    pub fn embedding_id(&self) -> ParamId {
        self.layout.embedding
    }

    pub fn composer_input_dim(&self) -> usize {
        self.layout.composer.input_dim()
    }

    pub fn fusion(&self) -> Option<Fusion> {
        self.layout.fusion
    }

    /// Bidirectional encoding of one side: returns (embeddings, encoder output).
    fn encode(
        &self,
        g: &mut Graph<'_>,
        bound: &Bound,
        enc: &(LstmVars, LstmVars),
        ids: &[usize],
        mask: &[bool],
        drop: &mut Dropout,
    ) -> Result<(Var, Var)> {
        let emb = g.gather_rows(bound[self.layout.embedding], ids, Some(PAD))?;
        let out = BiLstm::run(g, enc, emb, mask)?;
        let out = drop.apply(g, out)?;
        Ok((emb, out))
    }

    fn attention_input(&self, g: &mut Graph<'_>, bound: &Bound, emb: Var, enc: Var) -> Result<Var> {
        match &self.layout.attention_input {
            Some(layer) => {
                let joined = g.concat_cols(&[emb, enc])?;
                layer.forward(g, bound, joined)
            }
            None => Ok(enc),
        }
    }

    fn merge_aligned(&self, g: &mut Graph<'_>, bound: &Bound, a: Var, a_hat: Var, drop: &mut Dropout) -> Result<Var> {
        match (&self.layout.fusion, &self.layout.projection) {
            (Some(f), _) => fuse(g, bound, f, a, a_hat, drop),
            (None, Some(p)) => {
                let joined = g.concat_cols(&[a, a_hat])?;
                let z = p.forward(g, bound, joined)?;
                drop.apply(g, z)
            }
            (None, None) => Err(Error::Config("attention enabled without a fusion stage".into())),
        }
    }

    fn compose(
        &self,
        g: &mut Graph<'_>,
        comp: &(LstmVars, LstmVars),
        fused: Var,
        emb: Var,
        mask: &[bool],
        drop: &mut Dropout,
    ) -> Result<Var> {
        let input = if self.config.use_shortcuts {
            g.concat_cols(&[fused, emb])?
        } else {
            fused
        };
        let out = BiLstm::run(g, comp, input, mask)?;
        drop.apply(g, out)
    }

    /// Builds the full network on `g` with parameters taken from `bound`.
    /// Padding ids are masked out.
    pub fn forward_graph(
        &self,
        g: &mut Graph<'_>,
        bound: &Bound,
        x_ids: &[usize],
        y_ids: &[usize],
        drop: &mut Dropout,
    ) -> Result<ForwardNodes> {
        let (mask_x, mask_y) = (mask_of(x_ids), mask_of(y_ids));
        for mask in [&mask_x, &mask_y] {
            if !mask.iter().any(|&m| m) {
                return Err(Error::DegenerateMask { op: "forward" });
            }
        }
        let vocab = self.vocab_size();
        if let Some(&bad) = x_ids.iter().chain(y_ids).find(|&&id| id >= vocab) {
            return Err(Error::Data(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        let enc = self.layout.encoder.bind(g, bound)?;
        let comp = self.layout.composer.bind(g, bound)?;
        let (emb_x, enc_x) = self.encode(g, bound, &enc, x_ids, &mask_x, drop)?;
        let (emb_y, enc_y) = self.encode(g, bound, &enc, y_ids, &mask_y, drop)?;

        let (fused_x, fused_y, attention) = if self.config.use_attention {
            let a_x = self.attention_input(g, bound, emb_x, enc_x)?;
            let a_y = self.attention_input(g, bound, emb_y, enc_y)?;
            let att = inter_attention(g, a_x, a_y, &mask_x, &mask_y)?;
            let fx = self.merge_aligned(g, bound, a_x, att.x_hat, drop)?;
            let fy = self.merge_aligned(g, bound, a_y, att.y_hat, drop)?;
            (fx, fy, Some(att))
        } else {
            (enc_x, enc_y, None)
        };
        let v_x = self.compose(g, &comp, fused_x, emb_x, &mask_x, drop)?;
        let v_y = self.compose(g, &comp, fused_y, emb_y, &mask_y, drop)?;
        let pooled_x = g.max_over_time(v_x, &mask_x)?;
        let pooled_y = g.max_over_time(v_y, &mask_y)?;
        let diff = g.sub(pooled_x, pooled_y)?;
        let prod = g.mul(pooled_x, pooled_y)?;
        let features = g.concat_cols(&[pooled_x, pooled_y, diff, prod])?;
        let mut z = features;
        for layer in &self.layout.hidden {
            z = relu_dense(g, bound, layer, z, drop)?;
        }
        let logits = self.layout.output.forward(g, bound, z)?;
        Ok(ForwardNodes {
            logits,
            attention,
            pooled_x,
            pooled_y,
            features,
        })
    }

    /// Runs the network on a pair and records the intermediate values.
    pub fn forward(&self, x: &KnowledgeUnit, y: &KnowledgeUnit, mode: Mode) -> Result<ForwardTrace> {
        self.forward_ids(&x.token_ids, &y.token_ids, mode)
    }

    pub fn forward_ids(&self, x_ids: &[usize], y_ids: &[usize], mode: Mode) -> Result<ForwardTrace> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g);
        let mut drop = Dropout::new(self.config.dropout, mode);
        let nodes = self.forward_graph(&mut g, &bound, x_ids, y_ids, &mut drop)?;
        let logits = g.value(nodes.logits).data().to_vec();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        let take = |v: Var| g.value(v).clone();
        Ok(ForwardTrace {
            attention: nodes.attention.map(|a| take(a.scores)),
            weights_x: nodes.attention.map(|a| take(a.weights_x)),
            weights_y: nodes.attention.map(|a| take(a.weights_y)),
            pooled_x: take(nodes.pooled_x),
            pooled_y: take(nodes.pooled_y),
            probs: softmax(&logits),
            logits,
        })
    }

    /// Cross-entropy loss of one example and the gradient of every
    /// trainable parameter (`None` for frozen ones).
    pub fn loss_and_grads(
        &self,
        x_ids: &[usize],
        y_ids: &[usize],
        label: usize,
        mode: Mode,
    ) -> Result<(f64, Vec<Option<Tensor>>)> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g);
        let mut drop = Dropout::new(self.config.dropout, mode);
        let nodes = self.forward_graph(&mut g, &bound, x_ids, y_ids, &mut drop)?;
        let loss = g.cross_entropy(nodes.logits, label)?;
        g.backward(loss)?;
        let value = g.value(loss).item();
        let grads = bound
            .vars()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.store.is_trainable(i) {
                    Some(g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(self.store.tensors()[i].shape())))
                } else {
                    None
                }
            })
            .collect();
        Ok((value, grads))
    }
}
