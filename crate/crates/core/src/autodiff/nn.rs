//! Parameter storage and the layers built from graph primitives.

use std::ops::Index;

use rand::Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    trainable: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.trainable.push(trainable);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.trainable[index]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.trainable[id.0] = trainable;
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Puts every tensor on `g`; frozen ones become constants.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> Bound {
        let vars = self
            .tensors
            .iter()
            .zip(&self.trainable)
            .map(|(t, &train)| if train { g.param(t) } else { g.constant_ref(t) })
            .collect();
        Bound(vars)
    }
}

/// Graph handles for a [`ParamStore`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
pub fn init_weight(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::uniform(&[rows, cols], bound, rng)
}

/// Affine layer `x·W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init_weight(input_dim, output_dim, input_dim, rng),
            true,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[output_dim]), true);
        Dense {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, bound: &Bound, x: Var) -> Result<Var> {
        let xw = g.matmul(x, bound[self.weight])?;
        g.add_row(xw, bound[self.bias])
    }
}

/// Gate order used everywhere: input, forget, candidate, output.
pub const GATES: [&str; 4] = ["input", "forget", "candidate", "output"];
const FORGET: usize = 1;

/// One LSTM direction. Each gate maps `[x; h]` of width
/// `input_dim + hidden_dim` to `hidden_dim`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: [ParamId; 4],
    pub biases: [ParamId; 4],
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        if input_dim == 0 || hidden_dim == 0 {
            panic!("LSTM dimensions must be positive");
        }
        let fan_in = input_dim + hidden_dim;
        let weights = GATES.map(|gate| {
            store.add(
                format!("{name}.{gate}.weight"),
                init_weight(fan_in, hidden_dim, fan_in, rng),
                true,
            )
        });
        let mut i = 0;
        let biases = GATES.map(|gate| {
            let fill = if i == FORGET { 1.0 } else { 0.0 };
            i += 1;
            store.add(format!("{name}.{gate}.bias"), Tensor::filled(&[hidden_dim], fill), true)
        });
        LstmParams {
            input_dim,
            hidden_dim,
            weights,
            biases,
        }
    }

    /// Splits and fuses the gate parameters into input/recurrent blocks.
    pub fn bind(&self, g: &mut Graph<'_>, bound: &Bound) -> Result<LstmVars> {
        let (i, h) = (self.input_dim, self.hidden_dim);
        for w in self.weights {
            let shape = g.shape(bound[w]).to_vec();
            if shape != [i + h, h] {
                return Err(Error::dim("lstm weights", &shape, &[i + h, h]));
            }
        }
        let mut wx = Vec::with_capacity(4);
        let mut wh = Vec::with_capacity(4);
        for w in self.weights {
            wx.push(g.slice_rows(bound[w], 0, i)?);
            wh.push(g.slice_rows(bound[w], i, i + h)?);
        }
        let biases: Vec<Var> = self.biases.iter().map(|&b| bound[b]).collect();
        Ok(LstmVars {
            input_dim: i,
            hidden_dim: h,
            w_input: g.concat_cols(&wx)?,
            w_hidden: g.concat_cols(&wh)?,
            bias: g.concat_cols(&biases)?,
        })
    }
}

/// Bound LSTM weights with the four gates laid side by side.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub input_dim: usize,
    pub hidden_dim: usize,
    w_input: Var,
    w_hidden: Var,
    bias: Var,
}

/// Applies the gates given the input pre-activation (`x·W_x + b`).
fn lstm_cell(g: &mut Graph<'_>, pre_x: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let h = p.hidden_dim;
    let rec = g.matmul(h_prev, p.w_hidden)?;
    let pre = g.add(pre_x, rec)?;
    let i_pre = g.slice_cols(pre, 0, h)?;
    let f_pre = g.slice_cols(pre, h, 2 * h)?;
    let c_pre = g.slice_cols(pre, 2 * h, 3 * h)?;
    let o_pre = g.slice_cols(pre, 3 * h, 4 * h)?;
    let i_gate = g.sigmoid(i_pre);
    let f_gate = g.sigmoid(f_pre);
    let cand = g.tanh(c_pre);
    let o_gate = g.sigmoid(o_pre);
    let keep = g.mul(f_gate, c_prev)?;
    let write = g.mul(i_gate, cand)?;
    let c = g.add(keep, write)?;
    let c_act = g.tanh(c);
    let h_new = g.mul(o_gate, c_act)?;
    Ok((h_new, c))
}

/// One LSTM time step. `x_t`, `h_prev` and `c_prev` must share a rank
/// (vectors, or single-row matrices).
pub fn lstm_step(g: &mut Graph<'_>, x_t: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let (xs, hs, cs) = (g.value(x_t).dims2(), g.value(h_prev).dims2(), g.value(c_prev).dims2());
    if xs != (1, p.input_dim) || hs != (1, p.hidden_dim) || cs != hs {
        return Err(Error::dim("lstm_step", g.shape(x_t), g.shape(h_prev)));
    }
    let xw = g.matmul(x_t, p.w_input)?;
    let pre_x = g.add_row(xw, p.bias)?;
    lstm_cell(g, pre_x, h_prev, c_prev, p)
}

/// Runs one direction over an (n×input_dim) sequence. Masked steps are
/// skipped: the state passes through unchanged and the output row is zero.
pub fn lstm_sequence(g: &mut Graph<'_>, x: Var, mask: &[bool], p: &LstmVars, reverse: bool) -> Result<Var> {
    let (n, d) = g.value(x).dims2();
    if d != p.input_dim || mask.len() != n || g.shape(x).len() != 2 {
        return Err(Error::dim("lstm_sequence", g.shape(x), &[mask.len(), p.input_dim]));
    }
    let h = p.hidden_dim;
    let xw = g.matmul(x, p.w_input)?;
    let proj = g.add_row(xw, p.bias)?;
    let mut h_state = g.constant(Tensor::zeros(&[1, h]));
    let mut c_state = g.constant(Tensor::zeros(&[1, h]));
    let zero_row = g.constant(Tensor::zeros(&[1, h]));
    let mut outputs = vec![zero_row; n];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for t in order {
        if !mask[t] {
            continue;
        }
        let pre_x = g.slice_rows(proj, t, t + 1)?;
        let (h_new, c_new) = lstm_cell(g, pre_x, h_state, c_state, p)?;
        outputs[t] = h_new;
        h_state = h_new;
        c_state = c_new;
    }
    g.stack_rows(&outputs)
}

/// Forward and backward LSTMs whose outputs are concatenated per step.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            forward: LstmParams::new(store, &format!("{name}.fwd"), input_dim, hidden_dim, rng),
            backward: LstmParams::new(store, &format!("{name}.bwd"), input_dim, hidden_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden_dim
    }

    pub fn bind(&self, g: &mut Graph<'_>, bound: &Bound) -> Result<(LstmVars, LstmVars)> {
        Ok((self.forward.bind(g, bound)?, self.backward.bind(g, bound)?))
    }

    pub fn run(g: &mut Graph<'_>, vars: &(LstmVars, LstmVars), x: Var, mask: &[bool]) -> Result<Var> {
        let fwd = lstm_sequence(g, x, mask, &vars.0, false)?;
        let bwd = lstm_sequence(g, x, mask, &vars.1, true)?;
        g.concat_cols(&[fwd, bwd])
    }
}
