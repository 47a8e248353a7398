//! Set-regression networks.
//!
//! Every model embeds each instance with a learned layer, encodes it with the
//! MLP `enc` and decodes with the MLP `dec` (last layer linear). The families
//! differ in how instances are combined:
//!
//! * `DeepSet`: `Z = sum_i enc(x_i)`, `Y = dec(Z)`.
//! * `Attention`: `Z = sum_i a_i enc(x_i)` with softmax weights from
//!   `B tanh(A x_i + a) + b`, `Y = dec(Z)`.
//! * `RNN`/`LSTM`/`GRU`: the cell reads `enc(x_i)` in order from a zero
//!   state. The baseline decodes the final state once. The capacity variant
//!   decodes every state into an intermediate `|dec(h_i)|` and predicts their
//!   sum, so it has exactly the parameters of its baseline.

mod cells;
mod spec;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{init_rng, uniform_init, Activation, ParamStore, Tape, Tensor, TensorError, Var};

pub use spec::{Family, ModelSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("empty bag")]
    EmptyBag,
    #[error("instance has {got} features, model expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("batched bags must share one length")]
    RaggedBatch,
    #[error("parameters do not match the model: {0}")]
    Params(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Result of running a model on one bag.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub prediction: f64,
    /// Per-instance added values, in input order. Empty for non-capacity
    /// models.
    pub intermediates: Vec<f64>,
    /// Recurrent state after each instance (sequential families only).
    pub latents: Option<Vec<Vec<f64>>>,
}

/// Handles to the outputs of a batched forward pass on a tape.
#[derive(Clone, Debug)]
pub struct TapeOutput {
    /// `[batch]`
    pub prediction: Var,
    /// `[len, batch]`, capacity models only.
    pub intermediates: Option<Var>,
    /// One `[batch, hidden]` state per step, sequential families only.
    pub states: Vec<Var>,
}

/// An architecture together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParamStore,
}

fn layer(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) {
    store.insert(format!("{name}.w"), uniform_init(rng, &[fan_in, fan_out], fan_in));
    store.insert(format!("{name}.b"), uniform_init(rng, &[fan_out], fan_in));
}

/// Parameter paths and shapes of a model, in creation order.
fn layout(spec: &ModelSpec) -> Vec<(String, usize, usize)> {
    let (e, d) = (spec.embed_dim, spec.hidden_dim);
    let mut layers = vec![("embed".to_string(), spec.input_dim, e)];
    for l in 0..spec.enc_layers {
        layers.push((format!("enc.{l}"), if l == 0 { e } else { d }, d));
    }
    match spec.family {
        Family::DeepSet => {}
        Family::Attention => {
            layers.push(("attn.inner".into(), e, d));
            layers.push(("attn.outer".into(), d, 1));
        }
        Family::Rnn => layers.push(("cell".into(), 2 * d, d)),
        Family::Gru => {
            layers.push(("cell.gates".into(), 2 * d, 2 * d));
            layers.push(("cell.cand".into(), 2 * d, d));
        }
        Family::Lstm => layers.push(("cell".into(), 2 * d, 4 * d)),
    }
    for l in 0..spec.dec_layers {
        let out = if l + 1 == spec.dec_layers { 1 } else { d };
        layers.push((format!("dec.{l}"), d, out));
    }
    layers
}

impl Model {
    /// Builds a model with weights drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = init_rng(seed);
        let mut params = ParamStore::new(seed);
        for (name, fan_in, fan_out) in layout(&spec) {
            layer(&mut params, &mut rng, &name, fan_in, fan_out);
        }
        Ok(Self { spec, params })
    }

    /// Wraps existing parameters, checking they match `spec` exactly.
    pub fn from_params(spec: ModelSpec, params: ParamStore) -> Result<Self, ModelError> {
        spec.validate()?;
        let expected = layout(&spec);
        if params.len() != 2 * expected.len() {
            return Err(ModelError::Params(format!(
                "expected {} tensors, found {}",
                2 * expected.len(),
                params.len()
            )));
        }
        for (name, fan_in, fan_out) in expected {
            for (path, shape) in [
                (format!("{name}.w"), vec![fan_in, fan_out]),
                (format!("{name}.b"), vec![fan_out]),
            ] {
                match params.get(&path) {
                    Some(t) if t.shape() == shape.as_slice() => {}
                    Some(t) => {
                        return Err(ModelError::Params(format!(
                            "{path} has shape {:?}, expected {shape:?}",
                            t.shape()
                        )))
                    }
                    None => return Err(ModelError::Params(format!("missing {path}"))),
                }
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn dense(&self, tape: &mut Tape, name: &str, x: Var) -> Result<Var, ModelError> {
        let w = tape.param(&self.params, &format!("{name}.w"))?;
        let b = tape.param(&self.params, &format!("{name}.b"))?;
        Ok(tape.linear(x, w, b)?)
    }

    fn embed(&self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        let e = self.dense(tape, "embed", x)?;
        Ok(tape.activation(Activation::Relu, e))
    }

    /// Encoder MLP over embedded instances, ReLU after every layer.
    fn encode(&self, tape: &mut Tape, embedded: Var) -> Result<Var, ModelError> {
        let mut h = embedded;
        for l in 0..self.spec.enc_layers {
            h = self.dense(tape, &format!("enc.{l}"), h)?;
            h = tape.activation(Activation::Relu, h);
        }
        Ok(h)
    }

    /// Decoder MLP: ReLU between layers, linear output of width 1.
    pub(crate) fn decode(&self, tape: &mut Tape, z: Var) -> Result<Var, ModelError> {
        let mut h = z;
        for l in 0..self.spec.dec_layers {
            h = self.dense(tape, &format!("dec.{l}"), h)?;
            if l + 1 < self.spec.dec_layers {
                h = tape.activation(Activation::Relu, h);
            }
        }
        Ok(h)
    }

    /// Stacks the features of equally long bags into one matrix. Sequential
    /// families use step-major rows (`t * batch + b`), the others bag-major
    /// rows (`b * len + t`).
    fn stack(&self, bags: &[&[&[f64]]]) -> Result<(Tensor, usize), ModelError> {
        let len = bags.first().map_or(0, |b| b.len());
        if bags.iter().any(|b| b.len() != len) {
            return Err(ModelError::RaggedBatch);
        }
        let dim = self.spec.input_dim;
        let batch = bags.len();
        let mut data = vec![0.0; batch * len * dim];
        for (b, bag) in bags.iter().enumerate() {
            for (t, x) in bag.iter().enumerate() {
                if x.len() != dim {
                    return Err(ModelError::InputDim {
                        expected: dim,
                        got: x.len(),
                    });
                }
                let row = if self.spec.family.is_sequential() {
                    t * batch + b
                } else {
                    b * len + t
                };
                data[row * dim..(row + 1) * dim].copy_from_slice(x);
            }
        }
        Ok((Tensor::new(vec![batch * len, dim], data)?, len))
    }

    /// Records a batched forward pass over non-empty bags of equal length.
    pub fn forward_tape(&self, tape: &mut Tape, bags: &[&[&[f64]]]) -> Result<TapeOutput, ModelError> {
        let (features, len) = self.stack(bags)?;
        if len == 0 || bags.is_empty() {
            return Err(ModelError::EmptyBag);
        }
        let batch = bags.len();
        let d = self.spec.hidden_dim;
        let x = tape.constant(features);
        match self.spec.family {
            Family::DeepSet => {
                let e = self.embed(tape, x)?;
                let enc = self.encode(tape, e)?;
                let enc = tape.reshape(enc, vec![batch, len, d])?;
                let z = tape.reduce_sum(enc, Some(1))?;
                self.decode_set(tape, z, batch)
            }
            Family::Attention => {
                let e = self.embed(tape, x)?;
                let w = self.attention_weights(tape, e, batch, len)?;
                let enc = self.encode(tape, e)?;
                let col = tape.reshape(w, vec![batch * len])?;
                let weighted = tape.mul_column(enc, col)?;
                let weighted = tape.reshape(weighted, vec![batch, len, d])?;
                let z = tape.reduce_sum(weighted, Some(1))?;
                self.decode_set(tape, z, batch)
            }
            Family::Rnn | Family::Lstm | Family::Gru => self.sequential(tape, x, batch, len),
        }
    }

    /// Softmax attention weights over embedded instances, `[batch, len]`.
    fn attention_weights(&self, tape: &mut Tape, e: Var, batch: usize, len: usize) -> Result<Var, ModelError> {
        let inner = self.dense(tape, "attn.inner", e)?;
        let inner = tape.activation(Activation::Tanh, inner);
        let scores = self.dense(tape, "attn.outer", inner)?;
        let scores = tape.reshape(scores, vec![batch, len])?;
        Ok(tape.softmax_rows(scores)?)
    }

    fn decode_set(&self, tape: &mut Tape, z: Var, batch: usize) -> Result<TapeOutput, ModelError> {
        let y = self.decode(tape, z)?;
        let prediction = tape.reshape(y, vec![batch])?;
        Ok(TapeOutput {
            prediction,
            intermediates: None,
            states: Vec::new(),
        })
    }

    fn sequential(&self, tape: &mut Tape, x: Var, batch: usize, len: usize) -> Result<TapeOutput, ModelError> {
        let d = self.spec.hidden_dim;
        let e = self.embed(tape, x)?;
        let inputs = self.encode(tape, e)?;
        let mut h = tape.constant(Tensor::zeros(&[batch, d]));
        let mut c = tape.constant(Tensor::zeros(&[batch, d]));
        let mut states = Vec::with_capacity(len);
        for t in 0..len {
            let u = tape.slice_rows(inputs, t * batch, batch)?;
            match self.spec.family {
                Family::Rnn => h = cells::rnn_step(self, tape, h, u)?,
                Family::Gru => h = cells::gru_step(self, tape, h, u)?,
                Family::Lstm => (h, c) = cells::lstm_step(self, tape, h, c, u)?,
                Family::DeepSet | Family::Attention => unreachable!("not a recurrent family"),
            }
            states.push(h);
        }

        if !self.spec.capacity {
            let y = self.decode(tape, h)?;
            let prediction = tape.reshape(y, vec![batch])?;
            return Ok(TapeOutput {
                prediction,
                intermediates: None,
                states,
            });
        }

        let all = tape.concat_rows(&states)?;
        let mut y = self.decode(tape, all)?;
        if self.spec.use_abs {
            y = tape.activation(Activation::Abs, y);
        }
        let nu = tape.reshape(y, vec![len, batch])?;
        let prediction = tape.reduce_sum(nu, Some(0))?;
        Ok(TapeOutput {
            prediction,
            intermediates: Some(nu),
            states,
        })
    }

    /// Runs the model on a single bag.
    ///
    /// An empty bag is an error for encoder-decoder models; capacity models
    /// return prediction 0 with no intermediates.
    pub fn forward(&self, bag: &[&[f64]]) -> Result<ForwardOutput, ModelError> {
        if bag.is_empty() {
            return if self.spec.capacity {
                Ok(ForwardOutput {
                    prediction: 0.0,
                    intermediates: Vec::new(),
                    latents: Some(Vec::new()),
                })
            } else {
                Err(ModelError::EmptyBag)
            };
        }
        Ok(self.forward_uniform(&[bag])?.pop().expect("one bag in, one out"))
    }

    /// Attention weights of one non-empty bag, in input order.
    pub fn attention(&self, bag: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
        if self.spec.family != Family::Attention {
            return Err(ModelError::Spec(format!("{} has no attention weights", self.spec.name())));
        }
        let (features, len) = self.stack(&[bag])?;
        if len == 0 {
            return Err(ModelError::EmptyBag);
        }
        let mut tape = Tape::new();
        let x = tape.constant(features);
        let e = self.embed(&mut tape, x)?;
        let w = self.attention_weights(&mut tape, e, 1, len)?;
        Ok(tape.value(w).data().to_vec())
    }

    /// Runs the model on many bags, batching bags of equal length.
    pub fn forward_batch(&self, bags: &[Vec<&[f64]>]) -> Result<Vec<ForwardOutput>, ModelError> {
        let mut out: Vec<Option<ForwardOutput>> = vec![None; bags.len()];
        let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, b) in bags.iter().enumerate() {
            by_len.entry(b.len()).or_default().push(i);
        }
        for (len, idx) in by_len {
            if len == 0 {
                for &i in &idx {
                    out[i] = Some(self.forward(&[])?);
                }
                continue;
            }
            let group: Vec<&[&[f64]]> = idx.iter().map(|&i| bags[i].as_slice()).collect();
            for (i, o) in idx.into_iter().zip(self.forward_uniform(&group)?) {
                out[i] = Some(o);
            }
        }
        Ok(out.into_iter().map(|o| o.expect("every bag visited")).collect())
    }

    fn forward_uniform(&self, bags: &[&[&[f64]]]) -> Result<Vec<ForwardOutput>, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward_tape(&mut tape, bags)?;
        let batch = bags.len();
        let len = bags[0].len();
        let pred = tape.value(out.prediction).data().to_vec();
        let nu = out.intermediates.map(|v| tape.value(v).data().to_vec());
        let states: Vec<&Tensor> = out.states.iter().map(|&s| tape.value(s)).collect();
        let d = self.spec.hidden_dim;
        Ok((0..batch)
            .map(|b| ForwardOutput {
                prediction: pred[b],
                intermediates: nu
                    .as_ref()
                    .map(|nu| (0..len).map(|t| nu[t * batch + b]).collect())
                    .unwrap_or_default(),
                latents: (!states.is_empty())
                    .then(|| states.iter().map(|s| s.data()[b * d..(b + 1) * d].to_vec()).collect()),
            })
            .collect())
    }

    /// Prediction on every prefix `x_1..x_k`, `k = 1..=n`.
    ///
    /// Sequential baselines decode each intermediate state; capacity models
    /// accumulate their intermediates; set models are re-run on each prefix.
    pub fn prefix_predictions(&self, bag: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
        if bag.is_empty() {
            return Err(ModelError::EmptyBag);
        }
        if self.spec.capacity {
            let out = self.forward(bag)?;
            let mut acc = 0.0;
            return Ok(out
                .intermediates
                .iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect());
        }
        if self.spec.family.is_sequential() {
            let mut tape = Tape::new();
            let out = self.forward_tape(&mut tape, &[bag])?;
            let all = tape.concat_rows(&out.states)?;
            let y = self.decode(&mut tape, all)?;
            let mut values = tape.value(y).data().to_vec();
            // The final prefix is the full bag: reuse its exact prediction.
            *values.last_mut().expect("non-empty") = tape.value(out.prediction).data()[0];
            return Ok(values);
        }
        let prefixes: Vec<Vec<&[f64]>> = (1..=bag.len()).map(|k| bag[..k].to_vec()).collect();
        Ok(self
            .forward_batch(&prefixes)?
            .into_iter()
            .map(|o| o.prediction)
            .collect())
    }
}
