//! The fixed architectures trained in this crate and their exact gradients.
//!
//! * [`LanguageModel`]: input layer → recurrent cell → dense(vocab), per-step
//!   softmax cross-entropy.
//! * [`SequenceRegressor`]: embedding → (bi)directional cell → dense(1),
//!   optional logistic squashing, mean squared error.
//! * [`LinearRegressor`]: dense(1) on raw features, mean squared error.
//!
//! Each model doubles as its own gradient container (see [`ParamSet`]).

use super::cells::{Cell, CellState, StepCache};
use super::layers::{DenseParams, EmbeddingTable};
use super::matrix::{sigmoid, Matrix};
use super::params::{prefixed, scale, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    SoftmaxCrossEntropy,
    MeanSquaredError,
}

/// A model with a scalar loss over a batch and exact analytic gradients.
pub trait Differentiable: ParamSet + Clone {
    type Batch: ?Sized;
    const LOSS: Loss;

    fn loss(&self, batch: &Self::Batch) -> Result<f64>;

    /// Loss and `∂loss/∂θ` for every parameter, packed in a value of the
    /// model's own type.
    fn loss_and_grads(&self, batch: &Self::Batch) -> Result<(f64, Self)>;
}

/// Backpropagation (through time, for recurrent models) over one batch.
/// Fails if the loss is not finite.
pub fn backward_pass<M: Differentiable>(model: &M, batch: &M::Batch) -> Result<(f64, M)> {
    let (loss, grads) = model.loss_and_grads(batch)?;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("loss is {loss}")));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputLayer {
    Embedding(EmbeddingTable),
    OneHot { vocab_size: usize },
}

impl InputLayer {
    pub fn vocab_size(&self) -> usize {
        match self {
            InputLayer::Embedding(e) => e.vocab_size(),
            InputLayer::OneHot { vocab_size } => *vocab_size,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputLayer::Embedding(e) => e.dim(),
            InputLayer::OneHot { vocab_size } => *vocab_size,
        }
    }

    pub fn encode(&self, id: usize) -> Vec<f64> {
        match self {
            InputLayer::Embedding(e) => e.lookup(id).to_vec(),
            InputLayer::OneHot { vocab_size } => {
                let mut v = vec![0.0; *vocab_size];
                v[id] = 1.0;
                v
            }
        }
    }

    fn backward(&self, id: usize, dx: &[f64], grads: &mut InputLayer) {
        if let (InputLayer::Embedding(e), InputLayer::Embedding(g)) = (self, grads) {
            e.backward(id, dx, g);
        }
    }
}

impl ParamSet for InputLayer {
    fn params(&self) -> Vec<(String, &Matrix)> {
        match self {
            InputLayer::Embedding(e) => prefixed("embedding", e.params()),
            InputLayer::OneHot { .. } => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            InputLayer::Embedding(e) => e.params_mut(),
            InputLayer::OneHot { .. } => Vec::new(),
        }
    }
}

/// One training window for the language model: `inputs[t]` predicts
/// `targets[t]`. `init` carries state from a previous window (gradients are
/// not propagated into it).
#[derive(Debug, Clone, PartialEq)]
pub struct LmSequence {
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub init: Option<CellState>,
}

#[derive(Debug, Clone)]
pub struct LmPass {
    pub loss_sum: f64,
    pub count: usize,
    /// Gradients of the mean loss, when requested.
    pub grads: Option<LanguageModel>,
    pub final_states: Vec<CellState>,
}

impl LmPass {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    pub input: InputLayer,
    pub cell: Cell,
    pub head: DenseParams,
}

fn log_softmax_at(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let nll = -(logits[target] - max - sum.ln());
    (nll, probs)
}

impl LanguageModel {
    pub fn vocab_size(&self) -> usize {
        self.head.output_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.cell.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        self.head.validate()?;
        if self.input.dim() != self.cell.input_dim() {
            return Err(Error::Shape(format!(
                "input layer dim {} != cell input dim {}",
                self.input.dim(),
                self.cell.input_dim()
            )));
        }
        if self.head.input_dim() != self.cell.hidden_dim() {
            return Err(Error::Shape(format!(
                "output projection input {} != hidden dim {}",
                self.head.input_dim(),
                self.cell.hidden_dim()
            )));
        }
        if self.head.output_dim() != self.input.vocab_size() {
            return Err(Error::Shape(format!(
                "output projection rows {} != vocab size {}",
                self.head.output_dim(),
                self.input.vocab_size()
            )));
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        let v = self.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&id| id >= v) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {v}")));
        }
        Ok(())
    }

    /// Hidden states for a token sequence, starting from the zero state.
    pub fn hidden_states(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        if ids.is_empty() {
            return Err(Error::Empty("token sequence".into()));
        }
        self.check_ids(ids)?;
        let mut state = self.cell.zero_state();
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            state = self.cell.step(&self.input.encode(id), &state);
            out.push(state.h.clone());
        }
        Ok(out)
    }

    pub fn forward_backward(&self, batch: &[LmSequence], with_grads: bool) -> Result<LmPass> {
        if batch.is_empty() {
            return Err(Error::Empty("language-model batch".into()));
        }
        let mut grads = with_grads.then(|| self.zeroed());
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        let mut final_states = Vec::with_capacity(batch.len());

        for seq in batch {
            if seq.inputs.len() != seq.targets.len() {
                return Err(Error::Shape(format!(
                    "{} inputs but {} targets",
                    seq.inputs.len(),
                    seq.targets.len()
                )));
            }
            self.check_ids(&seq.inputs)?;
            self.check_ids(&seq.targets)?;
            let mut state = match &seq.init {
                Some(s) => {
                    self.cell.check_state(s)?;
                    s.clone()
                }
                None => self.cell.zero_state(),
            };

            let mut caches: Vec<StepCache> = Vec::with_capacity(seq.inputs.len());
            let mut hs: Vec<Vec<f64>> = Vec::with_capacity(seq.inputs.len());
            let mut dlogits: Vec<Vec<f64>> = Vec::with_capacity(seq.inputs.len());
            for (&id, &target) in seq.inputs.iter().zip(&seq.targets) {
                let x = self.input.encode(id);
                let (next, cache) = self.cell.step_cached(&x, &state);
                let logits = self.head.forward(&next.h);
                let (nll, mut probs) = log_softmax_at(&logits, target);
                loss_sum += nll;
                count += 1;
                if with_grads {
                    probs[target] -= 1.0;
                    dlogits.push(probs);
                    caches.push(cache);
                    hs.push(next.h.clone());
                }
                state = next;
            }
            final_states.push(state);

            if let Some(g) = grads.as_mut() {
                let mut d_state = self.cell.zero_state();
                for t in (0..caches.len()).rev() {
                    let mut dh = self.head.backward(&hs[t], &dlogits[t], &mut g.head);
                    for (a, b) in dh.iter_mut().zip(&d_state.h) {
                        *a += b;
                    }
                    let d_next = CellState { h: dh, c: d_state.c };
                    let mut dx = vec![0.0; self.cell.input_dim()];
                    d_state = self.cell.backward_step(&caches[t], &d_next, &mut g.cell, &mut dx);
                    self.input.backward(seq.inputs[t], &dx, &mut g.input);
                }
            }
        }

        if count == 0 {
            return Err(Error::Empty("language-model batch has no target positions".into()));
        }
        if let Some(g) = grads.as_mut() {
            scale(g, 1.0 / count as f64);
        }
        Ok(LmPass {
            loss_sum,
            count,
            grads,
            final_states,
        })
    }
}

impl ParamSet for LanguageModel {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = prefixed("input", self.input.params());
        v.extend(prefixed("cell", self.cell.params()));
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.input.params_mut();
        v.extend(self.cell.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

impl Differentiable for LanguageModel {
    type Batch = [LmSequence];
    const LOSS: Loss = Loss::SoftmaxCrossEntropy;

    fn loss(&self, batch: &[LmSequence]) -> Result<f64> {
        Ok(self.forward_backward(batch, false)?.mean_loss())
    }

    fn loss_and_grads(&self, batch: &[LmSequence]) -> Result<(f64, Self)> {
        let pass = self.forward_backward(batch, true)?;
        let loss = pass.mean_loss();
        Ok((loss, pass.grads.expect("gradients requested")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionExample {
    pub tokens: Vec<usize>,
    pub target: f64,
    /// Per-example loss weight (1.0 for ordinary training).
    pub weight: f64,
}

impl RegressionExample {
    pub fn new(tokens: Vec<usize>, target: f64) -> Self {
        RegressionExample {
            tokens,
            target,
            weight: 1.0,
        }
    }
}

/// Embedding → recurrent encoder → dense(1). With a backward cell the head
/// sees `concat(forward state at the last token, backward state at the first
/// token)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRegressor {
    pub embedding: EmbeddingTable,
    pub forward: Cell,
    pub backward: Option<Cell>,
    pub head: DenseParams,
    /// Apply the logistic function to the head output.
    pub squash: bool,
}

struct EncoderTrace {
    caches: Vec<StepCache>,
    final_h: Vec<f64>,
}

fn encode_traced(cell: &Cell, xs: &[Vec<f64>]) -> EncoderTrace {
    let mut state = cell.zero_state();
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        let (next, cache) = cell.step_cached(x, &state);
        caches.push(cache);
        state = next;
    }
    EncoderTrace {
        caches,
        final_h: state.h,
    }
}

/// BPTT from a gradient on the final hidden state; returns `∂L/∂x_t` per step.
fn encoder_backward(cell: &Cell, trace: &EncoderTrace, d_final_h: &[f64], grads: &mut Cell) -> Vec<Vec<f64>> {
    let mut d_state = CellState {
        h: d_final_h.to_vec(),
        c: cell.zero_state().c,
    };
    let mut dxs = vec![Vec::new(); trace.caches.len()];
    for t in (0..trace.caches.len()).rev() {
        let mut dx = vec![0.0; cell.input_dim()];
        d_state = cell.backward_step(&trace.caches[t], &d_state, grads, &mut dx);
        dxs[t] = dx;
    }
    dxs
}

impl SequenceRegressor {
    pub fn feature_dim(&self) -> usize {
        self.forward.hidden_dim() + self.backward.as_ref().map_or(0, Cell::hidden_dim)
    }

    pub fn validate(&self) -> Result<()> {
        self.forward.validate()?;
        self.head.validate()?;
        if let Some(b) = &self.backward {
            b.validate()?;
            if b.input_dim() != self.embedding.dim() {
                return Err(Error::Shape("backward cell input dim != embedding dim".into()));
            }
        }
        if self.forward.input_dim() != self.embedding.dim() {
            return Err(Error::Shape(format!(
                "forward cell input dim {} != embedding dim {}",
                self.forward.input_dim(),
                self.embedding.dim()
            )));
        }
        if self.head.input_dim() != self.feature_dim() || self.head.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "head must be {}→1, got {}→{}",
                self.feature_dim(),
                self.head.input_dim(),
                self.head.output_dim()
            )));
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence".into()));
        }
        let v = self.embedding.vocab_size();
        if let Some(&bad) = tokens.iter().find(|&&id| id >= v) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {v}")));
        }
        Ok(())
    }

    pub fn predict(&self, tokens: &[usize]) -> Result<f64> {
        self.check_tokens(tokens)?;
        let xs: Vec<Vec<f64>> = tokens.iter().map(|&t| self.embedding.lookup(t).to_vec()).collect();
        let mut feature = run_final(&self.forward, xs.iter());
        if let Some(b) = &self.backward {
            feature.extend(run_final(b, xs.iter().rev()));
        }
        let out = self.head.forward(&feature)[0];
        Ok(if self.squash { sigmoid(out) } else { out })
    }

    fn forward_backward(&self, batch: &[RegressionExample], with_grads: bool) -> Result<(f64, Option<Self>)> {
        if batch.is_empty() {
            return Err(Error::Empty("regression batch".into()));
        }
        let n = batch.len() as f64;
        let mut grads = with_grads.then(|| self.zeroed());
        let mut loss = 0.0;
        for ex in batch {
            self.check_tokens(&ex.tokens)?;
            let xs: Vec<Vec<f64>> = ex.tokens.iter().map(|&t| self.embedding.lookup(t).to_vec()).collect();
            let fwd = encode_traced(&self.forward, &xs);
            let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
            let bwd = self.backward.as_ref().map(|c| encode_traced(c, &rev));
            let mut feature = fwd.final_h.clone();
            if let Some(b) = &bwd {
                feature.extend_from_slice(&b.final_h);
            }
            let out = self.head.forward(&feature)[0];
            let pred = if self.squash { sigmoid(out) } else { out };
            let err = pred - ex.target;
            loss += ex.weight * err * err / n;

            if let Some(g) = grads.as_mut() {
                let dpred = 2.0 * ex.weight * err / n;
                let dout = if self.squash { dpred * pred * (1.0 - pred) } else { dpred };
                let dfeature = self.head.backward(&feature, &[dout], &mut g.head);
                let hf = self.forward.hidden_dim();
                let dxs = encoder_backward(&self.forward, &fwd, &dfeature[..hf], &mut g.forward);
                for (&tok, dx) in ex.tokens.iter().zip(&dxs) {
                    self.embedding.backward(tok, dx, &mut g.embedding);
                }
                if let (Some(cell), Some(trace), Some(gcell)) = (&self.backward, &bwd, g.backward.as_mut()) {
                    let dxs = encoder_backward(cell, trace, &dfeature[hf..], gcell);
                    for (&tok, dx) in ex.tokens.iter().rev().zip(&dxs) {
                        self.embedding.backward(tok, dx, &mut g.embedding);
                    }
                }
            }
        }
        Ok((loss, grads))
    }
}

fn run_final<'a>(cell: &Cell, xs: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut state = cell.zero_state();
    for x in xs {
        state = cell.step(x, &state);
    }
    state.h
}

impl ParamSet for SequenceRegressor {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = prefixed("embedding", self.embedding.params());
        v.extend(prefixed("forward", self.forward.params()));
        if let Some(b) = &self.backward {
            v.extend(prefixed("backward", b.params()));
        }
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.embedding.params_mut();
        v.extend(self.forward.params_mut());
        if let Some(b) = self.backward.as_mut() {
            v.extend(b.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }
}

impl Differentiable for SequenceRegressor {
    type Batch = [RegressionExample];
    const LOSS: Loss = Loss::MeanSquaredError;

    fn loss(&self, batch: &[RegressionExample]) -> Result<f64> {
        Ok(self.forward_backward(batch, false)?.0)
    }

    fn loss_and_grads(&self, batch: &[RegressionExample]) -> Result<(f64, Self)> {
        let (loss, grads) = self.forward_backward(batch, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }
}

/// `y = w·x + b` with mean squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegressor {
    pub dense: DenseParams,
}

impl LinearRegressor {
    fn forward_backward(&self, batch: &[(Vec<f64>, f64)], with_grads: bool) -> Result<(f64, Option<Self>)> {
        if batch.is_empty() {
            return Err(Error::Empty("regression batch".into()));
        }
        let n = batch.len() as f64;
        let mut grads = with_grads.then(|| self.zeroed());
        let mut loss = 0.0;
        for (x, y) in batch {
            let pred = self.dense.try_forward(x)?[0];
            let err = pred - y;
            loss += err * err / n;
            if let Some(g) = grads.as_mut() {
                self.dense.backward(x, &[2.0 * err / n], &mut g.dense);
            }
        }
        Ok((loss, grads))
    }
}

impl ParamSet for LinearRegressor {
    fn params(&self) -> Vec<(String, &Matrix)> {
        prefixed("dense", self.dense.params())
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.dense.params_mut()
    }
}

impl Differentiable for LinearRegressor {
    type Batch = [(Vec<f64>, f64)];
    const LOSS: Loss = Loss::MeanSquaredError;

    fn loss(&self, batch: &[(Vec<f64>, f64)]) -> Result<f64> {
        Ok(self.forward_backward(batch, false)?.0)
    }

    fn loss_and_grads(&self, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Self)> {
        let (loss, grads) = self.forward_backward(batch, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }
}
