//! Fully-connected ReLU classifier with manual backpropagation, SGD and
//! Adam optimizers, and a deterministic multi-task training loop that pairs
//! one in-domain minibatch with one OOD minibatch per step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{combined_loss, LossConfig, LossError};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("layer_dims needs at least 2 entries, all positive: {0:?}")]
    BadDims(Vec<usize>),
    #[error("input dimension {got} does not match layer_dims[0] = {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("empty in-domain training set")]
    EmptyTrainingSet,
    #[error("objective became NaN at epoch {epoch}")]
    NanObjective { epoch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Per-layer dense weights (row-major, out_dim x in_dim) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Cached pre- and post-activation values from a forward pass.
pub struct ForwardCache {
    /// inputs[l] is the batch fed into layer l (post-activation of l-1).
    inputs: Vec<Vec<Vec<f64>>>,
}

/// Gradients shaped like the model parameters.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, NetworkError> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(NetworkError::BadDims(layer_dims.to_vec()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
            weights.push((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Batch forward pass; hidden layers use ReLU, the output is linear.
    pub fn forward(&self, x: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, ForwardCache), NetworkError> {
        for row in x {
            if row.len() != self.layer_dims[0] {
                return Err(NetworkError::InputDim {
                    got: row.len(),
                    expected: self.layer_dims[0],
                });
            }
        }
        let mut inputs = vec![x.to_vec()];
        let mut current = x.to_vec();
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let last = l == self.num_layers() - 1;
            let mut next = Vec::with_capacity(current.len());
            for row in &current {
                let mut out = self.biases[l].clone();
                for (j, out_j) in out.iter_mut().enumerate() {
                    let w_row = &self.weights[l][j * fan_in..(j + 1) * fan_in];
                    *out_j += w_row.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
                    if !last && *out_j < 0.0 {
                        *out_j = 0.0;
                    }
                }
                debug_assert_eq!(out.len(), fan_out);
                next.push(out);
            }
            inputs.push(next.clone());
            current = next;
        }
        let logits = inputs.pop().unwrap();
        Ok((logits, ForwardCache { inputs }))
    }

    /// Forward without cache, for evaluation.
    pub fn logits(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NetworkError> {
        Ok(self.forward(x)?.0)
    }

    /// Backpropagate per-example logit gradients to parameter gradients.
    /// `grad_logits` is d(batch loss)/d(logits), already including any 1/n.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &[Vec<f64>]) -> ParamGrads {
        let n_layers = self.num_layers();
        let mut w_grads: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut b_grads: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut delta: Vec<Vec<f64>> = grad_logits.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, _fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let layer_in = &cache.inputs[l];
            // ReLU mask for hidden layers: the cached output of layer l is
            // post-activation, zero exactly where the unit was clipped
            if l != n_layers - 1 {
                let layer_out = &cache.inputs[l + 1];
                for (d_row, o_row) in delta.iter_mut().zip(layer_out) {
                    for (d, &o) in d_row.iter_mut().zip(o_row) {
                        if o <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
            for (d_row, in_row) in delta.iter().zip(layer_in) {
                for (j, &d) in d_row.iter().enumerate() {
                    b_grads[l][j] += d;
                    let w_slice = &mut w_grads[l][j * fan_in..(j + 1) * fan_in];
                    for (w, &v) in w_slice.iter_mut().zip(in_row) {
                        *w += d * v;
                    }
                }
            }
            if l > 0 {
                let mut prev = Vec::with_capacity(delta.len());
                for d_row in &delta {
                    let mut p = vec![0.0; fan_in];
                    for (j, &d) in d_row.iter().enumerate() {
                        let w_row = &self.weights[l][j * fan_in..(j + 1) * fan_in];
                        for (pi, &w) in p.iter_mut().zip(w_row) {
                            *pi += d * w;
                        }
                    }
                    prev.push(p);
                }
                delta = prev;
            }
        }
        ParamGrads {
            weights: w_grads,
            biases: b_grads,
        }
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> Result<f64, NetworkError> {
        let logits = self.logits(x)?;
        let correct = logits
            .iter()
            .zip(y)
            .filter(|(row, &label)| {
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                argmax == label
            })
            .count();
        Ok(correct as f64 / x.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            momentum,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            momentum: 0.0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

/// Optimizer with accumulators shaped like the model parameters.
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step_count: u64,
    first_moment_w: Vec<Vec<f64>>,
    first_moment_b: Vec<Vec<f64>>,
    second_moment_w: Vec<Vec<f64>>,
    second_moment_b: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, model: &MlpModel) -> Self {
        let zw = model.weights.iter().map(|w| vec![0.0; w.len()]).collect::<Vec<_>>();
        let zb = model.biases.iter().map(|b| vec![0.0; b.len()]).collect::<Vec<_>>();
        Self {
            config,
            step_count: 0,
            first_moment_w: zw.clone(),
            first_moment_b: zb.clone(),
            second_moment_w: zw,
            second_moment_b: zb,
        }
    }

    pub fn apply(&mut self, model: &mut MlpModel, grads: &ParamGrads) {
        self.step_count += 1;
        match self.config.kind {
            OptimizerKind::Sgd => {
                let lr = self.config.learning_rate;
                let mu = self.config.momentum;
                for l in 0..model.weights.len() {
                    for (i, g) in grads.weights[l].iter().enumerate() {
                        let v = mu * self.first_moment_w[l][i] + g;
                        self.first_moment_w[l][i] = v;
                        model.weights[l][i] -= lr * v;
                    }
                    for (i, g) in grads.biases[l].iter().enumerate() {
                        let v = mu * self.first_moment_b[l][i] + g;
                        self.first_moment_b[l][i] = v;
                        model.biases[l][i] -= lr * v;
                    }
                }
            }
            OptimizerKind::Adam => {
                let lr = self.config.learning_rate;
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
                let t = self.step_count as i32;
                let corr1 = 1.0 - b1.powi(t);
                let corr2 = 1.0 - b2.powi(t);
                for l in 0..model.weights.len() {
                    for (i, g) in grads.weights[l].iter().enumerate() {
                        let m = b1 * self.first_moment_w[l][i] + (1.0 - b1) * g;
                        let v = b2 * self.second_moment_w[l][i] + (1.0 - b2) * g * g;
                        self.first_moment_w[l][i] = m;
                        self.second_moment_w[l][i] = v;
                        model.weights[l][i] -= lr * (m / corr1) / ((v / corr2).sqrt() + eps);
                    }
                    for (i, g) in grads.biases[l].iter().enumerate() {
                        let m = b1 * self.first_moment_b[l][i] + (1.0 - b1) * g;
                        let v = b2 * self.second_moment_b[l][i] + (1.0 - b2) * g * g;
                        self.first_moment_b[l][i] = m;
                        self.second_moment_b[l][i] = v;
                        model.biases[l][i] -= lr * (m / corr1) / ((v / corr2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub objective: f64,
    pub in_loss: f64,
    pub out_loss: f64,
    pub train_accuracy: f64,
}

fn accumulate(total: &mut ParamGrads, part: &ParamGrads) {
    for (t, p) in total.weights.iter_mut().zip(&part.weights) {
        for (a, b) in t.iter_mut().zip(p) {
            *a += b;
        }
    }
    for (t, p) in total.biases.iter_mut().zip(&part.biases) {
        for (a, b) in t.iter_mut().zip(p) {
            *a += b;
        }
    }
}

/// Train `model` in place. One step consumes one in-domain minibatch and
/// one OOD minibatch (cycling the smaller set) and applies one update from
/// the combined gradient. Deterministic given `seed`.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &mut MlpModel,
    in_x: &[Vec<f64>],
    in_y: &[usize],
    out_x: &[Vec<f64>],
    cfg: &LossConfig,
    opt: &mut OptimizerState,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<TrainRecord>, NetworkError> {
    if in_x.is_empty() {
        return Err(NetworkError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(epochs);
    let batch_size = batch_size.max(1);
    for epoch in 0..epochs {
        let mut in_order: Vec<usize> = (0..in_x.len()).collect();
        shuffle(&mut in_order, &mut rng);
        let mut out_order: Vec<usize> = (0..out_x.len()).collect();
        shuffle(&mut out_order, &mut rng);

        let n_batches = in_x.len().div_ceil(batch_size);
        let mut epoch_in = 0.0;
        let mut epoch_out = 0.0;
        for b in 0..n_batches {
            let in_idx = &in_order[b * batch_size..((b + 1) * batch_size).min(in_x.len())];
            let bx: Vec<Vec<f64>> = in_idx.iter().map(|&i| in_x[i].clone()).collect();
            let by: Vec<usize> = in_idx.iter().map(|&i| in_y[i]).collect();

            let ox: Vec<Vec<f64>> = if out_x.is_empty() {
                Vec::new()
            } else {
                (0..bx.len())
                    .map(|j| out_x[out_order[(b * batch_size + j) % out_x.len()]].clone())
                    .collect()
            };

            let (in_logits, in_cache) = model.forward(&bx)?;
            let (out_logits, out_cache) = if ox.is_empty() {
                (Vec::new(), None)
            } else {
                let (l, c) = model.forward(&ox)?;
                (l, Some(c))
            };
            let (in_r, out_r) = combined_loss(&in_logits, &by, &out_logits, cfg)?;
            let objective = in_r.loss + cfg.gamma * out_r.loss;
            if objective.is_nan() {
                return Err(NetworkError::NanObjective { epoch });
            }
            epoch_in += in_r.loss;
            epoch_out += out_r.loss;

            let mut grads = model.backward(&in_cache, &in_r.grad_logits);
            if let Some(cache) = &out_cache {
                let out_grads = model.backward(cache, &out_r.grad_logits);
                accumulate(&mut grads, &out_grads);
            }
            opt.apply(model, &grads);
        }
        let in_loss = epoch_in / n_batches as f64;
        let out_loss = epoch_out / n_batches as f64;
        records.push(TrainRecord {
            epoch,
            objective: in_loss + cfg.gamma * out_loss,
            in_loss,
            out_loss,
            train_accuracy: model.accuracy(in_x, in_y)?,
        });
    }
    Ok(records)
}

// Fisher-Yates; kept local so the stream layout is pinned by this crate,
// not by rand's SliceRandom implementation details.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// On-disk model format: layer dims, row-major weights, biases, plus the
/// training configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub loss_config: LossConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub epochs: usize,
}

impl Checkpoint {
    pub fn from_model(
        model: &MlpModel,
        loss_config: LossConfig,
        optimizer: OptimizerConfig,
        seed: u64,
        epochs: usize,
    ) -> Self {
        Self {
            layer_dims: model.layer_dims.clone(),
            weights: model.weights.clone(),
            biases: model.biases.clone(),
            loss_config,
            optimizer,
            seed,
            epochs,
        }
    }

    pub fn to_model(&self) -> MlpModel {
        MlpModel {
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        }
    }
}
