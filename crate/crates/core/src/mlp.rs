//! Two-class multi-layer perceptron with a softmax output, trained on the
//! mean cross-entropy by mini-batch Adam.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powerflow::SolvabilityLabel;
use crate::sampling::Normalizer;

/// Logit gaps beyond this are clipped so both posteriors stay strictly
/// inside (0, 1).
const MAX_LOGIT_GAP: f64 = 30.0;
/// Posterior clamp used inside the loss.
const LOG_FLOOR: f64 = 1e-12;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Multiply `grad` by the derivative, given the activated output `a`.
    fn backprop(self, grad: &mut Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(a).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => Zip::from(grad).and(a).for_each(|g, &a| *g *= 1.0 - a * a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// Uniform with variance 2 / fan_in.
    He,
    /// Uniform with variance 2 / (fan_in + fan_out).
    Xavier,
}

/// Class posteriors `(p(non-solvable | x), p(solvable | x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior(pub [f64; 2]);

impl Posterior {
    pub fn non_solvable(&self) -> f64 {
        self.0[0]
    }

    pub fn solvable(&self) -> f64 {
        self.0[1]
    }

    /// Arg-max class; ties go to class 1 (non-solvable).
    pub fn predicted(&self) -> SolvabilityLabel {
        if self.0[1] > self.0[0] {
            SolvabilityLabel::Solvable
        } else {
            SolvabilityLabel::NonSolvable
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

/// Per-parameter gradient, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub weight_init: WeightInit,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            weight_init: WeightInit::He,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), MlpError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MlpError::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(MlpError::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(MlpError::Config("l2 must be non-negative".into()));
        }
        if self.hidden.contains(&0) {
            return Err(MlpError::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized features paired with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<SolvabilityLabel>,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<SolvabilityLabel>) -> Result<Self, MlpError> {
        if features.nrows() != labels.len() {
            return Err(MlpError::Dimension {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// `[non-solvable, solvable]` counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for l in &self.labels {
            c[l.class()] += 1;
        }
        c
    }

    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn one_hot(&self, rows: &[usize]) -> Array2<f64> {
        let mut y = Array2::zeros((rows.len(), 2));
        for (r, &i) in rows.iter().enumerate() {
            y[[r, self.labels[i].class()]] = 1.0;
        }
        y
    }
}

/// Layer outputs kept for backpropagation. `acts[0]` is the input.
struct Trace {
    acts: Vec<Array2<f64>>,
    probs: Array2<f64>,
    clipped: Vec<bool>,
}

impl MlpModel {
    /// Zero-initialized model with the given layer widths (output must be 2).
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self, MlpError> {
        if layer_sizes.len() < 2 || *layer_sizes.last().unwrap() != 2 || layer_sizes.contains(&0) {
            return Err(MlpError::InvalidModel(format!(
                "layer sizes {:?} must be positive and end in 2",
                layer_sizes
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            layers,
        })
    }

    /// Random initialization drawn from `rng`; biases start at zero.
    pub fn init<R: Rng>(
        layer_sizes: &[usize],
        activation: Activation,
        init: WeightInit,
        rng: &mut R,
    ) -> Result<Self, MlpError> {
        let mut m = Self::zeros(layer_sizes, activation)?;
        for layer in &mut m.layers {
            let (fan_in, fan_out) = layer.weights.dim();
            let var = match init {
                WeightInit::He => 2.0 / fan_in as f64,
                WeightInit::Xavier => 2.0 / (fan_in + fan_out) as f64,
            };
            let a = (3.0 * var).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-a..a));
        }
        Ok(m)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn trace(&self, x: ArrayView2<'_, f64>) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        let mut logits = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.weights);
            z += &layer.bias;
            if k == last {
                logits = Some(z);
            } else {
                self.activation.apply(&mut z);
                acts.push(z);
            }
        }
        let logits = logits.expect("at least one layer");
        let n = logits.nrows();
        let mut probs = Array2::zeros((n, 2));
        let mut clipped = vec![false; n];
        for r in 0..n {
            let gap = logits[[r, 1]] - logits[[r, 0]];
            clipped[r] = gap.abs() > MAX_LOGIT_GAP;
            let gap = gap.clamp(-MAX_LOGIT_GAP, MAX_LOGIT_GAP);
            // Max-logit subtraction on the (clipped) pair (0, gap).
            let m = gap.max(0.0);
            let e0 = (-m).exp();
            let e1 = (gap - m).exp();
            let s = e0 + e1;
            probs[[r, 0]] = e0 / s;
            probs[[r, 1]] = e1 / s;
        }
        Trace {
            acts,
            probs,
            clipped,
        }
    }

    fn check_dim(&self, got: usize) -> Result<(), MlpError> {
        if got != self.input_dim() {
            return Err(MlpError::Dimension {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Posterior for a single feature row.
    pub fn forward(&self, x: &[f64]) -> Result<Posterior, MlpError> {
        self.check_dim(x.len())?;
        let x = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        let p = self.trace(x).probs;
        Ok(Posterior([p[[0, 0]], p[[0, 1]]]))
    }

    /// Posteriors for every row, as an `n x 2` matrix.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, MlpError> {
        self.check_dim(x.ncols())?;
        Ok(self.trace(x).probs)
    }

    pub fn posteriors(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Posterior>, MlpError> {
        Ok(self
            .predict_proba(x)?
            .rows()
            .into_iter()
            .map(|r| Posterior([r[0], r[1]]))
            .collect())
    }

    /// Mean cross-entropy over `data`.
    pub fn loss(&self, data: &LabeledDataset) -> Result<f64, MlpError> {
        if data.is_empty() {
            return Err(MlpError::Empty);
        }
        self.check_dim(data.dim())?;
        let p = self.trace(data.features.view()).probs;
        Ok(mean_cross_entropy(&p, &data.labels))
    }

    /// Exact gradient of the mean cross-entropy over the given rows of `data`.
    pub fn gradient(&self, data: &LabeledDataset, rows: &[usize]) -> Result<Gradient, MlpError> {
        if rows.is_empty() {
            return Err(MlpError::Empty);
        }
        self.check_dim(data.dim())?;
        let x = data.features.select(Axis(0), rows);
        let y = data.one_hot(rows);
        Ok(self.backward(x.view(), &y))
    }

    fn backward(&self, x: ArrayView2<'_, f64>, y: &Array2<f64>) -> Gradient {
        let trace = self.trace(x);
        let n = x.nrows() as f64;
        let mut delta = (&trace.probs - y) / n;
        for (r, &c) in trace.clipped.iter().enumerate() {
            if c {
                delta.row_mut(r).fill(0.0);
            }
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let a_prev = &trace.acts[k];
            let dw = a_prev.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&self.layers[k].weights.t());
                self.activation.backprop(&mut next, a_prev);
                delta = next;
            }
            grads.push(Layer {
                weights: dw,
                bias: db,
            });
        }
        grads.reverse();
        Gradient { layers: grads }
    }

    /// Fraction of rows whose arg-max posterior matches the label.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64, MlpError> {
        if data.is_empty() {
            return Err(MlpError::Empty);
        }
        let post = self.posteriors(data.features.view())?;
        let hits = post
            .iter()
            .zip(&data.labels)
            .filter(|(p, l)| p.predicted() == **l)
            .count();
        Ok(hits as f64 / data.len() as f64)
    }
}

fn mean_cross_entropy(p: &Array2<f64>, labels: &[SolvabilityLabel]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, l)| -p[[r, l.class()]].clamp(LOG_FLOOR, 1.0 - LOG_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &MlpModel, lr: f64) -> Self {
        let zeros = |m: &MlpModel| {
            m.layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect::<Vec<_>>()
        };
        Adam {
            m: zeros(model),
            v: zeros(model),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grad: &Gradient, l2: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let eps = Self::EPS * c2.sqrt();
        for k in 0..model.layers.len() {
            let layer = &mut model.layers[k];
            let g = &grad.layers[k];
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut self.m[k].weights)
                .and(&mut self.v[k].weights)
                .for_each(|w, &g, m, v| {
                    let g = g + l2 * *w;
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    *w -= step * *m / (v.sqrt() + eps);
                });
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut self.m[k].bias)
                .and(&mut self.v[k].bias)
                .for_each(|b, &g, m, v| {
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    *b -= step * *m / (v.sqrt() + eps);
                });
        }
    }
}

/// Train a freshly initialized model. Deterministic in `(data, cfg)`.
///
/// The returned model is the lowest-training-loss snapshot seen at epoch
/// boundaries (the initialization included).
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<MlpModel, MlpError> {
    cfg.check()?;
    if data.is_empty() {
        return Err(MlpError::Empty);
    }
    let counts = data.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(MlpError::SingleClass);
    }

    let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
    sizes.push(data.dim());
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(2);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::init(&sizes, cfg.activation, cfg.weight_init, &mut rng)?;
    let mut adam = Adam::new(&model, cfg.learning_rate);

    let y_all = data.one_hot(&(0..data.len()).collect::<Vec<_>>());
    let mut best_loss = model.loss(data)?;
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut xb = Array2::zeros((0, data.dim()));
    let mut yb = Array2::zeros((0, 2));

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if xb.nrows() != chunk.len() {
                xb = Array2::zeros((chunk.len(), data.dim()));
                yb = Array2::zeros((chunk.len(), 2));
            }
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r).assign(&data.features.row(i));
                yb.row_mut(r).assign(&y_all.row(i));
            }
            let grad = model.backward(xb.view(), &yb);
            adam.step(&mut model, &grad, cfg.l2);
        }
        let loss = model.loss(data)?;
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&model);
        }
    }
    Ok(best)
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    layer_sizes: Vec<usize>,
    activation: Activation,
    /// Row-major `fan_in x fan_out` weights per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalizer: Option<Normalizer>,
}

/// Write a JSON checkpoint, optionally bundling the feature normalizer.
pub fn save_checkpoint(
    path: &Path,
    model: &MlpModel,
    normalizer: Option<&Normalizer>,
) -> Result<(), MlpError> {
    std::fs::write(path, checkpoint_json(model, normalizer)?)?;
    Ok(())
}

pub fn checkpoint_json(model: &MlpModel, normalizer: Option<&Normalizer>) -> Result<String, MlpError> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        layer_sizes: model.layer_sizes.clone(),
        activation: model.activation,
        weights: model.layers.iter().map(|l| l.weights.iter().copied().collect()).collect(),
        biases: model.layers.iter().map(|l| l.bias.to_vec()).collect(),
        normalizer: normalizer.cloned(),
    };
    Ok(serde_json::to_string(&ck)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, Option<Normalizer>), MlpError> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

pub fn parse_checkpoint(text: &str) -> Result<(MlpModel, Option<Normalizer>), MlpError> {
    let ck: Checkpoint = serde_json::from_str(text)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(MlpError::InvalidModel(format!("unsupported checkpoint version {}", ck.version)));
    }
    let mut model = MlpModel::zeros(&ck.layer_sizes, ck.activation)?;
    if ck.weights.len() != model.layers.len() || ck.biases.len() != model.layers.len() {
        return Err(MlpError::InvalidModel("layer count does not match layer_sizes".into()));
    }
    for (k, layer) in model.layers.iter_mut().enumerate() {
        let shape = layer.weights.raw_dim();
        layer.weights = Array2::from_shape_vec(shape, ck.weights[k].clone())
            .map_err(|e| MlpError::InvalidModel(format!("layer {k} weights: {e}")))?;
        if ck.biases[k].len() != layer.bias.len() {
            return Err(MlpError::InvalidModel(format!("layer {k} bias has wrong length")));
        }
        layer.bias = Array1::from(ck.biases[k].clone());
    }
    if let Some(nz) = &ck.normalizer {
        if nz.dim() != model.input_dim() || nz.max.len() != nz.min.len() {
            return Err(MlpError::InvalidModel("normalizer width does not match model input".into()));
        }
    }
    Ok((model, ck.normalizer))
}
