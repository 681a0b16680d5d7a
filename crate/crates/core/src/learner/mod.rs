//! Multiclass linear classifier with softmax confidences, trained by SGD.

pub mod auc;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FeaturedInstance};
use crate::par::{self, Execution};
use crate::rng::{seeded, streams};
use crate::stream::ClassId;

pub use auc::{auc_macro, auc_micro, auc_with, roc_auc, Average};

/// A labelled feature vector.
pub trait Example: Sync {
    fn x(&self) -> &[f64];
    fn y(&self) -> ClassId;
}

impl Example for (FeatureVector, ClassId) {
    fn x(&self) -> &[f64] {
        self.0.as_slice()
    }
    fn y(&self) -> ClassId {
        self.1
    }
}

impl Example for (Vec<f64>, ClassId) {
    fn x(&self) -> &[f64] {
        &self.0
    }
    fn y(&self) -> ClassId {
        self.1
    }
}

/// Uses the ground-truth label.
impl Example for FeaturedInstance {
    fn x(&self) -> &[f64] {
        self.x.as_slice()
    }
    fn y(&self) -> ClassId {
        self.instance.label
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Multinomial logistic regression.
    #[default]
    CrossEntropy,
    /// Crammer-Singer multiclass hinge; confidences are a softmax over margins.
    Hinge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: Loss,
    /// Passes over the single instance in [`LinearModel::clone_and_update`].
    pub update_epochs: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 20,
            seed: 0,
            loss: Loss::CrossEntropy,
            update_epochs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Seeded re-initialization, then `epochs` shuffled SGD passes.
    #[default]
    FullRetrain,
    /// One in-order SGD pass starting from the current parameters.
    Incremental,
}

/// Softmax class distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
}

impl Prediction {
    /// Most probable class; ties go to the smallest index.
    pub fn argmax(&self) -> ClassId {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        ClassId(best)
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Gradient of the training objective, laid out like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    fn zeros(classes: usize, dim: usize) -> Self {
        Gradient {
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    fn clear(&mut self) {
        self.weights.fill(0.0);
        self.bias.fill(0.0);
    }

    /// Weights then bias, matching [`LinearModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }
}

/// `classes x dim` weight matrix (row-major) plus per-class bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    hyper: Hyper,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    model: LinearModel,
}

const SNAPSHOT_VERSION: u32 = 1;

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

impl LinearModel {
    /// All-zero parameters.
    pub fn new(classes: usize, dim: usize, hyper: Hyper) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if !(hyper.learning_rate.is_finite() && hyper.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        if !(hyper.l2.is_finite() && hyper.l2 >= 0.0) {
            return Err(Error::invalid("l2 must be finite and non-negative"));
        }
        Ok(LinearModel {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            hyper,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weights (row-major) followed by bias.
    pub fn parameters(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let n = self.weights.len();
        if params.len() != n + self.bias.len() {
            return Err(Error::DimensionMismatch {
                expected: n + self.bias.len(),
                got: params.len(),
            });
        }
        self.weights.copy_from_slice(&params[..n]);
        self.bias.copy_from_slice(&params[n..]);
        Ok(())
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    /// Raw class scores `w_k . x + b_k`.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "feature dimension mismatch");
        (0..self.classes)
            .map(|k| self.row(k).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[k])
            .collect()
    }

    /// Softmax over class scores. Panics if `x` has the wrong dimension.
    pub fn predict_proba(&self, x: &[f64]) -> Prediction {
        let mut probs = self.scores(x);
        softmax_in_place(&mut probs);
        Prediction { probs }
    }

    pub fn predict_batch_with(&self, xs: &[FeatureVector], exec: Execution) -> Vec<Prediction> {
        par::map_with(exec, xs, |x| self.predict_proba(x.as_slice()))
    }

    fn check_example(&self, x: &[f64], y: ClassId) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if y.index() >= self.classes {
            return Err(Error::invalid(format!(
                "label {} outside {} classes",
                y.index(),
                self.classes
            )));
        }
        Ok(())
    }

    /// Adds `scale` times the per-example loss gradient (no regularizer).
    fn add_example_gradient(&self, x: &[f64], y: ClassId, scale: f64, grad: &mut Gradient) {
        let y = y.index();
        match self.hyper.loss {
            Loss::CrossEntropy => {
                let p = self.predict_proba(x).probs;
                for (k, pk) in p.iter().enumerate() {
                    let g = scale * (pk - if k == y { 1.0 } else { 0.0 });
                    if g == 0.0 {
                        continue;
                    }
                    let row = &mut grad.weights[k * self.dim..(k + 1) * self.dim];
                    for (gw, v) in row.iter_mut().zip(x) {
                        *gw += g * v;
                    }
                    grad.bias[k] += g;
                }
            }
            Loss::Hinge => {
                let s = self.scores(x);
                let rival = (0..self.classes)
                    .filter(|&k| k != y)
                    .fold(None::<usize>, |best, k| match best {
                        Some(b) if s[b] >= s[k] => Some(b),
                        _ => Some(k),
                    })
                    .expect("at least two classes");
                if 1.0 + s[rival] - s[y] > 0.0 {
                    for (k, sign) in [(y, -1.0), (rival, 1.0)] {
                        let row = &mut grad.weights[k * self.dim..(k + 1) * self.dim];
                        for (gw, v) in row.iter_mut().zip(x) {
                            *gw += scale * sign * v;
                        }
                        grad.bias[k] += scale * sign;
                    }
                }
            }
        }
    }

    fn add_l2_gradient(&self, grad: &mut Gradient) {
        if self.hyper.l2 == 0.0 {
            return;
        }
        for (g, w) in grad.weights.iter_mut().zip(&self.weights) {
            *g += self.hyper.l2 * w;
        }
    }

    fn example_loss(&self, x: &[f64], y: ClassId) -> f64 {
        let y = y.index();
        let s = self.scores(x);
        match self.hyper.loss {
            Loss::CrossEntropy => {
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_z = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                log_z - s[y]
            }
            Loss::Hinge => {
                let rival = (0..self.classes)
                    .filter(|&k| k != y)
                    .map(|k| s[k])
                    .fold(f64::NEG_INFINITY, f64::max);
                (1.0 + rival - s[y]).max(0.0)
            }
        }
    }

    /// Mean loss over `data` plus `l2 / 2 * ||W||^2`.
    pub fn objective<E: Example>(&self, data: &[E]) -> f64 {
        let mean = data.iter().map(|e| self.example_loss(e.x(), e.y())).sum::<f64>() / data.len() as f64;
        mean + 0.5 * self.hyper.l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Analytic gradient of [`objective`](Self::objective).
    pub fn gradient<E: Example>(&self, data: &[E]) -> Gradient {
        let mut grad = Gradient::zeros(self.classes, self.dim);
        let scale = 1.0 / data.len() as f64;
        for e in data {
            self.add_example_gradient(e.x(), e.y(), scale, &mut grad);
        }
        self.add_l2_gradient(&mut grad);
        grad
    }

    fn sgd_step(&mut self, x: &[f64], y: ClassId, scratch: &mut Gradient) {
        scratch.clear();
        self.add_example_gradient(x, y, 1.0, scratch);
        self.add_l2_gradient(scratch);
        let lr = self.hyper.learning_rate;
        for (w, g) in self.weights.iter_mut().zip(&scratch.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&scratch.bias) {
            *b -= lr * g;
        }
    }

    fn reinitialized(&self) -> Self {
        let mut rng = seeded(self.hyper.seed, streams::INIT);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let mut fresh = self.clone();
        for w in &mut fresh.weights {
            *w = normal.sample(&mut rng);
        }
        fresh.bias.fill(0.0);
        fresh
    }

    /// Returns the trained model; `self` is left untouched.
    pub fn train<E: Example>(&self, data: &[E], mode: TrainMode) -> Result<LinearModel> {
        if data.is_empty() {
            return Err(Error::invalid("cannot train on an empty data set"));
        }
        for e in data {
            self.check_example(e.x(), e.y())?;
        }
        let mut scratch = Gradient::zeros(self.classes, self.dim);
        match mode {
            TrainMode::FullRetrain => {
                let mut model = self.reinitialized();
                let mut rng = seeded(self.hyper.seed, streams::SHUFFLE);
                let mut order: Vec<usize> = (0..data.len()).collect();
                for _ in 0..self.hyper.epochs {
                    order.shuffle(&mut rng);
                    for &i in &order {
                        model.sgd_step(data[i].x(), data[i].y(), &mut scratch);
                    }
                }
                Ok(model)
            }
            TrainMode::Incremental => {
                let mut model = self.clone();
                for e in data {
                    model.sgd_step(e.x(), e.y(), &mut scratch);
                }
                Ok(model)
            }
        }
    }

    /// A copy after `update_epochs` SGD steps on one instance.
    pub fn clone_and_update(&self, x: &[f64], y: ClassId) -> Result<LinearModel> {
        self.check_example(x, y)?;
        let mut model = self.clone();
        let mut scratch = Gradient::zeros(self.classes, self.dim);
        for _ in 0..self.hyper.update_epochs {
            model.sgd_step(x, y, &mut scratch);
        }
        Ok(model)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(
            BufWriter::new(file),
            &Snapshot {
                version: SNAPSHOT_VERSION,
                model: self.clone(),
            },
        )?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<LinearModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let snap: Snapshot = serde_json::from_reader(BufReader::new(file))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        let m = snap.model;
        if m.classes < 2 || m.weights.len() != m.classes * m.dim || m.bias.len() != m.classes {
            return Err(Error::invalid("snapshot has inconsistent shapes"));
        }
        Ok(m)
    }
}
