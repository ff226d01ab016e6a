//! Linear softmax probe trained by SGD with momentum, weight decay and a
//! cosine-annealed learning rate, keeping the parameters with the best
//! validation loss.

use serde::{Deserialize, Serialize};

use crate::bank::FeatureTensor;
use crate::error::{CorfError, Result};
use crate::metrics::Metrics;
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub cosine: bool,
    pub seed: u64,
    /// Fraction of the data held out for validation.
    pub validation_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 0.2,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            max_epochs: 200,
            early_stop_patience: 20,
            cosine: true,
            seed: 7,
            validation_fraction: 0.2,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CorfError::InvalidParameter(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be >= 0");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and max epochs must be positive");
        }
        if self.early_stop_patience > self.max_epochs {
            return bad("patience cannot exceed max epochs");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must be in (0, 1)");
        }
        Ok(())
    }

    /// Learning rate for epoch `t` (0-based).
    pub fn lr_at(&self, t: usize) -> f64 {
        if self.cosine {
            cosine_lr(self.learning_rate, t, self.max_epochs)
        } else {
            self.learning_rate
        }
    }
}

/// `lr * (1 + cos(pi t / T)) / 2`.
pub fn cosine_lr(lr: f64, t: usize, period: usize) -> f64 {
    lr * (1.0 + (std::f64::consts::PI * t as f64 / period as f64).cos()) / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub classes: usize,
    pub dim: usize,
    /// Row-major `classes x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per-feature standardization learned on the training split.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl ProbeModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        ProbeModel {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            feature_mean: vec![0.0; dim],
            feature_scale: vec![1.0; dim],
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }

    /// Logits for an already normalized input.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Predicted class of a raw input; ties go to the lowest index.
    pub fn predict(&self, raw: &[f64]) -> usize {
        let z = self.logits(&self.normalize(raw));
        let mut best = 0;
        for (i, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = i;
            }
        }
        best
    }

    pub fn param_norm(&self) -> f64 {
        self.weights.iter().chain(&self.bias).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `log(sum(exp(z))) - z[y]`; NaN inputs propagate.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    if z.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    lse - z[y]
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Gradient of the mean cross-entropy with respect to weights and bias.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Mean cross-entropy over normalized inputs `xs` and its gradient. Weight
/// decay is not included.
pub fn loss_and_grad(model: &ProbeModel, xs: &[&[f64]], ys: &[usize]) -> (f64, Gradient) {
    let mut grad = Gradient {
        weights: vec![0.0; model.weights.len()],
        bias: vec![0.0; model.classes],
    };
    let n = xs.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = model.logits(x);
        loss += cross_entropy(&z, y);
        let p = softmax(&z);
        for (c, pc) in p.iter().enumerate() {
            let g = (pc - if c == y { 1.0 } else { 0.0 }) / n;
            grad.bias[c] += g;
            let row = &mut grad.weights[c * model.dim..(c + 1) * model.dim];
            for (r, v) in row.iter_mut().zip(x.iter()) {
                *r += g * v;
            }
        }
    }
    (loss / n, grad)
}

pub fn mean_loss(model: &ProbeModel, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let mut total = 0.0;
    for (x, &y) in refs.iter().zip(ys) {
        total += cross_entropy(&model.logits(x), y);
    }
    total / xs.len() as f64
}

/// SGD state with classic momentum: `v = mu v + g + wd p; p -= lr v`.
pub struct Sgd {
    velocity_w: Vec<f64>,
    velocity_b: Vec<f64>,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    pub fn new(model: &ProbeModel, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            velocity_w: vec![0.0; model.weights.len()],
            velocity_b: vec![0.0; model.bias.len()],
            momentum,
            weight_decay,
        }
    }

    pub fn step(&mut self, model: &mut ProbeModel, grad: &Gradient, lr: f64) {
        let update = |p: &mut [f64], v: &mut [f64], g: &[f64]| {
            for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = self.momentum * *v + g + self.weight_decay * *p;
                *p -= lr * *v;
            }
        };
        update(&mut model.weights, &mut self.velocity_w, &grad.weights);
        update(&mut model.bias, &mut self.velocity_b, &grad.bias);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ProbeModel,
    /// Loss of the zero-initialized model on the training split.
    pub initial_loss: f64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

pub fn flatten(tensor: &FeatureTensor) -> Vec<f64> {
    tensor.data().iter().map(|v| *v as f64).collect()
}

pub fn train_probe(features: &[FeatureTensor], labels: &[usize], config: &ProbeConfig) -> Result<TrainReport> {
    if let Some(first) = features.first() {
        if features.iter().any(|t| t.shape() != first.shape()) {
            return Err(CorfError::Dimension("feature tensors differ in shape".into()));
        }
    }
    let xs: Vec<Vec<f64>> = features.iter().map(flatten).collect();
    train_probe_vectors(&xs, labels, config)
}

/// Shuffled split: the first `round(fraction * n)` indices validate.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1));
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

pub fn train_probe_vectors(xs: &[Vec<f64>], labels: &[usize], config: &ProbeConfig) -> Result<TrainReport> {
    config.validate()?;
    if xs.len() != labels.len() || xs.len() < 2 {
        return Err(CorfError::Data("need at least two labelled samples".into()));
    }
    let dim = xs[0].len();
    if dim == 0 || xs.iter().any(|x| x.len() != dim) {
        return Err(CorfError::Dimension("feature vectors differ in length".into()));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let distinct = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|l| seen[*l] = true);
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(CorfError::Data("training data contains a single class".into()));
    }

    let (train_idx, val_idx) = split_indices(xs.len(), config.validation_fraction, config.seed);
    let mut model = ProbeModel::zeros(classes, dim);
    fit_standardization(&mut model, xs, &train_idx);

    let norm = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| model.normalize(&xs[i])).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = norm(&train_idx);
    let (val_x, val_y) = norm(&val_idx);

    let initial_loss = mean_loss(&model, &train_x, &train_y);
    let mut sgd = Sgd::new(&model, config.momentum, config.weight_decay);
    let mut rng = SeededRng::new(config.seed ^ 0x05EE_D0FB_A7C4);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0;
    let mut epochs = Vec::new();

    for epoch in 0..config.max_epochs {
        let lr = config.lr_at(epoch);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| train_x[i].as_slice()).collect();
            let by: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            let (loss, grad) = loss_and_grad(&model, &bx, &by);
            if !loss.is_finite() {
                return Err(CorfError::Divergence { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            sgd.step(&mut model, &grad, lr);
        }
        let train_loss = loss_sum / train_x.len() as f64;
        let val_loss = mean_loss(&model, &val_x, &val_y);
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(CorfError::Divergence { epoch });
        }
        let correct = val_x
            .iter()
            .zip(&val_y)
            .filter(|(x, y)| argmax(&model.logits(x)) == **y)
            .count();
        epochs.push(EpochLog {
            epoch,
            learning_rate: lr,
            train_loss,
            val_loss,
            val_accuracy: correct as f64 / val_x.len() as f64,
        });
        if val_loss < best.0 {
            best = (val_loss, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }

    Ok(TrainReport {
        model: best.1,
        initial_loss,
        epochs,
        best_epoch: best.2,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Z-scores each feature on the training rows, then divides by `sqrt(dim)`
/// so normalized inputs have roughly unit norm.
fn fit_standardization(model: &mut ProbeModel, xs: &[Vec<f64>], rows: &[usize]) {
    let dim = model.dim;
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for &r in rows {
        for (m, v) in mean.iter_mut().zip(&xs[r]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for &r in rows {
        for ((s, v), m) in var.iter_mut().zip(&xs[r]).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let root_dim = (dim as f64).sqrt();
    model.feature_scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                1.0 / (sd * root_dim)
            } else {
                0.0
            }
        })
        .collect();
    model.feature_mean = mean;
}

pub fn evaluate(model: &ProbeModel, features: &[FeatureTensor], labels: &[usize]) -> Result<Metrics> {
    let xs: Vec<Vec<f64>> = features.iter().map(flatten).collect();
    evaluate_vectors(model, &xs, labels)
}

pub fn evaluate_vectors(model: &ProbeModel, xs: &[Vec<f64>], labels: &[usize]) -> Result<Metrics> {
    if xs.is_empty() {
        return Err(CorfError::Data("empty dataset".into()));
    }
    if xs.iter().any(|x| x.len() != model.dim) {
        return Err(CorfError::Dimension("feature length does not match the model".into()));
    }
    let predicted: Vec<usize> = xs.iter().map(|x| model.predict(x)).collect();
    Metrics::from_labels(labels, &predicted, model.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = SeededRng::new(4);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let centre = if y == 0 { -1.0 } else { 1.0 };
            xs.push(vec![centre + 0.3 * rng.normal(), rng.normal(), 0.5]);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0.2, 0, 100), 0.2);
        assert!(cosine_lr(0.2, 100, 100).abs() < 1e-12);
        assert!((cosine_lr(0.2, 50, 100) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn separable_data_is_learned() {
        let (xs, ys) = separable(200);
        let cfg = ProbeConfig {
            early_stop_patience: 0,
            ..ProbeConfig::default()
        };
        let report = train_probe_vectors(&xs, &ys, &cfg).unwrap();
        let m = evaluate_vectors(&report.model, &xs, &ys).unwrap();
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let xs = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert!(matches!(train_probe_vectors(&xs, &[1, 1, 1], &ProbeConfig::default()), Err(CorfError::Data(_))));
    }

    #[test]
    fn config_validation() {
        let bad = ProbeConfig {
            momentum: 1.0,
            ..ProbeConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ProbeConfig {
            early_stop_patience: 500,
            ..ProbeConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let (mut xs, ys) = separable(40);
        xs[3][0] = f64::NAN;
        let r = train_probe_vectors(&xs, &ys, &ProbeConfig::default());
        assert!(matches!(r, Err(CorfError::Divergence { epoch: 0 })));
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let model = ProbeModel::zeros(3, 2);
        assert_eq!(model.predict(&[0.3, 0.4]), 0);
    }
}
