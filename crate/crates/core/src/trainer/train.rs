use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MlpModel, SyntheticDataset, TrainError};
use crate::losses::{record_logits, LossSpec};
use crate::tensor::{Graph, Matrix};

/// Number of epochs averaged on each side of the convergence check.
pub const CONVERGENCE_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub spec: LossSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Fractions of `epochs` at which the learning rate is multiplied by 0.1.
    pub lr_drops: Vec<f64>,
    pub weight_decay: f64,
    pub seed: u64,
    pub normalize_features: bool,
}

impl TrainConfig {
    /// Small-scale defaults: 60 epochs, batch 64, momentum SGD at 0.01 with
    /// drops at 50% and 75%, weight decay 5e-4, normalized features.
    pub fn new(spec: LossSpec, seed: u64) -> Self {
        Self {
            spec,
            epochs: 60,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            lr_drops: vec![0.5, 0.75],
            weight_decay: 5e-4,
            seed,
            normalize_features: true,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config {
                field: "epochs",
                detail: "need >= 1".into(),
            });
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config {
                field: "batch_size",
                detail: "need >= 1".into(),
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config {
                field: "learning_rate",
                detail: format!("must be positive, got {}", self.learning_rate),
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config {
                field: "momentum",
                detail: format!("must lie in [0, 1), got {}", self.momentum),
            });
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::Config {
                field: "weight_decay",
                detail: format!("must be >= 0, got {}", self.weight_decay),
            });
        }
        if let Some(bad) = self.lr_drops.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(TrainError::Config {
                field: "lr_drops",
                detail: format!("fractions must lie in [0, 1], got {bad}"),
            });
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let drops = self
            .lr_drops
            .iter()
            .filter(|&&f| epoch >= (f * self.epochs as f64).round() as usize)
            .count();
        self.learning_rate * 0.1f64.powi(drops as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub loss: f64,
    /// Fraction of training samples whose largest class score is the target,
    /// measured after the epoch.
    pub train_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun {
    pub model: MlpModel,
    pub trace: Vec<EpochRecord>,
    pub converged: bool,
}

impl TrainRun {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn initial_loss(&self) -> f64 {
        self.trace.first().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.train_accuracy)
    }
}

/// Whether a loss trace over `classes` classes counts as converged: the mean
/// of the last [`CONVERGENCE_WINDOW`] epochs is no larger than the mean of
/// the window before it, at most 90% of the first epoch's loss, and below
/// `ln(classes)`, the loss of a uniform posterior. Short traces compare the
/// halves instead.
pub fn is_converged(losses: &[f64], classes: usize) -> bool {
    if losses.len() < 2 || losses.iter().any(|l| !l.is_finite()) {
        return false;
    }
    let w = CONVERGENCE_WINDOW.min(losses.len() / 2);
    let n = losses.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let last = mean(&losses[n - w..]);
    let prev = mean(&losses[n - 2 * w..n - w]);
    last <= prev && last <= 0.9 * losses[0] && last < (classes as f64).ln()
}

/// Mini-batch SGD with momentum, weight decay and step-decayed learning
/// rate, starting from `model`. Bit-for-bit reproducible from `cfg.seed`.
///
/// Passing the model of an earlier run warm-starts from it.
pub fn train(
    model: &MlpModel,
    data: &SyntheticDataset,
    cfg: &TrainConfig,
) -> Result<TrainRun, TrainError> {
    cfg.validate()?;
    if data.samples.cols() != model.input_dim() {
        return Err(TrainError::Shape(format!(
            "dataset has {} input columns, model expects {}",
            data.samples.cols(),
            model.input_dim()
        )));
    }
    if data.classes() != model.classes() {
        return Err(TrainError::Shape(format!(
            "dataset has {} classes, model has {}",
            data.classes(),
            model.classes()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model.clone();
    let mut velocity: Vec<Matrix> = model
        .parameters()
        .iter()
        .map(|p| Matrix::zeros(p.rows(), p.cols()))
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.samples.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = step_gradients(&model, &x, &labels, cfg)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;

            let mut params: Vec<Matrix> = model.parameters().into_iter().cloned().collect();
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grads) {
                // v <- momentum v + (g + wd p); p <- p - lr v
                let mut update = g.clone();
                update.axpy(cfg.weight_decay, p)?;
                *v = v.scale(cfg.momentum);
                v.axpy(1.0, &update)?;
                p.axpy(-lr, v)?;
                if !p.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
            }
            model = match model.with_parameters(params) {
                Ok(m) => m,
                // a class weight column collapsed to zero
                Err(_) => return Err(TrainError::Diverged { epoch }),
            };
        }
        let loss = loss_sum / data.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        trace.push(EpochRecord {
            epoch,
            loss,
            train_accuracy: accuracy(&model, &data.samples, &data.labels)?,
            learning_rate: lr,
        });
    }

    let losses: Vec<f64> = trace.iter().map(|r| r.loss).collect();
    let converged = is_converged(&losses, model.classes());
    Ok(TrainRun {
        model,
        converged,
        trace,
    })
}

fn step_gradients(
    model: &MlpModel,
    x: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Matrix>), TrainError> {
    let mut g = Graph::new();
    let input = g.leaf(x.clone());
    let (mut params, feats) = model.record_features(&mut g, input)?;
    let w = g.leaf(model.class_weights().matrix().clone());
    params.push(w);
    let logits = record_logits(&mut g, &cfg.spec, feats, w, labels, cfg.normalize_features)?;
    let loss = g.cross_entropy(logits, labels)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    let grads = params
        .iter()
        .map(|&p| {
            g.grad(p).cloned().unwrap_or_else(|| {
                let (r, c) = g.value(p).shape();
                Matrix::zeros(r, c)
            })
        })
        .collect();
    Ok((value, grads))
}

/// Training-set accuracy of the class scores (margin not applied).
pub fn accuracy(model: &MlpModel, inputs: &Matrix, labels: &[usize]) -> Result<f64, TrainError> {
    let preds = predict(model, inputs)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

/// Class with the largest cosine to each sample's feature. Ties go to the
/// lower class index.
pub fn predict(model: &MlpModel, inputs: &Matrix) -> Result<Vec<usize>, TrainError> {
    let feats = model.extract_features(inputs)?;
    let scores = feats.matmul(&model.class_weights().normalized())?;
    Ok((0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}
