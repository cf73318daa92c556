//! Softmax, normalized softmax (NSL) and large margin cosine (LMCL) losses.
//!
//! All three share the same cross-entropy head and differ only in how the
//! logits are formed:
//!
//! | variant | logit for class `j` |
//! |---------|---------------------|
//! | softmax | `W_j . x` (raw inner product, no bias) |
//! | NSL     | `s * cos(theta_j)` |
//! | LMCL    | `s * (cos(theta_j) - m * [j == y])` |
//!
//! where `cos(theta_j)` is the inner product of the L2-normalized feature
//! row and the L2-normalized weight column. `s` and `m` are fixed
//! hyperparameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Graph, Matrix, NodeId, TensorError, DEFAULT_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("invalid loss configuration `{field}`: {detail}")]
    Config { field: &'static str, detail: String },
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("feature row {row} has (near) zero norm and cannot be normalized")]
    DegenerateFeature { row: usize },
    #[error("weight column {column} has (near) zero norm and cannot be normalized")]
    DegenerateWeight { column: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    Softmax,
    Nsl,
    Lmcl,
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossVariant::Softmax => "softmax",
            LossVariant::Nsl => "nsl",
            LossVariant::Lmcl => "lmcl",
        })
    }
}

/// Loss variant plus its fixed scale `s` and cosine margin `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    variant: LossVariant,
    s: f64,
    m: f64,
}

impl LossSpec {
    pub fn new(variant: LossVariant, s: f64, m: f64) -> Result<Self, LossError> {
        if variant != LossVariant::Softmax && !(s.is_finite() && s > 0.0) {
            return Err(LossError::Config {
                field: "s",
                detail: format!("scale must be positive, got {s}"),
            });
        }
        if !(0.0..1.0).contains(&m) {
            return Err(LossError::Config {
                field: "m",
                detail: format!("margin must lie in [0, 1), got {m}"),
            });
        }
        if variant != LossVariant::Lmcl && m != 0.0 {
            return Err(LossError::Config {
                field: "m",
                detail: format!("margin is only defined for lmcl, got m = {m} for {variant}"),
            });
        }
        Ok(Self { variant, s, m })
    }

    pub fn softmax() -> Self {
        Self {
            variant: LossVariant::Softmax,
            s: 1.0,
            m: 0.0,
        }
    }

    pub fn nsl(s: f64) -> Result<Self, LossError> {
        Self::new(LossVariant::Nsl, s, 0.0)
    }

    pub fn lmcl(s: f64, m: f64) -> Result<Self, LossError> {
        Self::new(LossVariant::Lmcl, s, m)
    }

    pub fn variant(&self) -> LossVariant {
        self.variant
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Largest possible `|logit|` for normalized variants: `s` for NSL and
    /// `s (1 + m)` for LMCL. Softmax logits are unbounded.
    pub fn logit_bound(&self) -> Option<f64> {
        match self.variant {
            LossVariant::Softmax => None,
            LossVariant::Nsl | LossVariant::Lmcl => Some(self.s * (1.0 + self.m)),
        }
    }
}

/// Pre-normalization features (`N x K`) with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self, LossError> {
        if labels.is_empty() {
            return Err(LossError::Batch(
                "batch must contain at least one sample".into(),
            ));
        }
        if features.rows() != labels.len() {
            return Err(LossError::Batch(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(LossError::Batch(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Raw class weight matrix `W*` (`K x C`, one column per class).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Matrix);

impl ClassWeights {
    pub fn new(w: Matrix) -> Result<Self, LossError> {
        w.normalize_columns(DEFAULT_EPS).map_err(|e| match e {
            TensorError::DegenerateVector { index, .. } => {
                LossError::DegenerateWeight { column: index }
            }
            other => other.into(),
        })?;
        Ok(Self(w))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn feature_dim(&self) -> usize {
        self.0.rows()
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    /// Columns scaled to unit length.
    pub fn normalized(&self) -> Matrix {
        self.0
            .normalize_columns(DEFAULT_EPS)
            .expect("checked at construction")
    }
}

/// Node handles of a recorded loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub features: NodeId,
    pub weights: NodeId,
    pub logits: NodeId,
    pub loss: NodeId,
}

/// Records the logits of `spec` for already-recorded feature and weight nodes.
///
/// With `normalize_features == false` the normalized variants keep the raw
/// feature norm in place of `s`, giving `|x| (cos(theta_j) - m [j == y])`.
/// That is the feature-normalization ablation; softmax ignores the flag.
pub fn record_logits(
    g: &mut Graph,
    spec: &LossSpec,
    features: NodeId,
    weights: NodeId,
    labels: &[usize],
    normalize_features: bool,
) -> Result<NodeId, LossError> {
    let (n, k) = g.value(features).shape();
    let (wk, c) = g.value(weights).shape();
    if k != wk {
        return Err(TensorError::Dimension {
            op: "logits",
            detail: format!("feature dim {k} vs weight rows {wk}"),
        }
        .into());
    }
    if n != labels.len() {
        return Err(LossError::Batch(format!(
            "{n} feature rows for {} labels",
            labels.len()
        )));
    }

    if spec.variant == LossVariant::Softmax {
        return Ok(g.matmul(features, weights)?);
    }

    let wt = g.transpose(weights);
    let wt_unit = g.row_l2_normalize(wt, DEFAULT_EPS).map_err(|e| match e {
        TensorError::DegenerateVector { index, .. } => {
            LossError::DegenerateWeight { column: index }
        }
        other => other.into(),
    })?;
    let w_unit = g.transpose(wt_unit);

    if normalize_features {
        let x_unit = g
            .row_l2_normalize(features, DEFAULT_EPS)
            .map_err(|e| match e {
                TensorError::DegenerateVector { index, .. } => {
                    LossError::DegenerateFeature { row: index }
                }
                other => other.into(),
            })?;
        let mut cos = g.matmul(x_unit, w_unit)?;
        if spec.m > 0.0 {
            let margin = g.leaf(Matrix::one_hot(labels, c, spec.m));
            cos = g.sub(cos, margin)?;
        }
        Ok(g.scale(cos, spec.s))
    } else {
        let mut logits = g.matmul(features, w_unit)?;
        if spec.m > 0.0 {
            let norms = g.row_norm(features);
            let ones = g.leaf(Matrix::ones(1, c));
            let spread = g.matmul(norms, ones)?;
            let mask = g.leaf(Matrix::one_hot(labels, c, spec.m));
            let penalty = g.mul(spread, mask)?;
            logits = g.sub(logits, penalty)?;
        }
        Ok(logits)
    }
}

fn record(
    g: &mut Graph,
    spec: &LossSpec,
    batch: &Batch,
    weights: &ClassWeights,
) -> Result<LossNodes, LossError> {
    if weights.classes() != batch.classes() {
        return Err(LossError::Batch(format!(
            "batch has {} classes but weights have {} columns",
            batch.classes(),
            weights.classes()
        )));
    }
    let features = g.leaf(batch.features().clone());
    let w = g.leaf(weights.matrix().clone());
    let logits = record_logits(g, spec, features, w, batch.labels(), true)?;
    let loss = g.cross_entropy(logits, batch.labels())?;
    Ok(LossNodes {
        features,
        weights: w,
        logits,
        loss,
    })
}

/// Mean cross-entropy over raw inner-product logits.
pub fn softmax_loss(
    g: &mut Graph,
    batch: &Batch,
    weights: &ClassWeights,
) -> Result<LossNodes, LossError> {
    record(g, &LossSpec::softmax(), batch, weights)
}

pub fn nsl_loss(
    g: &mut Graph,
    batch: &Batch,
    weights: &ClassWeights,
    spec: &LossSpec,
) -> Result<LossNodes, LossError> {
    if spec.variant != LossVariant::Nsl {
        return Err(LossError::Config {
            field: "variant",
            detail: format!("nsl_loss called with {}", spec.variant),
        });
    }
    record(g, spec, batch, weights)
}

pub fn lmcl_loss(
    g: &mut Graph,
    batch: &Batch,
    weights: &ClassWeights,
    spec: &LossSpec,
) -> Result<LossNodes, LossError> {
    if spec.variant != LossVariant::Lmcl {
        return Err(LossError::Config {
            field: "variant",
            detail: format!("lmcl_loss called with {}", spec.variant),
        });
    }
    record(g, spec, batch, weights)
}

/// Records whichever loss `spec` names.
pub fn record_loss(
    g: &mut Graph,
    spec: &LossSpec,
    batch: &Batch,
    weights: &ClassWeights,
) -> Result<LossNodes, LossError> {
    record(g, spec, batch, weights)
}

pub fn loss_value(
    spec: &LossSpec,
    batch: &Batch,
    weights: &ClassWeights,
) -> Result<f64, LossError> {
    let mut g = Graph::new();
    let nodes = record(&mut g, spec, batch, weights)?;
    Ok(g.value(nodes.loss).item())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    /// d loss / d features (`N x K`).
    pub features: Matrix,
    /// d loss / d raw weights (`K x C`).
    pub weights: Matrix,
}

pub fn loss_gradients(
    spec: &LossSpec,
    batch: &Batch,
    weights: &ClassWeights,
) -> Result<LossGradients, LossError> {
    let mut g = Graph::new();
    let nodes = record(&mut g, spec, batch, weights)?;
    g.backward(nodes.loss)?;
    let (n, k) = batch.features().shape();
    Ok(LossGradients {
        loss: g.value(nodes.loss).item(),
        features: g
            .grad(nodes.features)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(n, k)),
        weights: g
            .grad(nodes.weights)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(k, weights.classes())),
    })
}
