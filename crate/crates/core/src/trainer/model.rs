use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::losses::ClassWeights;
use crate::tensor::{Graph, Matrix, NodeId};

pub const MODEL_MAGIC: &str = "MARGINLAB-MLP";
pub const MODEL_VERSION: u32 = 1;

/// Affine layer `x W + b` with `W: in x out` and `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Matrix) -> Result<Self, TrainError> {
        if bias.shape() != (1, weight.cols()) {
            return Err(TrainError::Shape(format!(
                "bias {:?} does not match layer output width {}",
                bias.shape(),
                weight.cols()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Feature extractor (affine layers with ReLU in between, none after the
/// last) followed by class weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    class_weights: ClassWeights,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>, class_weights: ClassWeights) -> Result<Self, TrainError> {
        if layers.is_empty() {
            return Err(TrainError::Shape("model needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(TrainError::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let k = layers.last().map(Layer::out_dim).unwrap_or(0);
        if k < 2 {
            return Err(TrainError::Shape(format!(
                "feature dimension must be >= 2, got {k}"
            )));
        }
        if class_weights.feature_dim() != k {
            return Err(TrainError::Shape(format!(
                "class weights expect {}-d features, extractor produces {k}",
                class_weights.feature_dim()
            )));
        }
        Ok(Self {
            layers,
            class_weights,
        })
    }

    /// Fan-in scaled uniform layer weights (He range before a ReLU), zero
    /// biases and class weights along random unit directions.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(feature_dim))
            .collect();
        if widths.contains(&0) {
            return Err(TrainError::Shape(format!(
                "layer widths must be positive, got {widths:?}"
            )));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i < last { 6.0 } else { 3.0 };
                let limit = (gain / w[0] as f64).sqrt();
                let data = (0..w[0] * w[1])
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect();
                Layer::new(Matrix::from_vec(w[0], w[1], data)?, Matrix::zeros(1, w[1]))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let raw: Vec<f64> = (0..feature_dim * classes)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let w = Matrix::from_vec(feature_dim, classes, raw)?.normalize_columns(0.0)?;
        Self::new(layers, ClassWeights::new(w)?)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn class_weights(&self) -> &ClassWeights {
        &self.class_weights
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.class_weights.feature_dim()
    }

    pub fn classes(&self) -> usize {
        self.class_weights.classes()
    }

    /// Flat list of parameter matrices: each layer's weight then bias, then
    /// the class weights.
    pub(crate) fn parameters(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self
            .layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect();
        out.push(self.class_weights.matrix());
        out
    }

    pub(crate) fn with_parameters(&self, mut params: Vec<Matrix>) -> Result<Self, TrainError> {
        let w = params.pop().expect("class weights");
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut it = params.into_iter();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            layers.push(Layer::new(weight, bias)?);
        }
        Self::new(layers, ClassWeights::new(w)?)
    }

    /// Records the feature extractor on `g`, returning the parameter leaves
    /// (same order as [`Self::parameters`], class weights excluded) and the
    /// feature node.
    pub(crate) fn record_features(
        &self,
        g: &mut Graph,
        input: NodeId,
    ) -> Result<(Vec<NodeId>, NodeId), TrainError> {
        let n = g.value(input).rows();
        let ones = g.leaf(Matrix::ones(n, 1));
        let mut params = Vec::with_capacity(self.layers.len() * 2);
        let mut h = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.leaf(layer.weight.clone());
            let b = g.leaf(layer.bias.clone());
            params.extend([w, b]);
            let xw = g.matmul(h, w)?;
            let bias = g.matmul(ones, b)?;
            h = g.add(xw, bias)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok((params, h))
    }

    /// Output of the last layer before the class weights, un-normalized.
    pub fn extract_features(&self, inputs: &Matrix) -> Result<Matrix, TrainError> {
        if inputs.cols() != self.input_dim() {
            return Err(TrainError::Shape(format!(
                "inputs have {} columns, model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let mut h = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.matmul(&layer.weight)?;
            for r in 0..h.rows() {
                for c in 0..h.cols() {
                    let mut v = h.get(r, c) + layer.bias.get(0, c);
                    if i + 1 < self.layers.len() {
                        v = v.max(0.0);
                    }
                    h.set(r, c, v);
                }
            }
        }
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| TrainError::Format(e.to_string()))?;
        file.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl From<&Matrix> for MatrixRecord {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            values: m.data().to_vec(),
        }
    }
}

impl TryFrom<MatrixRecord> for Matrix {
    type Error = TrainError;

    fn try_from(r: MatrixRecord) -> Result<Self, TrainError> {
        Ok(Matrix::from_vec(r.rows, r.cols, r.values)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    weight: MatrixRecord,
    bias: MatrixRecord,
}

/// On-disk model: magic string, version, then row-major matrices with
/// their shapes.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    magic: String,
    version: u32,
    activation: String,
    layers: Vec<LayerRecord>,
    class_weights: MatrixRecord,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        Self {
            magic: MODEL_MAGIC.into(),
            version: MODEL_VERSION,
            activation: "relu".into(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerRecord {
                    weight: (&l.weight).into(),
                    bias: (&l.bias).into(),
                })
                .collect(),
            class_weights: m.class_weights.matrix().into(),
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = TrainError;

    fn try_from(f: ModelFile) -> Result<Self, TrainError> {
        if f.magic != MODEL_MAGIC {
            return Err(TrainError::Format(format!("bad magic {:?}", f.magic)));
        }
        if f.version != MODEL_VERSION {
            return Err(TrainError::Format(format!(
                "unsupported model version {}",
                f.version
            )));
        }
        if f.activation != "relu" {
            return Err(TrainError::Format(format!(
                "unsupported activation {:?}",
                f.activation
            )));
        }
        let layers = f
            .layers
            .into_iter()
            .map(|l| Layer::new(l.weight.try_into()?, l.bias.try_into()?))
            .collect::<Result<Vec<_>, _>>()?;
        MlpModel::new(layers, ClassWeights::new(f.class_weights.try_into()?)?)
    }
}
