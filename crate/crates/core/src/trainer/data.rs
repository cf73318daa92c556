use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::Matrix;

const CENTER_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const CENTER_CANDIDATES: usize = 32;

/// Generator settings for Gaussian class blobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    /// Standard deviation of every coordinate around its class center.
    pub dispersion: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.classes < 2 {
            return Err(TrainError::Config {
                field: "classes",
                detail: format!("need >= 2, got {}", self.classes),
            });
        }
        if self.per_class < 1 {
            return Err(TrainError::Config {
                field: "per_class",
                detail: "need >= 1".into(),
            });
        }
        if self.input_dim < 1 {
            return Err(TrainError::Config {
                field: "input_dim",
                detail: "need >= 1".into(),
            });
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(TrainError::Config {
                field: "dispersion",
                detail: format!("must be positive, got {}", self.dispersion),
            });
        }
        Ok(())
    }

    /// Unit-norm class centers (`classes x input_dim`), derived from the seed
    /// alone. Two-dimensional inputs use evenly spaced points on the circle;
    /// higher dimensions keep the most spread of several random draws.
    pub fn centers(&self) -> Matrix {
        let (c, d) = (self.classes, self.input_dim);
        if d == 1 {
            let rows: Vec<[f64; 1]> = (0..c).map(|i| [i as f64 - (c - 1) as f64 / 2.0]).collect();
            return Matrix::from_rows(&rows).expect("uniform rows");
        }
        if d == 2 {
            let rows: Vec<[f64; 2]> = (0..c)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / c as f64;
                    [a.cos(), a.sin()]
                })
                .collect();
            return Matrix::from_rows(&rows).expect("uniform rows");
        }
        let mut rng = rng_for(self.seed, CENTER_STREAM);
        let mut best: Option<(f64, Matrix)> = None;
        for _ in 0..CENTER_CANDIDATES {
            let raw: Vec<f64> = (0..c * d)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let m = Matrix::from_vec(c, d, raw)
                .expect("sized")
                .normalize_rows(0.0)
                .expect("gaussian draws are never exactly zero");
            let spread = min_pairwise_distance(&m);
            if best.as_ref().is_none_or(|(s, _)| spread > *s) {
                best = Some((spread, m));
            }
        }
        best.expect("at least one candidate").1
    }

    /// Fresh samples around the same centers, drawn from an independent
    /// stream. `stream` 1 is the training set, so use anything else for
    /// held-out data.
    pub fn sample(&self, stream: u64, per_class: usize) -> Result<SyntheticDataset, TrainError> {
        self.validate()?;
        let centers = self.centers();
        let mut rng = rng_for(self.seed, stream);
        let n = self.classes * per_class;
        let mut data = Vec::with_capacity(n * self.input_dim);
        let mut labels = Vec::with_capacity(n);
        for class in 0..self.classes {
            for _ in 0..per_class {
                for &c in centers.row(class) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(c + self.dispersion * z);
                }
                labels.push(class);
            }
        }
        Ok(SyntheticDataset {
            spec: self.clone(),
            samples: Matrix::from_vec(n, self.input_dim, data)?,
            labels,
            centers,
        })
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn min_pairwise_distance(m: &Matrix) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..m.rows() {
        for j in i + 1..m.rows() {
            let d: f64 = m
                .row(i)
                .iter()
                .zip(m.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d.sqrt());
        }
    }
    best
}

/// Labeled samples, class-major (all of class 0, then class 1, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub spec: BlobSpec,
    pub samples: Matrix,
    pub labels: Vec<usize>,
    pub centers: Matrix,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }
}

/// Training set for `spec`; deterministic in the seed.
pub fn generate_blobs(spec: &BlobSpec) -> Result<SyntheticDataset, TrainError> {
    spec.sample(TRAIN_STREAM, spec.per_class)
}
