use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::BoundError;
use crate::tensor::{Matrix, DEFAULT_EPS};

const UNIT_TOL: f64 = 1e-12;
const INEQUALITY_TOL: f64 = 1e-9;

/// Unit class weight vectors, one per column (`K x C`).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightConfig(Matrix);

impl WeightConfig {
    /// Accepts `w` only if every column has unit norm within `1e-12`.
    pub fn new(w: Matrix) -> Result<Self, BoundError> {
        if w.cols() < 2 {
            return Err(BoundError::Precondition(
                "need at least two weight vectors".into(),
            ));
        }
        for c in 0..w.cols() {
            let n = crate::tensor::l2_norm(&w.column(c));
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(BoundError::Precondition(format!(
                    "column {c} has norm {n}, expected 1"
                )));
            }
        }
        Ok(Self(w))
    }

    /// Normalizes the columns of `w` first.
    pub fn from_raw(w: &Matrix) -> Result<Self, BoundError> {
        let unit = w
            .normalize_columns(DEFAULT_EPS)
            .map_err(|e| BoundError::Precondition(e.to_string()))?;
        Self::new(unit)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    /// Gram matrix `W^T W` (`C x C`).
    pub fn gram(&self) -> Matrix {
        self.0
            .transpose()
            .matmul(&self.0)
            .expect("square by construction")
    }

    /// All `W_i . W_j` for `i != j`, ordered by `(i, j)`.
    pub fn off_diagonal_dots(&self) -> Vec<f64> {
        let g = self.gram();
        let c = self.classes();
        let mut out = Vec::with_capacity(c * (c - 1));
        for i in 0..c {
            for j in 0..c {
                if i != j {
                    out.push(g.get(i, j));
                }
            }
        }
        out
    }

    pub fn max_pairwise_dot(&self) -> f64 {
        self.off_diagonal_dots()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Norm of `sum_i W_i`.
    pub fn resultant_norm(&self) -> f64 {
        let sums: Vec<f64> = (0..self.dim())
            .map(|r| self.0.row(r).iter().sum())
            .collect();
        crate::tensor::l2_norm(&sums)
    }
}

/// Evenly spread unit weights.
///
/// In two dimensions the `C` vectors sit at angles `2 pi i / C`. Otherwise
/// they form a regular simplex (pairwise dots `-1 / (C - 1)`, zero sum),
/// built from the centered standard basis of `R^C` expressed in the Helmert
/// basis and zero-padded to `K` coordinates.
pub fn simplex_weights(classes: usize, dim: usize) -> Result<WeightConfig, BoundError> {
    if classes < 2 || dim < 2 {
        return Err(BoundError::Domain(format!(
            "need classes >= 2 and dim >= 2, got classes = {classes}, dim = {dim}"
        )));
    }
    let mut w = Matrix::zeros(dim, classes);
    if dim == 2 {
        for i in 0..classes {
            let a = 2.0 * PI * i as f64 / classes as f64;
            w.set(0, i, a.cos());
            w.set(1, i, a.sin());
        }
    } else {
        if classes > dim + 1 {
            return Err(BoundError::Infeasible { classes, dim });
        }
        let c = classes as f64;
        let radius = (c / (c - 1.0)).sqrt();
        for k in 1..classes {
            let kf = k as f64;
            let h = 1.0 / (kf * (kf + 1.0)).sqrt();
            for i in 0..classes {
                let coord = match i.cmp(&k) {
                    std::cmp::Ordering::Less => h,
                    std::cmp::Ordering::Equal => -kf * h,
                    std::cmp::Ordering::Greater => 0.0,
                };
                w.set(k - 1, i, radius * coord);
            }
        }
    }
    // rounding in the construction is far below the unit tolerance, but
    // renormalize so the columns are as close to unit as f64 allows
    WeightConfig::from_raw(&w)
}

/// Minimum over classes of the normalized-softmax posterior of class `i`
/// for a feature lying exactly on `W_i`, at scale `s`.
pub fn center_posterior(w: &WeightConfig, s: f64) -> f64 {
    let g = w.gram();
    (0..w.classes())
        .map(|i| {
            let rest: f64 = (0..w.classes())
                .filter(|&j| j != i)
                .map(|j| (s * (g.get(i, j) - g.get(i, i))).exp())
                .sum();
            1.0 / (1.0 + rest)
        })
        .fold(f64::INFINITY, f64::min)
}

/// One checked inequality `computed >= bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub description: String,
    pub computed: f64,
    pub bound: f64,
    pub satisfied: bool,
}

impl Evidence {
    pub(crate) fn new(description: String, computed: f64, bound: f64, satisfied: bool) -> Self {
        Self {
            description,
            computed,
            bound,
            satisfied,
        }
    }

    fn at_least(description: String, computed: f64, bound: f64) -> Self {
        let tol = INEQUALITY_TOL * bound.abs().max(1.0);
        Self::new(description, computed, bound, computed >= bound - tol)
    }
}

/// Checks the three inequalities the scale and margin bounds are derived
/// from, for any unit configuration:
///
/// 1. `sum_{i != j} W_i . W_j >= -C`
/// 2. `max_{i != j} W_i . W_j >= -1 / (C - 1)`
/// 3. for each `s` in `scales`, `mean exp(s W_i . W_j) >= exp(s mean W_i . W_j)`
///
/// Each entry carries both sides; a relative slack of `1e-9` absorbs
/// rounding in the equality cases.
pub fn verify_weight_inequalities(w: &WeightConfig, scales: &[f64]) -> Vec<Evidence> {
    let c = w.classes() as f64;
    let dots = w.off_diagonal_dots();
    let sum: f64 = dots.iter().sum();
    let max = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = sum / dots.len() as f64;

    let mut out = vec![
        Evidence::at_least("sum of off-diagonal dots >= -C".into(), sum, -c),
        Evidence::at_least(
            "max off-diagonal dot >= -1/(C-1)".into(),
            max,
            -1.0 / (c - 1.0),
        ),
    ];
    for &s in scales {
        let lhs = dots.iter().map(|d| (s * d).exp()).sum::<f64>() / dots.len() as f64;
        let rhs = (s * mean).exp();
        out.push(Evidence::at_least(
            format!("Jensen: mean exp(s*dot) >= exp(s*mean dot) at s = {s}"),
            lhs,
            rhs,
        ));
    }
    out
}
