use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::losses::ClassWeights;
use crate::tensor::{dot, Matrix, DEFAULT_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAngles {
    pub class: usize,
    pub count: usize,
    /// Mean angle (radians) between members and their class weight; `None`
    /// for a class without members.
    pub intra_spread: Option<f64>,
    /// Smallest angle between a member of this class and a member of any
    /// other class; `None` when either side is empty.
    pub inter_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularStats {
    pub per_class: Vec<ClassAngles>,
    /// Smallest angle between members of different classes.
    pub min_inter_gap: f64,
    /// Mean of the per-class intra spreads over non-empty classes.
    pub mean_intra_spread: f64,
}

/// Angular spread within and separation between classes, measured on
/// L2-normalized features and weights.
pub fn angular_stats(
    features: &Matrix,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<AngularStats, TrainError> {
    if features.rows() != labels.len() {
        return Err(TrainError::Shape(format!(
            "{} features for {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if features.cols() != weights.feature_dim() {
        return Err(TrainError::Shape(format!(
            "features are {}-d, weights {}-d",
            features.cols(),
            weights.feature_dim()
        )));
    }
    let classes = weights.classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(TrainError::Shape(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let x = features.normalize_rows(DEFAULT_EPS)?;
    let w = weights.normalized();

    let mut counts = vec![0usize; classes];
    let mut spread_sum = vec![0.0; classes];
    for (i, &l) in labels.iter().enumerate() {
        let cos: f64 = (0..x.cols()).map(|k| x.get(i, k) * w.get(k, l)).sum();
        spread_sum[l] += angle(cos);
        counts[l] += 1;
    }

    // the smallest angle corresponds to the largest dot product
    let mut best_dot = vec![f64::NEG_INFINITY; classes];
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] != labels[j] {
                let d = dot(x.row(i), x.row(j));
                best_dot[labels[i]] = best_dot[labels[i]].max(d);
                best_dot[labels[j]] = best_dot[labels[j]].max(d);
            }
        }
    }

    let per_class: Vec<ClassAngles> = (0..classes)
        .map(|c| ClassAngles {
            class: c,
            count: counts[c],
            intra_spread: (counts[c] > 0).then(|| spread_sum[c] / counts[c] as f64),
            inter_gap: best_dot[c].is_finite().then(|| angle(best_dot[c])),
        })
        .collect();
    let min_inter_gap = per_class
        .iter()
        .filter_map(|c| c.inter_gap)
        .fold(f64::INFINITY, f64::min);
    let spreads: Vec<f64> = per_class.iter().filter_map(|c| c.intra_spread).collect();
    let mean_intra_spread = spreads.iter().sum::<f64>() / spreads.len().max(1) as f64;
    Ok(AngularStats {
        per_class,
        min_inter_gap,
        mean_intra_spread,
    })
}

fn angle(cos: f64) -> f64 {
    cos.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn features_on_their_weights_have_zero_spread() {
        let w = ClassWeights::new(Matrix::from_rows(&[[1.0, 0.0, -1.0], [0.0, 1.0, 0.0]]).unwrap())
            .unwrap();
        let x = Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0], [-1.0, 0.0], [5.0, 0.0]]).unwrap();
        let s = angular_stats(&x, &[0, 1, 2, 0], &w).unwrap();
        for c in &s.per_class {
            assert!(c.intra_spread.unwrap().abs() < 1e-7);
        }
        assert!((s.min_inter_gap - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn antipodal_classes_are_pi_apart() {
        let w = ClassWeights::new(Matrix::from_rows(&[[1.0, -1.0], [0.0, 0.0]]).unwrap()).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0], [-2.0, 0.0]]).unwrap();
        let s = angular_stats(&x, &[0, 1], &w).unwrap();
        assert!((s.min_inter_gap - PI).abs() < 1e-12);
    }

    #[test]
    fn empty_class_and_degenerate_feature() {
        let w = ClassWeights::new(Matrix::identity(2)).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.9, 0.1]]).unwrap();
        let s = angular_stats(&x, &[0, 0], &w).unwrap();
        assert_eq!(s.per_class[1].intra_spread, None);
        assert_eq!(s.per_class[0].inter_gap, None);
        let bad = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(angular_stats(&bad, &[0], &w).is_err());
    }
}
