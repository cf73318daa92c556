use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BoundError;
use crate::tensor::{dot, Matrix};

/// Settings for [`max_min_angle_search`].
#[derive(Clone, Copy, Debug)]
pub struct SpreadSearch {
    pub restarts: usize,
    /// Steps per annealing stage.
    pub steps: usize,
    pub seed: u64,
}

impl Default for SpreadSearch {
    fn default() -> Self {
        Self {
            restarts: 8,
            steps: 300,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpreadResult {
    /// Largest pairwise dot product of the best configuration found.
    pub max_dot: f64,
    /// Best configuration, one unit vector per row (`C x K`).
    pub points: Matrix,
}

const SHARPNESS: [f64; 5] = [4.0, 16.0, 64.0, 256.0, 1024.0];

/// Spreads `classes` unit vectors in `dim` dimensions as far apart as
/// possible by projected descent on a smoothed maximum of the pairwise dots,
/// with random restarts.
///
/// This is a numerical search that knows nothing about simplices; it is used
/// to cross-check the closed-form margin bounds.
pub fn max_min_angle_search(
    classes: usize,
    dim: usize,
    cfg: SpreadSearch,
) -> Result<SpreadResult, BoundError> {
    if classes < 2 || dim < 1 || cfg.restarts == 0 {
        return Err(BoundError::Domain(format!(
            "need classes >= 2, dim >= 1 and at least one restart (classes = {classes}, dim = {dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<SpreadResult> = None;
    for _ in 0..cfg.restarts {
        let mut pts: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                unit(v)
            })
            .collect();
        for &beta in &SHARPNESS {
            let step = 0.5 / beta.sqrt();
            for _ in 0..cfg.steps {
                descend(&mut pts, beta, step);
            }
        }
        let max_dot = max_dot(&pts);
        if best.as_ref().is_none_or(|b| max_dot < b.max_dot) {
            let points = Matrix::from_rows(&pts).expect("uniform rows");
            best = Some(SpreadResult { max_dot, points });
        }
    }
    Ok(best.expect("at least one restart"))
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = crate::tensor::l2_norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v[0] = 1.0;
    }
    v
}

fn max_dot(pts: &[Vec<f64>]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            m = m.max(dot(&pts[i], &pts[j]));
        }
    }
    m
}

// One step on (1/beta) ln sum_{i<j} exp(beta d_ij), then back onto the sphere.
fn descend(pts: &mut [Vec<f64>], beta: f64, step: f64) {
    let n = pts.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j, dot(&pts[i], &pts[j])));
        }
    }
    let top = pairs.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = pairs.iter().map(|p| (beta * (p.2 - top)).exp()).collect();
    let total: f64 = weights.iter().sum();

    let dim = pts[0].len();
    let mut grad = vec![vec![0.0; dim]; n];
    for (&(i, j, _), w) in pairs.iter().zip(&weights) {
        let w = w / total;
        for k in 0..dim {
            grad[i][k] += w * pts[j][k];
            grad[j][k] += w * pts[i][k];
        }
    }
    for (p, g) in pts.iter_mut().zip(grad) {
        // tangential component only
        let radial = dot(p, &g);
        let moved: Vec<f64> = p
            .iter()
            .zip(&g)
            .map(|(x, gx)| x - step * (gx - radial * x))
            .collect();
        *p = unit(moved);
    }
}
