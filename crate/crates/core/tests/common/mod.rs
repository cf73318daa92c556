#![allow(dead_code)]

use marginlab::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Central finite-difference gradient of `f` at `at`.
pub fn fd_gradient(at: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(at.rows(), at.cols());
    for r in 0..at.rows() {
        for c in 0..at.cols() {
            let mut plus = at.clone();
            plus.set(r, c, at.get(r, c) + FD_STEP);
            let mut minus = at.clone();
            minus.set(r, c, at.get(r, c) - FD_STEP);
            out.set(r, c, (f(&plus) - f(&minus)) / (2.0 * FD_STEP));
        }
    }
    out
}

/// Largest elementwise relative error, with a floor on the denominator so
/// entries that are both essentially zero do not blow up.
pub fn max_rel_error(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Lloyd's k-means with several seeded random-sample starts; returns the
/// centers of the lowest-inertia solution.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    let n = points.rows();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..restarts {
        // k-means++ seeding
        let mut centers = vec![points.row(rng.gen_range(0..n)).to_vec()];
        while centers.len() < k {
            let d: Vec<f64> = (0..n)
                .map(|i| {
                    centers
                        .iter()
                        .map(|c| dist(points.row(i), c))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let total: f64 = d.iter().sum();
            let mut pick = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, di) in d.iter().enumerate() {
                if pick < *di {
                    chosen = i;
                    break;
                }
                pick -= di;
            }
            centers.push(points.row(chosen).to_vec());
        }
        let mut assign = vec![0usize; n];
        for _ in 0..100 {
            let mut changed = false;
            for (i, slot) in assign.iter_mut().enumerate() {
                let a = (0..k)
                    .min_by(|&x, &y| {
                        dist(points.row(i), &centers[x])
                            .total_cmp(&dist(points.row(i), &centers[y]))
                    })
                    .unwrap();
                if a != *slot {
                    *slot = a;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                for (d, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|&i| points.get(i, d)).sum::<f64>()
                        / members.len() as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| dist(points.row(i), &centers[assign[i]]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, centers));
        }
    }
    best.unwrap().1
}
