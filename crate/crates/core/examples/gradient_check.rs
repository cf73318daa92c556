//! Compares the analytic gradients of every loss with central finite
//! differences on a random batch.
//!
//! cargo run --example gradient_check

use marginlab::losses::{loss_gradients, loss_value, Batch, ClassWeights, LossSpec};
use marginlab::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `at`.
fn worst_error(at: &Matrix, analytic: &Matrix, f: impl Fn(&Matrix) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..at.rows() {
        for c in 0..at.cols() {
            let mut plus = at.clone();
            plus.set(r, c, at.get(r, c) + H);
            let mut minus = at.clone();
            minus.set(r, c, at.get(r, c) - H);
            let numeric = (f(&plus) - f(&minus)) / (2.0 * H);
            let a = analytic.get(r, c);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
        }
    }
    worst
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, k, c) = (6, 4, 5);
    let x = random(&mut rng, n, k);
    let w = random(&mut rng, k, c);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();

    for spec in [
        LossSpec::softmax(),
        LossSpec::nsl(4.0).unwrap(),
        LossSpec::lmcl(4.0, 0.35).unwrap(),
    ] {
        let batch = Batch::new(x.clone(), labels.clone(), c).unwrap();
        let weights = ClassWeights::new(w.clone()).unwrap();
        let grads = loss_gradients(&spec, &batch, &weights).unwrap();

        let fx = worst_error(&x, &grads.features, |xp| {
            loss_value(
                &spec,
                &Batch::new(xp.clone(), labels.clone(), c).unwrap(),
                &weights,
            )
            .unwrap()
        });
        let fw = worst_error(&w, &grads.weights, |wp| {
            loss_value(&spec, &batch, &ClassWeights::new(wp.clone()).unwrap()).unwrap()
        });
        println!(
            "{:<8} loss {:.6}  worst rel. error: features {:.2e}, weights {:.2e}",
            spec.variant().to_string(),
            grads.loss,
            fx,
            fw
        );
    }
}
