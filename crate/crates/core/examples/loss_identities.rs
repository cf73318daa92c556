//! LMCL with m = 0 is NSL, NSL is softmax over s-scaled cosines, and the
//! normalized losses ignore the length of each feature.
//!
//! cargo run --example loss_identities

use marginlab::losses::{loss_value, Batch, ClassWeights, LossSpec};
use marginlab::tensor::Matrix;

fn main() {
    let x = Matrix::from_rows(&[[0.3, -1.2, 0.5], [2.0, 0.1, -0.4], [-0.7, 0.9, 1.1]]).unwrap();
    let w = Matrix::from_rows(&[
        [1.0, 0.2, -0.5, 0.3],
        [0.0, 1.5, 0.4, -0.8],
        [0.6, -0.1, 0.9, 0.2],
    ])
    .unwrap();
    let labels = vec![0, 2, 3];
    let batch = Batch::new(x.clone(), labels.clone(), 4).unwrap();
    let weights = ClassWeights::new(w).unwrap();
    let s = 16.0;

    let lmcl0 = loss_value(&LossSpec::lmcl(s, 0.0).unwrap(), &batch, &weights).unwrap();
    let nsl = loss_value(&LossSpec::nsl(s).unwrap(), &batch, &weights).unwrap();

    // plain softmax on pre-scaled unit features against unit weights
    let unit_x = x.normalize_rows(0.0).unwrap().scale(s);
    let unit_w = ClassWeights::new(weights.normalized()).unwrap();
    let scaled = Batch::new(unit_x, labels.clone(), 4).unwrap();
    let softmax = loss_value(&LossSpec::softmax(), &scaled, &unit_w).unwrap();

    println!("LMCL(m=0)          {lmcl0:.15}");
    println!("NSL                {nsl:.15}");
    println!("softmax(s * cos)   {softmax:.15}");

    let lmcl = LossSpec::lmcl(s, 0.35).unwrap();
    let base = loss_value(&lmcl, &batch, &weights).unwrap();
    for factor in [1e-3, 1.0, 100.0, 1e4] {
        let stretched = Batch::new(x.scale(factor), labels.clone(), 4).unwrap();
        let v = loss_value(&lmcl, &stretched, &weights).unwrap();
        println!(
            "LMCL(m=0.35) with features x{factor:<6}  {v:.15}  (diff {:.1e})",
            (v - base).abs()
        );
    }
}
