//! LMCL with and without feature normalization. The unnormalized model
//! starts from a plain softmax run, the normalized one from scratch.
//!
//! cargo run --release --example normalization_ablation

use marginlab::experiments::{margin_spec, normalization_ablation, Setup};

fn main() {
    let setup = Setup::verification();
    let report =
        normalization_ablation(&setup, margin_spec(30.0, 0.2).unwrap(), &[1, 2, 3]).unwrap();
    println!(
        "{:>4} {:>9} {:>11} {:>13}",
        "seed", "softmax", "normalized", "unnormalized"
    );
    for r in &report.seeds {
        println!(
            "{:>4} {:>9.4} {:>11.4} {:>13.4}",
            r.seed, r.softmax_accuracy, r.normalized_accuracy, r.unnormalized_accuracy
        );
    }
    println!(
        "median {:>7.4} {:>11.4} {:>13.4}",
        report.median_softmax, report.median_normalized, report.median_unnormalized
    );
}
