//! Held-out verification accuracy as the cosine margin grows, including
//! margins past the scope bound where training stops converging.
//!
//! cargo run --release --example margin_sweep

use marginlab::bounds::m_scope;
use marginlab::experiments::{margin_sweep, Setup};

fn main() {
    let setup = Setup::verification();
    let scope = m_scope(setup.data.classes, setup.model.feature_dim).unwrap();
    println!("m scope: {:.4}", scope.m_upper);
    let rows = margin_sweep(&setup, 30.0, &[0.0, 0.1, 0.2, 0.3, 0.4, 0.9], &[1, 2, 3]).unwrap();
    println!(
        "{:>5} {:>10} {:>10} {:>11}",
        "m", "accuracy", "converged", "final loss"
    );
    for r in rows {
        println!(
            "{:>5} {:>10.4} {:>8}/{} {:>11.4}{}",
            r.m,
            r.median_accuracy,
            r.converged_runs,
            r.cells.len(),
            r.median_final_loss,
            if r.beyond_m_scope {
                "  beyond scope"
            } else {
                ""
            }
        );
    }
}
