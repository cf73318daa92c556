//! Eight identities with 2-D features, trained with cosine margins 0, 0.1
//! and 0.2: the angular gap between classes widens as the margin grows.
//!
//! cargo run --release --example toy2d

use marginlab::bounds::m_scope;
use marginlab::experiments::{median, toy_sweep, Setup};

fn main() {
    let setup = Setup::default();
    let margins = [0.0, 0.1, 0.2];
    let seeds = [1, 2, 3];
    let runs = toy_sweep(&setup, 30.0, &margins, &seeds).unwrap();

    println!(
        "margin scope for 8 classes on a circle: {:.4}",
        m_scope(8, 2).unwrap().m_upper
    );
    for (m, runs) in margins.iter().zip(&runs) {
        let gaps: Vec<f64> = runs.iter().map(|r| r.stats.min_inter_gap).collect();
        let spreads: Vec<f64> = runs.iter().map(|r| r.stats.mean_intra_spread).collect();
        let acc: Vec<String> = runs
            .iter()
            .map(|r| format!("{:.4}", r.run.final_accuracy()))
            .collect();
        println!(
            "m = {m:.1}: median gap {:.4} rad (deg {:.1}), median intra spread {:.4} rad, train accuracy {}",
            median(&gaps),
            median(&gaps).to_degrees(),
            median(&spreads),
            acc.join(" ")
        );
    }
}
