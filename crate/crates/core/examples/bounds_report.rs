//! Scale and margin bounds for a few class counts and feature dimensions,
//! with the uniform weight configurations that make them tight.
//!
//! cargo run --example bounds_report

use marginlab::bounds::{
    bound_report, center_posterior, m_scope, max_min_angle_search, s_lower_bound, simplex_weights,
    SpreadSearch,
};

fn main() {
    println!("lower bound of s for P_W = 0.9 / 0.99 / 0.999:");
    for c in [2, 8, 100, 10_000] {
        let b: Vec<String> = [0.9, 0.99, 0.999]
            .iter()
            .map(|&p| format!("{:8.3}", s_lower_bound(c, p).unwrap()))
            .collect();
        println!("  C = {c:>6}: {}", b.join(" "));
    }

    println!("\nmargin scope:");
    for (c, k) in [(8, 2), (3, 2), (4, 3), (10, 9), (10, 3), (10_000, 512)] {
        let s = m_scope(c, k).unwrap();
        println!(
            "  C = {c:>6}, K = {k:>3}: m <= {:.4} {:?}",
            s.m_upper, s.kind
        );
    }

    println!("\nposterior at class centers equals P_W when s sits on the bound:");
    for (c, k) in [(3, 2), (4, 3), (6, 5)] {
        let w = simplex_weights(c, k).unwrap();
        let s = s_lower_bound(c, 0.95).unwrap();
        println!(
            "  C = {c}, K = {k}, s = {s:.4}: posterior {:.12}",
            center_posterior(&w, s)
        );
    }

    println!("\nnumerical max-min-angle search against -1/(C-1):");
    for (c, k) in [(3, 2), (4, 3), (5, 4), (3, 4)] {
        let found = max_min_angle_search(c, k, SpreadSearch::default()).unwrap();
        println!(
            "  C = {c}, K = {k}: max dot {:.6}, simplex {:.6}",
            found.max_dot,
            -1.0 / (c as f64 - 1.0)
        );
    }

    let report = bound_report(8, 2, 0.99, Some(30.0), Some(0.2)).unwrap();
    println!("\n{}", serde_json::to_string_pretty(&report).unwrap());
}
