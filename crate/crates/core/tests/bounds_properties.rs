mod common;

use std::f64::consts::PI;

use common::rng;
use marginlab::bounds::{
    bound_report, center_posterior, decision_regions, lmcl_margin_width, m_scope,
    max_min_angle_search, s_lower_bound, simplex_weights, verify_weight_inequalities, BoundError,
    BoundKind, GridSpec, RegionLabel, RegionLoss, RegionSpace, SpreadSearch, WeightConfig,
};
use marginlab::tensor::Matrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn random_unit_config(seed: u64, classes: usize, dim: usize) -> WeightConfig {
    let mut r = rng(seed);
    let mut w = Matrix::zeros(dim, classes);
    for c in 0..classes {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (k, x) in v.iter().enumerate() {
            w.set(k, c, x / n);
        }
    }
    WeightConfig::new(w).unwrap()
}

#[test]
fn s_bound_examples() {
    assert_eq!(s_lower_bound(2, 0.5).unwrap(), 0.0);
    let expected = 7.0 / 8.0 * 693f64.ln();
    assert!((s_lower_bound(8, 0.99).unwrap() - expected).abs() < 1e-12);
    assert!((expected - 5.723).abs() < 1e-3);
    assert!(matches!(s_lower_bound(1, 0.9), Err(BoundError::Domain(_))));
    assert!(s_lower_bound(8, 1.0).is_err());
    assert!(s_lower_bound(8, 0.0).is_err());
}

#[test]
fn s_bound_is_monotone() {
    for c in 2..200 {
        assert!(s_lower_bound(c + 1, 0.9).unwrap() > s_lower_bound(c, 0.9).unwrap());
    }
    let mut prev = s_lower_bound(10, 0.01).unwrap();
    for i in 2..100 {
        let next = s_lower_bound(10, i as f64 / 100.0).unwrap();
        assert!(next > prev);
        prev = next;
    }
}

#[test]
fn posterior_at_bound_equals_target() {
    for (c, k, p) in [
        (8, 7, 0.9),
        (4, 3, 0.99),
        (2, 2, 0.75),
        (5, 10, 0.95),
        (3, 2, 0.8),
    ] {
        let w = simplex_weights(c, k).unwrap();
        let s = s_lower_bound(c, p).unwrap();
        let got = center_posterior(&w, s);
        assert!((got - p).abs() <= 1e-9, "C={c} K={k}: {got} vs {p}");
    }
}

#[test]
fn m_scope_examples() {
    let toy = m_scope(8, 2).unwrap();
    assert!((toy.m_upper - (1.0 - (PI / 4.0).cos())).abs() < 1e-12);
    assert!((toy.m_upper - 0.2929).abs() < 1e-4);
    assert_eq!(toy.kind, BoundKind::Exact);

    let tetra = m_scope(4, 3).unwrap();
    assert!((tetra.m_upper - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(tetra.kind, BoundKind::Exact);
    assert_eq!(m_scope(100, 3).unwrap().kind, BoundKind::Soft);
    assert!(m_scope(1, 3).is_err() && m_scope(3, 1).is_err());
}

#[test]
fn planar_m_scope_decreases_with_classes() {
    let mut prev = m_scope(2, 2).unwrap().m_upper;
    assert!((prev - 2.0).abs() < 1e-12);
    for c in 3..=64 {
        let next = m_scope(c, 2).unwrap().m_upper;
        assert!(next < prev);
        prev = next;
    }
}

#[test]
fn simplex_dots_match_margin_scope() {
    for k in 2..=6 {
        for c in 2..=k + 1 {
            let w = simplex_weights(c, k).unwrap();
            let expected = if k == 2 {
                (2.0 * PI / c as f64).cos()
            } else {
                -1.0 / (c as f64 - 1.0)
            };
            let sum: f64 = (0..k)
                .map(|r| (0..c).map(|i| w.matrix().get(r, i)).sum::<f64>().abs())
                .sum();
            assert!(sum < 1e-9, "C={c} K={k} resultant {sum}");
            if k > 2 {
                for d in w.off_diagonal_dots() {
                    assert!((d - expected).abs() < 1e-9);
                }
            }
            assert!((1.0 - w.max_pairwise_dot() - m_scope(c, k).unwrap().m_upper).abs() < 1e-9);
        }
    }
    assert!(matches!(
        simplex_weights(6, 3),
        Err(BoundError::Infeasible { .. })
    ));
}

#[test]
fn tetrahedron_attains_sum_with_equality() {
    let w = simplex_weights(4, 3).unwrap();
    for d in w.off_diagonal_dots() {
        assert!((d + 1.0 / 3.0).abs() < 1e-12);
    }
    let sum: f64 = w.off_diagonal_dots().iter().sum();
    assert!((sum + 4.0).abs() <= 1e-9);
    assert!(verify_weight_inequalities(&w, &[1.0, 8.0, 64.0])
        .iter()
        .all(|e| e.satisfied));
}

#[test]
fn random_configurations_satisfy_inequalities() {
    let mut violations = Vec::new();
    for seed in 0..1000u64 {
        let c = 5 + (seed as usize % 16);
        let k = 2 + (seed as usize / 16 % 7);
        let w = random_unit_config(seed, c, k);
        for e in verify_weight_inequalities(&w, &[1.0, 8.0, 64.0]) {
            if !e.satisfied {
                violations.push((seed, e));
            }
        }
    }
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn spread_search_finds_simplex() {
    for k in 2..=4 {
        for c in 2..=(k + 1).min(6) {
            let r = max_min_angle_search(c, k, SpreadSearch::default()).unwrap();
            let target = -1.0 / (c as f64 - 1.0);
            assert!(
                (r.max_dot - target).abs() < 1e-3,
                "C={c} K={k}: {} vs {target}",
                r.max_dot
            );
        }
    }
}

#[test]
fn bound_report_for_toy_settings() {
    let r = bound_report(8, 2, 0.99, Some(30.0), Some(0.2)).unwrap();
    assert_eq!(r.s_satisfied, Some(true));
    assert_eq!(r.m_satisfied, Some(true));
    assert!((r.s_lower - 5.723).abs() < 1e-3);
    assert!(!r.m_upper_exceeds_one);
    let r = bound_report(4, 3, 0.99, None, Some(1.2)).unwrap();
    assert_eq!(r.m_bound_kind, BoundKind::Exact);
    assert!(r.m_upper_exceeds_one);
    assert!(!r.oracle_evidence.is_empty() && r.oracle_evidence.iter().all(|e| e.satisfied));
    assert_eq!(
        bound_report(8, 2, 0.99, Some(2.0), Some(0.5))
            .unwrap()
            .s_satisfied,
        Some(false)
    );
}

#[test]
fn region_maps() {
    let angle = GridSpec::new(256, RegionSpace::Angle);
    let nsl = decision_regions(RegionLoss::Nsl, angle).unwrap();
    assert_eq!(nsl.count(RegionLabel::Margin), 0);

    let soft = decision_regions(RegionLoss::Softmax { norms: (2.0, 1.0) }, angle).unwrap();
    assert!(soft.count(RegionLabel::Overlap) > 0);

    // the A-Softmax band between theta1 = theta2 / k and theta1 = k theta2 is
    // (k - 1/k) theta2 wide, so it closes at the origin
    let a = decision_regions(RegionLoss::ASoftmax { multiplier: 4.0 }, angle).unwrap();
    assert_eq!(a.margin_cells_in_row(0), 0);
    for j in [4usize, 8, 16] {
        let expected = (4.0 - 0.25) * angle.coordinate(j) / angle.spacing();
        assert!((a.margin_cells_in_row(j) as f64 - expected).abs() <= 2.0);
    }
    assert!(a.margin_cells_in_row(2) < a.margin_cells_in_row(16));

    let cos = GridSpec::new(512, RegionSpace::Cosine);
    for m in [0.1, 0.2, 0.35, 0.5] {
        let g = decision_regions(RegionLoss::Lmcl { m }, cos).unwrap();
        assert!(
            (g.measured_band_width() - lmcl_margin_width(m)).abs() <= cos.spacing(),
            "m = {m}"
        );
        assert_eq!(g.count(RegionLabel::Overlap), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inequalities_hold(seed in any::<u64>(), c in 2usize..25, k in 2usize..10, s in 0.01f64..100.0) {
        let w = random_unit_config(seed, c, k);
        let ev = verify_weight_inequalities(&w, &[s]);
        prop_assert!(ev.iter().all(|e| e.satisfied), "{:?}", ev);
    }

    #[test]
    fn lmcl_band_grows_with_margin(m1 in 0.0f64..0.9, dm in 0.05f64..0.09) {
        let cos = GridSpec::new(128, RegionSpace::Cosine);
        let a = decision_regions(RegionLoss::Lmcl { m: m1 }, cos).unwrap();
        let b = decision_regions(RegionLoss::Lmcl { m: m1 + dm }, cos).unwrap();
        prop_assert!(b.count(RegionLabel::Margin) > a.count(RegionLabel::Margin));
    }
}
