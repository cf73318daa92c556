mod common;

use common::{fd_gradient, max_rel_error, random_matrix, rng};
use marginlab::tensor::{Graph, Matrix, NodeId, TensorError};
use proptest::prelude::*;

/// Builds `op` on leaves holding `inputs`, reduces the output to a scalar
/// with a fixed random weighting, and returns the worst relative error of
/// each input's gradient against finite differences.
fn check(inputs: &[Matrix], seed: u64, op: impl Fn(&mut Graph, &[NodeId]) -> NodeId) -> Vec<f64> {
    let probe = |values: &[Matrix]| -> (Graph, Vec<NodeId>, NodeId) {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|m| g.leaf(m.clone())).collect();
        let out = op(&mut g, &ids);
        let (r, c) = g.value(out).shape();
        let weights = g.leaf(random_matrix(&mut rng(seed), r, c));
        let weighted = g.mul(out, weights).unwrap();
        let root = g.sum(weighted);
        (g, ids, root)
    };
    let (mut g, ids, root) = probe(inputs);
    g.backward(root).unwrap();
    (0..inputs.len())
        .map(|k| {
            let numeric = fd_gradient(&inputs[k], |x| {
                let mut vals = inputs.to_vec();
                vals[k] = x.clone();
                let (g, _, root) = probe(&vals);
                g.value(root).item()
            });
            max_rel_error(g.grad(ids[k]).unwrap(), &numeric)
        })
        .collect()
}

type OpCase = (
    &'static str,
    Vec<Matrix>,
    Box<dyn Fn(&mut Graph, &[NodeId]) -> NodeId>,
);

#[test]
fn matmul_gradients() {
    let mut r = rng(1);
    let (a, b) = (random_matrix(&mut r, 3, 4), random_matrix(&mut r, 4, 2));
    for e in check(&[a, b], 2, |g, x| g.matmul(x[0], x[1]).unwrap()) {
        assert!(e <= 1e-6, "{e}");
    }
}

#[test]
fn row_normalize_gradient() {
    let a = random_matrix(&mut rng(3), 5, 3);
    let e = check(&[a], 4, |g, x| g.row_l2_normalize(x[0], 1e-12).unwrap());
    assert!(e[0] <= 1e-6, "{e:?}");
}

#[test]
fn elementwise_gradients() {
    let mut r = rng(5);
    let a = random_matrix(&mut r, 3, 3);
    let b = random_matrix(&mut r, 3, 3);
    // keep relu away from its kink and log on positive inputs
    let away = a.map(|v| if v.abs() < 0.05 { 0.3 } else { v });
    let positive = a.map(|v| v.abs() + 0.2);
    let cases: Vec<OpCase> = vec![
        (
            "add",
            vec![a.clone(), b.clone()],
            Box::new(|g, x| g.add(x[0], x[1]).unwrap()),
        ),
        (
            "sub",
            vec![a.clone(), b.clone()],
            Box::new(|g, x| g.sub(x[0], x[1]).unwrap()),
        ),
        (
            "mul",
            vec![a.clone(), b.clone()],
            Box::new(|g, x| g.mul(x[0], x[1]).unwrap()),
        ),
        (
            "scale",
            vec![a.clone()],
            Box::new(|g, x| g.scale(x[0], -2.5)),
        ),
        ("relu", vec![away], Box::new(|g, x| g.relu(x[0]))),
        (
            "exp",
            vec![a.clone()],
            Box::new(|g, x| g.exp(x[0]).unwrap()),
        ),
        ("log", vec![positive], Box::new(|g, x| g.log(x[0]).unwrap())),
        (
            "transpose",
            vec![a.clone()],
            Box::new(|g, x| g.transpose(x[0])),
        ),
        (
            "row_norm",
            vec![a.clone()],
            Box::new(|g, x| g.row_norm(x[0])),
        ),
    ];
    for (name, inputs, op) in cases {
        for e in check(&inputs, 6, op) {
            assert!(e <= 1e-6, "{name}: {e}");
        }
    }
}

#[test]
fn composite_normalize_matmul_cross_entropy() {
    let mut r = rng(7);
    let x = random_matrix(&mut r, 4, 3);
    let w = random_matrix(&mut r, 3, 5);
    let labels = [0usize, 4, 2, 2];
    let build = |xv: &Matrix, wv: &Matrix| -> (Graph, NodeId, NodeId, NodeId) {
        let mut g = Graph::new();
        let xi = g.leaf(xv.clone());
        let wi = g.leaf(wv.clone());
        let xn = g.row_l2_normalize(xi, 1e-12).unwrap();
        let wt = g.transpose(wi);
        let wtn = g.row_l2_normalize(wt, 1e-12).unwrap();
        let wn = g.transpose(wtn);
        let z = g.matmul(xn, wn).unwrap();
        let z = g.scale(z, 8.0);
        let loss = g.cross_entropy(z, &labels).unwrap();
        (g, xi, wi, loss)
    };
    let (mut g, xi, wi, loss) = build(&x, &w);
    g.backward(loss).unwrap();
    let fx = fd_gradient(&x, |xp| {
        let (g, _, _, l) = build(xp, &w);
        g.value(l).item()
    });
    let fw = fd_gradient(&w, |wp| {
        let (g, _, _, l) = build(&x, wp);
        g.value(l).item()
    });
    assert!(max_rel_error(g.grad(xi).unwrap(), &fx) <= 1e-5);
    assert!(max_rel_error(g.grad(wi).unwrap(), &fw) <= 1e-5);
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let a = g.leaf(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
    let root = g.sum(a);
    g.backward(root).unwrap();
    assert_eq!(g.grad(a).unwrap(), &Matrix::ones(2, 2));
    assert_eq!(g.grad(root).unwrap(), &Matrix::ones(1, 1));

    let mut g = Graph::new();
    let x = g.leaf(Matrix::scalar(3.0));
    let sq = g.mul(x, x).unwrap();
    g.backward(sq).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 6.0);

    let mut g = Graph::new();
    let m = g.leaf(Matrix::ones(2, 2));
    assert!(matches!(
        g.backward(m),
        Err(TensorError::NonScalarRoot { rows: 2, cols: 2 })
    ));
}

#[test]
fn shape_and_domain_errors() {
    let mut g = Graph::new();
    let a = g.leaf(Matrix::ones(2, 3));
    let b = g.leaf(Matrix::ones(2, 3));
    assert!(matches!(g.matmul(a, b), Err(TensorError::Dimension { .. })));
    let neg = g.leaf(Matrix::from_rows(&[[1.0, -1.0]]).unwrap());
    assert!(matches!(g.log(neg), Err(TensorError::Domain { .. })));
    let zero = g.leaf(Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap());
    assert!(matches!(
        g.row_l2_normalize(zero, 1e-12),
        Err(TensorError::DegenerateVector { index: 0, .. })
    ));
}

fn small_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

proptest! {
    #[test]
    fn normalize_is_unit_and_idempotent(m in small_matrix()) {
        prop_assume!(m.row_norms().iter().all(|&n| n > 1e-3));
        let mut g = Graph::new();
        let a = g.leaf(m);
        let once = g.row_l2_normalize(a, 1e-12).unwrap();
        let twice = g.row_l2_normalize(once, 1e-12).unwrap();
        for n in g.value(once).row_norms() {
            prop_assert!((n - 1.0).abs() <= 1e-12);
        }
        for (x, y) in g.value(once).data().iter().zip(g.value(twice).data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn repeated_backward_is_identical(m in small_matrix(), seed in 0u64..1000) {
        let mut g = Graph::new();
        let a = g.leaf(m.clone());
        let w = g.leaf(random_matrix(&mut rng(seed), m.rows(), m.cols()));
        let e = g.mul(a, w).unwrap();
        let e = g.mul(e, a).unwrap();
        let root = g.sum(e);
        g.backward(root).unwrap();
        let first = g.grad(a).unwrap().clone();
        g.backward(root).unwrap();
        prop_assert_eq!(g.grad(a).unwrap(), &first);
    }
}
