use super::{Matrix, TensorError};

/// Handle to a node of the [`Graph`] that created it.
///
/// Handles are plain indices; using one with a different graph panics or
/// silently refers to an unrelated node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Transpose(NodeId),
    RowL2Normalize(NodeId),
    RowNorm(NodeId),
    Sum(NodeId),
    CrossEntropy(NodeId, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of matrix operations supporting reverse-mode
/// differentiation.
///
/// Nodes are pushed in evaluation order, so every node's inputs precede it
/// and a single reverse sweep visits them in a valid topological order.
/// A graph is meant to be rebuilt for every training step.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input value (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` root with respect to `id`.
    ///
    /// `None` when `id` does not influence the root or no backward pass ran.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a).map(f64::exp);
        if !v.is_finite() {
            return Err(TensorError::Domain {
                op: "exp",
                detail: "result overflows f64".into(),
            });
        }
        Ok(self.push(Op::Exp(a), v))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let input = self.value(a);
        if let Some(bad) = input.data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(TensorError::Domain {
                op: "log",
                detail: format!("non-positive entry {bad}"),
            });
        }
        let v = input.map(f64::ln);
        Ok(self.push(Op::Log(a), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Scales every row to unit L2 norm. Rows with norm `<= eps` are rejected.
    pub fn row_l2_normalize(&mut self, a: NodeId, eps: f64) -> Result<NodeId, TensorError> {
        let v = self.value(a).normalize_rows(eps)?;
        Ok(self.push(Op::RowL2Normalize(a), v))
    }

    /// Column vector (`rows x 1`) of row L2 norms.
    pub fn row_norm(&mut self, a: NodeId) -> NodeId {
        let norms = self.value(a).row_norms();
        let n = norms.len();
        let v = Matrix::from_vec(n, 1, norms).expect("shape by construction");
        self.push(Op::RowNorm(a), v)
    }

    /// Sum of all entries as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    /// Mean softmax cross-entropy of `logits` (one row per sample) against
    /// `labels`, evaluated with max-subtraction inside the log-sum-exp.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<NodeId, TensorError> {
        let z = self.value(logits);
        if z.rows() != labels.len() || z.rows() == 0 {
            return Err(TensorError::Dimension {
                op: "cross_entropy",
                detail: format!("{} logit rows for {} labels", z.rows(), labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= z.cols()) {
            return Err(TensorError::Dimension {
                op: "cross_entropy",
                detail: format!("label {bad} out of range for {} classes", z.cols()),
            });
        }
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| log_sum_exp(z.row(i)) - z.get(i, y))
            .sum();
        let v = Matrix::scalar(total / labels.len() as f64);
        Ok(self.push(Op::CrossEntropy(logits, labels.to_vec()), v))
    }

    /// Reverse sweep from a scalar `root`. Gradient accumulators are reset
    /// first, so calling this twice yields identical results.
    pub fn backward(&mut self, root: NodeId) -> Result<(), TensorError> {
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(TensorError::NonScalarRoot {
                rows: shape.0,
                cols: shape.1,
            });
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[root.0] = Some(Matrix::ones(1, 1));

        for idx in (0..=root.0).rev() {
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            let contributions = self.local_gradients(idx, &upstream)?;
            self.grads[idx] = Some(upstream);
            for (input, g) in contributions {
                match &mut self.grads[input.0] {
                    Some(acc) => acc.axpy(1.0, &g)?,
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn local_gradients(
        &self,
        idx: usize,
        upstream: &Matrix,
    ) -> Result<Vec<(NodeId, Matrix)>, TensorError> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let grads = match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let da = upstream.matmul(&self.value(*b).transpose())?;
                let db = self.value(*a).transpose().matmul(upstream)?;
                vec![(*a, da), (*b, db)]
            }
            Op::Add(a, b) => vec![(*a, upstream.clone()), (*b, upstream.clone())],
            Op::Sub(a, b) => vec![(*a, upstream.clone()), (*b, upstream.scale(-1.0))],
            Op::Mul(a, b) => {
                let da = upstream.zip_map(self.value(*b), "mul", |g, y| g * y)?;
                let db = upstream.zip_map(self.value(*a), "mul", |g, x| g * x)?;
                vec![(*a, da), (*b, db)]
            }
            Op::Scale(a, c) => vec![(*a, upstream.scale(*c))],
            Op::Relu(a) => {
                let d = upstream.zip_map(
                    self.value(*a),
                    "relu",
                    |g, x| if x > 0.0 { g } else { 0.0 },
                )?;
                vec![(*a, d)]
            }
            Op::Exp(a) => vec![(*a, upstream.zip_map(out, "exp", |g, y| g * y)?)],
            Op::Log(a) => vec![(*a, upstream.zip_map(self.value(*a), "log", |g, x| g / x)?)],
            Op::Transpose(a) => vec![(*a, upstream.transpose())],
            Op::RowL2Normalize(a) => {
                // d(x/|x|) = (g - y <g, y>) / |x|
                let x = self.value(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let y = out.row(r);
                    let g = upstream.row(r);
                    let norm = super::matrix::l2_norm(x.row(r));
                    let gy = super::matrix::dot(g, y);
                    for c in 0..x.cols() {
                        d.set(r, c, (g[c] - y[c] * gy) / norm);
                    }
                }
                vec![(*a, d)]
            }
            Op::RowNorm(a) => {
                let x = self.value(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let n = out.get(r, 0);
                    let g = upstream.get(r, 0);
                    if n > 0.0 {
                        for c in 0..x.cols() {
                            d.set(r, c, g * x.get(r, c) / n);
                        }
                    }
                }
                vec![(*a, d)]
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                vec![(*a, Matrix::filled(r, c, upstream.item()))]
            }
            Op::CrossEntropy(logits, labels) => {
                let z = self.value(*logits);
                let scale = upstream.item() / labels.len() as f64;
                let mut d = Matrix::zeros(z.rows(), z.cols());
                for (i, &y) in labels.iter().enumerate() {
                    let row = z.row(i);
                    let lse = log_sum_exp(row);
                    for (c, &v) in row.iter().enumerate() {
                        let p = (v - lse).exp();
                        let target = if c == y { 1.0 } else { 0.0 };
                        d.set(i, c, scale * (p - target));
                    }
                }
                vec![(*logits, d)]
            }
        };
        Ok(grads)
    }
}

/// `ln(sum(exp(v)))` with the maximum factored out.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
