//! Reverse-mode tape over matrix-valued nodes.
//!
//! A forward pass appends nodes to the tape in creation order, which is a
//! topological order by construction. `backward` walks the tape in reverse
//! from a scalar root and accumulates adjoints into every node that requires
//! a gradient. Repeated `backward` calls accumulate; the trainer starts a
//! fresh tape per step instead of resetting.

use super::matrix::{matmul, matmul_at, matmul_bt, Matrix};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Sqrt(NodeId),
    /// `(n x k) + (1 x k)` row-broadcast bias addition.
    AddRow(NodeId, NodeId),
    /// `(n x k) / (1 x k)` row-broadcast division.
    DivRow(NodeId, NodeId),
    /// `n x k -> n x 1` row sums.
    RowSum(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Column-wise concatenation; parent column offsets are implicit.
    Concat(Vec<NodeId>),
    /// Column slice `[c0, c1)` of the parent.
    SliceCols(NodeId, usize, usize),
    /// Per-row `-log softmax(logits)[label]`, producing `n x 1`.
    /// The cached softmax matrix lives in the node's `aux`.
    SoftmaxCeRows(NodeId, Vec<usize>),
    /// Identity forward; backward multiplies the incoming adjoint by `-lambda`.
    GradReverse(NodeId, f64),
}

struct TapeNode {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
    aux: Option<Matrix>,
}

/// Records a forward pass and replays it in reverse for gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(TapeNode {
            value,
            grad: None,
            op,
            requires_grad,
            aux: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// A leaf that does not participate in gradient computation.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf; `backward` accumulates its gradient.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a node, if any pass reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Gradient of a node, zero-filled when no pass reached it.
    pub fn grad_or_zero(&self, id: NodeId) -> Matrix {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.nodes[id.0].value.shape();
                Matrix::zeros(r, c)
            }
        }
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn binary_same_shape(&mut self, op_name: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op_name, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = matmul(self.value(a), self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("div", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x / y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Div(a, b), rg))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| -x);
        let rg = self.requires(a);
        self.push(value, Op::Neg(a), rg)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|x| c * x);
        let rg = self.requires(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|x| x + c);
        let rg = self.requires(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        let rg = self.requires(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let rg = self.requires(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.requires(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::sqrt);
        let rg = self.requires(a);
        self.push(value, Op::Sqrt(a), rg)
    }

    /// `(n x k) + (1 x k)`: the bias row is added to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (n, k) = self.shape(a);
        if self.shape(bias) != (1, k) {
            return Err(Error::dim("add_row", (n, k), self.shape(bias)));
        }
        let av = self.value(a);
        let bv = self.value(bias);
        let mut out = av.clone();
        for i in 0..n {
            for (o, b) in out.row_mut(i).iter_mut().zip(bv.row(0)) {
                *o += b;
            }
        }
        let rg = self.requires(a) || self.requires(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    /// `(n x k) / (1 x k)`: every row of `a` divided elementwise by the row.
    pub fn div_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (n, k) = self.shape(a);
        if self.shape(row) != (1, k) {
            return Err(Error::dim("div_row", (n, k), self.shape(row)));
        }
        let av = self.value(a);
        let rv = self.value(row);
        let mut out = av.clone();
        for i in 0..n {
            for (o, d) in out.row_mut(i).iter_mut().zip(rv.row(0)) {
                *o /= d;
            }
        }
        let rg = self.requires(a) || self.requires(row);
        Ok(self.push(out, Op::DivRow(a, row), rg))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let out = Matrix::from_fn(av.rows(), 1, |i, _| av.row(i).iter().sum());
        let rg = self.requires(a);
        self.push(out, Op::RowSum(a), rg)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).as_slice().iter().sum();
        let rg = self.requires(a);
        self.push(Matrix::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s: f64 = v.as_slice().iter().sum();
        let n = v.len() as f64;
        let rg = self.requires(a);
        self.push(Matrix::scalar(s / n), Op::MeanAll(a), rg)
    }

    /// Column-wise concatenation in argument order.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::validation("concat_cols needs at least one input"));
        }
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hconcat(&values)?;
        let rg = parts.iter().any(|&p| self.requires(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `[c0, c1)` of `a`.
    pub fn slice_cols(&mut self, a: NodeId, c0: usize, c1: usize) -> Result<NodeId> {
        let (_, k) = self.shape(a);
        if c0 >= c1 || c1 > k {
            return Err(Error::validation(format!(
                "column slice [{c0}, {c1}) out of range for width {k}"
            )));
        }
        let value = self.value(a).slice_cols(c0, c1);
        let rg = self.requires(a);
        Ok(self.push(value, Op::SliceCols(a, c0, c1), rg))
    }

    /// Per-row cross-entropy `-log softmax(logits)[label]` as an `n x 1`
    /// column, stabilized by max-subtraction. The batch mean is
    /// [`Tape::softmax_cross_entropy`].
    pub fn softmax_ce_rows(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        let (n, k) = lv.shape();
        if labels.len() != n {
            return Err(Error::validation(format!(
                "{} labels for {n} logit rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let mut probs = Matrix::zeros(n, k);
        let mut losses = Vec::with_capacity(n);
        for i in 0..n {
            let row = lv.row(i);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut z = 0.0;
            for (p, &x) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (x - m).exp();
                z += *p;
            }
            for p in probs.row_mut(i) {
                *p /= z;
            }
            // -log softmax = log(sum exp) - (x_label - max)
            losses.push(z.ln() - (row[labels[i]] - m));
        }
        let rg = self.requires(logits);
        let id = self.push(
            Matrix::column(&losses),
            Op::SoftmaxCeRows(logits, labels.to_vec()),
            rg,
        );
        self.nodes[id.0].aux = Some(probs);
        Ok(id)
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let rows = self.softmax_ce_rows(logits, labels)?;
        Ok(self.mean_all(rows))
    }

    /// Identity on values; multiplies the backward adjoint by `-lambda`.
    pub fn gradient_reversal(&mut self, a: NodeId, lambda: f64) -> Result<NodeId> {
        if lambda < 0.0 {
            return Err(Error::validation(format!(
                "gradient reversal lambda must be nonnegative, got {lambda}"
            )));
        }
        let value = self.value(a).clone();
        let rg = self.requires(a);
        Ok(self.push(value, Op::GradReverse(a, lambda), rg))
    }

    /// Accumulates `d root / d node` into every node with `requires_grad`.
    /// The root must be a 1x1 scalar.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.shape(root) != (1, 1) {
            let (r, c) = self.shape(root);
            return Err(Error::validation(format!(
                "backward root must be a 1x1 scalar, got {r}x{c}"
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(Matrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }

            // Adjoint reaches a leaf: fold it into the persistent gradient.
            if matches!(self.nodes[i].op, Op::Leaf) {
                match &mut self.nodes[i].grad {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
                continue;
            }

            self.propagate(i, &g, &mut adj);
            match &mut self.nodes[i].grad {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn accum(&self, adj: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut adj[id.0] {
            Some(acc) => acc.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = matmul_bt(g, self.value(*b));
                let db = matmul_at(self.value(*a), g);
                self.accum(adj, *a, da);
                self.accum(adj, *b, db);
            }
            Op::Add(a, b) => {
                self.accum(adj, *a, g.clone());
                self.accum(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(adj, *a, g.clone());
                self.accum(adj, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                self.accum(adj, *a, zip(g, self.value(*b), |x, y| x * y));
                self.accum(adj, *b, zip(g, self.value(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                self.accum(adj, *a, zip(g, bv, |x, y| x / y));
                let av = self.value(*a);
                let db = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                    -g.get(r, c) * av.get(r, c) / (bv.get(r, c) * bv.get(r, c))
                });
                self.accum(adj, *b, db);
            }
            Op::Neg(a) => self.accum(adj, *a, g.map(|x| -x)),
            Op::Scale(a, c) => {
                let c = *c;
                self.accum(adj, *a, g.map(|x| c * x));
            }
            Op::AddScalar(a) => self.accum(adj, *a, g.clone()),
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                self.accum(adj, *a, zip(g, y, |x, t| x * (1.0 - t * t)));
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                self.accum(adj, *a, zip(g, y, |x, s| x * s * (1.0 - s)));
            }
            Op::Relu(a) => {
                let y = &self.nodes[i].value;
                self.accum(adj, *a, zip(g, y, |x, v| if v > 0.0 { x } else { 0.0 }));
            }
            Op::Sqrt(a) => {
                let y = &self.nodes[i].value;
                self.accum(adj, *a, zip(g, y, |x, s| x / (2.0 * s)));
            }
            Op::AddRow(a, bias) => {
                self.accum(adj, *a, g.clone());
                let mut db = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accum(adj, *bias, db);
            }
            Op::DivRow(a, row) => {
                let rv = self.value(*row);
                let da = Matrix::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) / rv.get(0, c));
                self.accum(adj, *a, da);
                let av = self.value(*a);
                let mut drow = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let d = rv.get(0, c);
                        drow.set(0, c, drow.get(0, c) - g.get(r, c) * av.get(r, c) / (d * d));
                    }
                }
                self.accum(adj, *row, drow);
            }
            Op::RowSum(a) => {
                let (n, k) = self.shape(*a);
                let da = Matrix::from_fn(n, k, |r, _| g.get(r, 0));
                self.accum(adj, *a, da);
            }
            Op::SumAll(a) => {
                let (n, k) = self.shape(*a);
                self.accum(adj, *a, Matrix::filled(n, k, g.item()));
            }
            Op::MeanAll(a) => {
                let (n, k) = self.shape(*a);
                let scale = g.item() / (n * k) as f64;
                self.accum(adj, *a, Matrix::filled(n, k, scale));
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    self.accum(adj, p, g.slice_cols(off, off + w));
                    off += w;
                }
            }
            Op::SliceCols(a, c0, c1) => {
                let (n, k) = self.shape(*a);
                let mut da = Matrix::zeros(n, k);
                for r in 0..n {
                    da.row_mut(r)[*c0..*c1].copy_from_slice(g.row(r));
                }
                self.accum(adj, *a, da);
            }
            Op::SoftmaxCeRows(logits, labels) => {
                // d loss_i / d logits_i = softmax_i - onehot_i, scaled by g_i.
                let probs = self.nodes[i].aux.as_ref().expect("softmax cache");
                let (n, k) = probs.shape();
                let mut da = Matrix::zeros(n, k);
                for r in 0..n {
                    let gi = g.get(r, 0);
                    let prow = probs.row(r);
                    let drow = da.row_mut(r);
                    for c in 0..k {
                        drow[c] = gi * prow[c];
                    }
                    drow[labels[r]] -= gi;
                }
                self.accum(adj, *logits, da);
            }
            Op::GradReverse(a, lambda) => {
                let lambda = *lambda;
                self.accum(adj, *a, g.map(|x| -lambda * x));
            }
        }
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::raw(a.rows(), a.cols(), data)
}
