use std::collections::HashMap;

use super::{sigmoid, softplus, ParamId, ParamStore, Shape};
use crate::error::TensorError;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    AddRow(TensorId, TensorId),
    Scale(TensorId, f64),
    MulConst(TensorId, Vec<f64>),
    Sigmoid(TensorId),
    Tanh(TensorId),
    Exp(TensorId),
    Clamp(TensorId, f64, f64),
    Minimum(TensorId, TensorId),
    ConcatCols(TensorId, TensorId),
    SliceCols(TensorId, usize),
    Sum(TensorId),
    RowSums(TensorId),
    MeanRows(TensorId, Vec<Vec<usize>>),
    SteBinarize(TensorId),
    BinaryMap {
        q: TensorId,
        alpha: TensorId,
        beta: TensorId,
    },
    LogSoftmax(TensorId),
    PickCols(TensorId, Vec<usize>),
    BceWithLogits {
        logits: TensorId,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
    Bce {
        probs: TensorId,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// One node of the graph: its value, its gradient and the rule that made it.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub id: TensorId,
    pub shape: Shape,
    pub values: Vec<f64>,
    /// Empty until [`Graph::backward`] has run through this node.
    pub grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Append-only computation graph. Confined to one thread; build a new one per
/// forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Tensor>,
    params: HashMap<ParamId, TensorId>,
}

fn mismatch(op: &'static str, left: Shape, right: Shape) -> TensorError {
    TensorError::ShapeMismatch { op, left, right }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> TensorError {
    TensorError::Invalid {
        op,
        msg: msg.into(),
    }
}

/// Probability clamp used by [`Graph::bce`].
pub const BCE_EPS: f64 = 1e-12;

/// `C (+)= A · B` on row-major slices with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides describe in-bounds views of `a`, `b` and `c`, which
    // the callers size as m×k, k×n and m×n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Indices of the `k` largest entries, ties broken by lowest index.
pub fn top_k_mask(values: &[f64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut mask = vec![false; values.len()];
    for &i in order.iter().take(k) {
        mask[i] = true;
    }
    mask
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

    pub fn node(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: TensorId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].values
    }

    /// Gradient of the last `backward` target with respect to `id`; zeros if
    /// the node did not take part.
    pub fn grad(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn scalar(&self, id: TensorId) -> f64 {
        self.nodes[id.0].values[0]
    }

    fn push(&mut self, shape: Shape, values: Vec<f64>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(values.len(), shape.len());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Tensor {
            id,
            shape,
            values,
            grad: Vec::new(),
            requires_grad,
            op,
        });
        id
    }

    fn needs(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, shape: Shape, values: Vec<f64>) -> TensorId {
        assert_eq!(values.len(), shape.len(), "leaf value count must match {shape}");
        self.push(shape, values, true, Op::Leaf)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, shape: Shape, values: Vec<f64>) -> TensorId {
        assert_eq!(values.len(), shape.len(), "constant value count must match {shape}");
        self.push(shape, values, false, Op::Leaf)
    }

    pub fn zeros(&mut self, shape: Shape) -> TensorId {
        self.constant(shape, vec![0.0; shape.len()])
    }

    /// Brings a stored parameter into the graph. Repeated calls return the
    /// same node, so recurrent unrolling shares one copy of each weight.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TensorId {
        if let Some(&t) = self.params.get(&id) {
            return t;
        }
        let p = store.get(id);
        let t = self.push(p.shape, p.values.clone(), true, Op::Leaf);
        self.params.insert(id, t);
        t
    }

    /// Adds the gradients of every parameter node into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&pid, &tid) in &self.params {
            let g = &self.nodes[tid.0].grad;
            if g.is_empty() {
                continue;
            }
            for (acc, v) in store.get_mut(pid).grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.cols != sb.rows {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), (k, 1), self.value(b), (n, 1), &mut out, false);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Shape::new(m, n), out, rg, Op::MatMul(a, b)))
    }

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let va = self.value(a);
        let vb = self.value(b);
        let (shape, out) = if sa == sb {
            (sa, va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect())
        } else if sb.is_scalar() {
            (sa, va.iter().map(|&x| f(x, vb[0])).collect())
        } else if sa.is_scalar() {
            (sb, vb.iter().map(|&y| f(va[0], y)).collect())
        } else {
            return Err(mismatch(name, sa, sb));
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(shape, out, rg, op))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.broadcast_binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.broadcast_binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.broadcast_binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("minimum", sa, sb));
        }
        self.broadcast_binary("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    /// Adds a `1 × n` row (a bias) to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.rows != 1 || sr.cols != sa.cols {
            return Err(mismatch("add_row", sa, sr));
        }
        let r = self.value(row);
        let out = self
            .value(a)
            .chunks(sa.cols.max(1))
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x + y))
            .collect::<Vec<_>>();
        let rg = self.needs(&[a, row]);
        Ok(self.push(sa, out, rg, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let rg = self.needs(&[a]);
        self.push(self.shape(a), out, rg, Op::Scale(a, c))
    }

    /// Elementwise product with a constant array (masks, labels).
    pub fn mul_const(&mut self, a: TensorId, c: Vec<f64>) -> Result<TensorId, TensorError> {
        let sa = self.shape(a);
        if c.len() != sa.len() {
            return Err(mismatch("mul_const", sa, Shape::row(c.len())));
        }
        let out = self.value(a).iter().zip(&c).map(|(x, y)| x * y).collect();
        let rg = self.needs(&[a]);
        Ok(self.push(sa, out, rg, Op::MulConst(a, c)))
    }

    fn unary(&mut self, a: TensorId, f: impl Fn(f64) -> f64, op: Op) -> TensorId {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.needs(&[a]);
        self.push(self.shape(a), out, rg, op)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> TensorId {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.rows != sb.rows {
            return Err(mismatch("concat_cols", sa, sb));
        }
        let cols = sa.cols + sb.cols;
        let mut out = Vec::with_capacity(sa.rows * cols);
        for r in 0..sa.rows {
            out.extend_from_slice(&self.value(a)[r * sa.cols..(r + 1) * sa.cols]);
            out.extend_from_slice(&self.value(b)[r * sb.cols..(r + 1) * sb.cols]);
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Shape::new(sa.rows, cols), out, rg, Op::ConcatCols(a, b)))
    }

    pub fn slice_cols(
        &mut self,
        a: TensorId,
        start: usize,
        len: usize,
    ) -> Result<TensorId, TensorError> {
        let sa = self.shape(a);
        if start + len > sa.cols {
            return Err(invalid(
                "slice_cols",
                format!("columns {start}..{} out of range for {sa}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(sa.rows * len);
        for r in 0..sa.rows {
            out.extend_from_slice(&self.value(a)[r * sa.cols + start..r * sa.cols + start + len]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Shape::new(sa.rows, len), out, rg, Op::SliceCols(a, start)))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s = self.value(a).iter().sum();
        let rg = self.needs(&[a]);
        self.push(Shape::SCALAR, vec![s], rg, Op::Sum(a))
    }

    /// `m × n → m × 1`.
    pub fn row_sums(&mut self, a: TensorId) -> TensorId {
        let sa = self.shape(a);
        let out = if sa.cols == 0 {
            vec![0.0; sa.rows]
        } else {
            self.value(a).chunks(sa.cols).map(|r| r.iter().sum()).collect()
        };
        let rg = self.needs(&[a]);
        self.push(Shape::new(sa.rows, 1), out, rg, Op::RowSums(a))
    }

    /// Output row `r` is the mean of the table rows listed in `lists[r]`
    /// (zero for an empty list).
    pub fn mean_rows(
        &mut self,
        table: TensorId,
        lists: Vec<Vec<usize>>,
    ) -> Result<TensorId, TensorError> {
        let st = self.shape(table);
        let mut out = vec![0.0; lists.len() * st.cols];
        for (r, list) in lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let w = 1.0 / list.len() as f64;
            let dst = &mut out[r * st.cols..(r + 1) * st.cols];
            for &i in list {
                if i >= st.rows {
                    return Err(invalid("mean_rows", format!("row {i} out of range for {st}")));
                }
                let src = &self.nodes[table.0].values[i * st.cols..(i + 1) * st.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        let rg = self.needs(&[table]);
        Ok(self.push(Shape::new(lists.len(), st.cols), out, rg, Op::MeanRows(table, lists)))
    }

    pub fn gather_rows(
        &mut self,
        table: TensorId,
        rows: &[usize],
    ) -> Result<TensorId, TensorError> {
        self.mean_rows(table, rows.iter().map(|&r| vec![r]).collect())
    }

    /// Row-wise sparse binarization: `q[i] = 1` iff `e[i] > 0` and `i` is
    /// among the `c_max` largest entries of its row (ties to the lowest
    /// index). The backward pass is the straight-through identity.
    pub fn ste_binarize(&mut self, e: TensorId, c_max: usize) -> Result<TensorId, TensorError> {
        let se = self.shape(e);
        if c_max == 0 || c_max > se.cols {
            return Err(invalid(
                "ste_binarize",
                format!("c_max {c_max} must lie in 1..={}", se.cols),
            ));
        }
        let mut out = vec![0.0; se.len()];
        for (row, dst) in self.value(e).chunks(se.cols).zip(out.chunks_mut(se.cols)) {
            let mask = top_k_mask(row, c_max);
            for ((d, &x), m) in dst.iter_mut().zip(row).zip(mask) {
                if m && x > 0.0 {
                    *d = 1.0;
                }
            }
        }
        let rg = self.needs(&[e]);
        Ok(self.push(se, out, rg, Op::SteBinarize(e)))
    }

    /// `α·q + β·(1 − q)` with scalar `α`, `β` nodes.
    pub fn binary_map(
        &mut self,
        q: TensorId,
        alpha: TensorId,
        beta: TensorId,
    ) -> Result<TensorId, TensorError> {
        for s in [alpha, beta] {
            if !self.shape(s).is_scalar() {
                return Err(mismatch("binary_map", self.shape(q), self.shape(s)));
            }
        }
        let (a, b) = (self.scalar(alpha), self.scalar(beta));
        let out = self.value(q).iter().map(|&x| a * x + b * (1.0 - x)).collect();
        let rg = self.needs(&[q, alpha, beta]);
        Ok(self.push(self.shape(q), out, rg, Op::BinaryMap { q, alpha, beta }))
    }

    /// Sparse quantization with straight-through gradients:
    /// `binary_map(ste_binarize(e), α, β)`.
    pub fn ste_quantize(
        &mut self,
        e: TensorId,
        c_max: usize,
        alpha: TensorId,
        beta: TensorId,
    ) -> Result<TensorId, TensorError> {
        let q = self.ste_binarize(e, c_max)?;
        self.binary_map(q, alpha, beta)
    }

    pub fn log_softmax(&mut self, a: TensorId) -> TensorId {
        let sa = self.shape(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(sa.cols.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let rg = self.needs(&[a]);
        self.push(sa, out, rg, Op::LogSoftmax(a))
    }

    /// Picks column `cols[r]` from row `r`: `m × n → m × 1`.
    pub fn pick_cols(&mut self, a: TensorId, cols: Vec<usize>) -> Result<TensorId, TensorError> {
        let sa = self.shape(a);
        if cols.len() != sa.rows {
            return Err(mismatch("pick_cols", sa, Shape::new(cols.len(), 1)));
        }
        let mut out = Vec::with_capacity(sa.rows);
        for (r, &c) in cols.iter().enumerate() {
            if c >= sa.cols {
                return Err(invalid("pick_cols", format!("column {c} out of range for {sa}")));
            }
            out.push(self.value(a)[r * sa.cols + c]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Shape::new(sa.rows, 1), out, rg, Op::PickCols(a, cols)))
    }

    /// Weighted mean binary cross-entropy on logits, a `1 × 1` node.
    /// Zero-weight entries (padding) are ignored; all-zero weights give 0.
    pub fn bce_with_logits(
        &mut self,
        logits: TensorId,
        targets: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(logits);
        if targets.len() != s.len() || weights.len() != s.len() {
            return Err(mismatch("bce_with_logits", s, Shape::row(targets.len())));
        }
        let total: f64 = weights.iter().sum();
        let loss = if total > 0.0 {
            self.value(logits)
                .iter()
                .zip(&targets)
                .zip(&weights)
                .map(|((&z, &y), &w)| w * (softplus(z) - y * z))
                .sum::<f64>()
                / total
        } else {
            0.0
        };
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Shape::SCALAR,
            vec![loss],
            rg,
            Op::BceWithLogits {
                logits,
                targets,
                weights,
            },
        ))
    }

    /// Weighted SUM of binary cross-entropy on probabilities, a `1 × 1` node.
    /// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` before the log.
    pub fn bce(
        &mut self,
        probs: TensorId,
        targets: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(probs);
        if targets.len() != s.len() || weights.len() != s.len() {
            return Err(mismatch("bce", s, Shape::row(targets.len())));
        }
        let loss = self
            .value(probs)
            .iter()
            .zip(&targets)
            .zip(&weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|((&p, &y), &w)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let rg = self.needs(&[probs]);
        Ok(self.push(
            Shape::SCALAR,
            vec![loss],
            rg,
            Op::Bce {
                probs,
                targets,
                weights,
            },
        ))
    }

    /// Reverse pass from a scalar node. Gradients are reset first, so each
    /// call reflects only `loss`.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), TensorError> {
        if !self.shape(loss).is_scalar() {
            return Err(invalid("backward", format!("loss must be scalar, got {}", self.shape(loss))));
        }
        for n in &mut self.nodes {
            n.grad.clear();
            n.grad.resize(n.values.len(), 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            let g = std::mem::take(&mut self.nodes[i].grad);
            self.backprop(i, &op, &g);
            self.nodes[i].grad = g;
            self.nodes[i].op = op;
        }
        Ok(())
    }

    fn acc(&mut self, id: TensorId, f: impl FnOnce(&mut [f64], &[Tensor])) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let mut buf = std::mem::take(&mut self.nodes[id.0].grad);
        f(&mut buf, &self.nodes);
        self.nodes[id.0].grad = buf;
    }

    /// Accumulates `g` (same shape as `src`, or scalar-reduced) into `dst`.
    fn acc_broadcast(&mut self, dst: TensorId, out_shape: Shape, g: &[f64], scale: &[f64]) {
        let is_scalar = self.shape(dst).is_scalar() && !out_shape.is_scalar();
        self.acc(dst, |buf, _| {
            if is_scalar {
                buf[0] += g.iter().zip(scale).map(|(a, b)| a * b).sum::<f64>();
            } else {
                for ((b, gi), s) in buf.iter_mut().zip(g).zip(scale) {
                    *b += gi * s;
                }
            }
        });
    }

    fn expand(&self, id: TensorId, len: usize) -> Vec<f64> {
        let v = self.value(id);
        if v.len() == len {
            v.to_vec()
        } else {
            vec![v[0]; len]
        }
    }

    fn backprop(&mut self, out: usize, op: &Op, g: &[f64]) {
        let oshape = self.nodes[out].shape;
        let n = g.len();
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a).rows, self.shape(a).cols);
                let nn = self.shape(b).cols;
                // dA += dC · Bᵀ
                self.acc(a, |buf, nodes| {
                    gemm(m, nn, k, g, (nn, 1), &nodes[b.0].values, (1, nn), buf, true)
                });
                // dB += Aᵀ · dC
                self.acc(b, |buf, nodes| {
                    gemm(k, m, nn, &nodes[a.0].values, (1, k), g, (nn, 1), buf, true)
                });
            }
            Op::Add(a, b) => {
                let ones = vec![1.0; n];
                self.acc_broadcast(a, oshape, g, &ones);
                self.acc_broadcast(b, oshape, g, &ones);
            }
            Op::Sub(a, b) => {
                self.acc_broadcast(a, oshape, g, &vec![1.0; n]);
                self.acc_broadcast(b, oshape, g, &vec![-1.0; n]);
            }
            Op::Mul(a, b) => {
                let va = self.expand(a, n);
                let vb = self.expand(b, n);
                self.acc_broadcast(a, oshape, g, &vb);
                self.acc_broadcast(b, oshape, g, &va);
            }
            Op::Minimum(a, b) => {
                let va = self.expand(a, n);
                let vb = self.expand(b, n);
                let to_a: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| f64::from(x <= y)).collect();
                let to_b: Vec<f64> = to_a.iter().map(|t| 1.0 - t).collect();
                self.acc_broadcast(a, oshape, g, &to_a);
                self.acc_broadcast(b, oshape, g, &to_b);
            }
            Op::AddRow(a, row) => {
                self.acc(a, |buf, _| buf.iter_mut().zip(g).for_each(|(b, x)| *b += x));
                let cols = oshape.cols.max(1);
                self.acc(row, |buf, _| {
                    for chunk in g.chunks(cols) {
                        buf.iter_mut().zip(chunk).for_each(|(b, x)| *b += x);
                    }
                });
            }
            Op::Scale(a, c) => {
                self.acc(a, |buf, _| buf.iter_mut().zip(g).for_each(|(b, x)| *b += c * x));
            }
            Op::MulConst(a, ref c) => {
                self.acc(a, |buf, _| {
                    for ((b, x), y) in buf.iter_mut().zip(g).zip(c) {
                        *b += x * y;
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[out].values;
                let d: Vec<f64> = y.iter().zip(g).map(|(y, g)| g * y * (1.0 - y)).collect();
                self.acc(a, |buf, _| buf.iter_mut().zip(&d).for_each(|(b, x)| *b += x));
            }
            Op::Tanh(a) => {
                let y = &self.nodes[out].values;
                let d: Vec<f64> = y.iter().zip(g).map(|(y, g)| g * (1.0 - y * y)).collect();
                self.acc(a, |buf, _| buf.iter_mut().zip(&d).for_each(|(b, x)| *b += x));
            }
            Op::Exp(a) => {
                let y = &self.nodes[out].values;
                let d: Vec<f64> = y.iter().zip(g).map(|(y, g)| g * y).collect();
                self.acc(a, |buf, _| buf.iter_mut().zip(&d).for_each(|(b, x)| *b += x));
            }
            Op::Clamp(a, lo, hi) => {
                self.acc(a, |buf, nodes| {
                    for ((b, x), gi) in buf.iter_mut().zip(&nodes[a.0].values).zip(g) {
                        if *x >= lo && *x <= hi {
                            *b += gi;
                        }
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(a).cols;
                let cb = self.shape(b).cols;
                let w = ca + cb;
                self.acc(a, |buf, _| {
                    for (r, dst) in buf.chunks_mut(ca.max(1)).enumerate().take(oshape.rows) {
                        dst.iter_mut().zip(&g[r * w..r * w + ca]).for_each(|(d, x)| *d += x);
                    }
                });
                self.acc(b, |buf, _| {
                    for (r, dst) in buf.chunks_mut(cb.max(1)).enumerate().take(oshape.rows) {
                        dst.iter_mut().zip(&g[r * w + ca..(r + 1) * w]).for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let ca = self.shape(a).cols;
                let len = oshape.cols;
                self.acc(a, |buf, _| {
                    for r in 0..oshape.rows {
                        let dst = &mut buf[r * ca + start..r * ca + start + len];
                        dst.iter_mut().zip(&g[r * len..(r + 1) * len]).for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::Sum(a) => {
                self.acc(a, |buf, _| buf.iter_mut().for_each(|b| *b += g[0]));
            }
            Op::RowSums(a) => {
                let cols = self.shape(a).cols.max(1);
                self.acc(a, |buf, _| {
                    for (row, gi) in buf.chunks_mut(cols).zip(g) {
                        row.iter_mut().for_each(|b| *b += gi);
                    }
                });
            }
            Op::MeanRows(table, ref lists) => {
                let cols = self.shape(table).cols;
                self.acc(table, |buf, _| {
                    for (r, list) in lists.iter().enumerate() {
                        if list.is_empty() {
                            continue;
                        }
                        let w = 1.0 / list.len() as f64;
                        let src = &g[r * cols..(r + 1) * cols];
                        for &i in list {
                            let dst = &mut buf[i * cols..(i + 1) * cols];
                            dst.iter_mut().zip(src).for_each(|(d, x)| *d += w * x);
                        }
                    }
                });
            }
            Op::SteBinarize(e) => {
                self.acc(e, |buf, _| buf.iter_mut().zip(g).for_each(|(b, x)| *b += x));
            }
            Op::BinaryMap { q, alpha, beta } => {
                let (a, b) = (self.scalar(alpha), self.scalar(beta));
                self.acc(q, |buf, _| buf.iter_mut().zip(g).for_each(|(d, x)| *d += (a - b) * x));
                let qv = self.value(q).to_vec();
                self.acc(alpha, |buf, _| {
                    buf[0] += g.iter().zip(&qv).map(|(x, q)| x * q).sum::<f64>();
                });
                self.acc(beta, |buf, _| {
                    buf[0] += g.iter().zip(&qv).map(|(x, q)| x * (1.0 - q)).sum::<f64>();
                });
            }
            Op::LogSoftmax(a) => {
                let cols = oshape.cols.max(1);
                let y = &self.nodes[out].values;
                let mut d = vec![0.0; n];
                for ((dr, yr), gr) in d.chunks_mut(cols).zip(y.chunks(cols)).zip(g.chunks(cols)) {
                    let gs: f64 = gr.iter().sum();
                    for ((di, yi), gi) in dr.iter_mut().zip(yr).zip(gr) {
                        *di = gi - yi.exp() * gs;
                    }
                }
                self.acc(a, |buf, _| buf.iter_mut().zip(&d).for_each(|(b, x)| *b += x));
            }
            Op::PickCols(a, ref cols) => {
                let w = self.shape(a).cols;
                self.acc(a, |buf, _| {
                    for (r, (&c, gi)) in cols.iter().zip(g).enumerate() {
                        buf[r * w + c] += gi;
                    }
                });
            }
            Op::BceWithLogits {
                logits,
                ref targets,
                ref weights,
            } => {
                let total: f64 = weights.iter().sum();
                if total > 0.0 {
                    let scale = g[0] / total;
                    self.acc(logits, |buf, nodes| {
                        let z = &nodes[logits.0].values;
                        for i in 0..buf.len() {
                            buf[i] += scale * weights[i] * (sigmoid(z[i]) - targets[i]);
                        }
                    });
                }
            }
            Op::Bce {
                probs,
                ref targets,
                ref weights,
            } => {
                self.acc(probs, |buf, nodes| {
                    let p = &nodes[probs.0].values;
                    for i in 0..buf.len() {
                        if weights[i] == 0.0 || p[i] < BCE_EPS || p[i] > 1.0 - BCE_EPS {
                            continue;
                        }
                        let y = targets[i];
                        buf[i] += g[0] * weights[i] * ((1.0 - y) / (1.0 - p[i]) - y / p[i]);
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Shape::new(2, 2), vec![1.0, 0.0, 0.0, 1.0]);
        let m = g.constant(Shape::new(2, 2), vec![1.5, -2.0, 3.0, 0.25]);
        let p = g.matmul(i, m).unwrap();
        assert_eq!(g.value(p), &[1.5, -2.0, 3.0, 0.25]);
    }

    #[test]
    fn row_times_column() {
        let mut g = Graph::new();
        let a = g.constant(Shape::new(1, 2), vec![1.0, 2.0]);
        let b = g.constant(Shape::new(2, 1), vec![3.0, 4.0]);
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.zeros(Shape::new(2, 3));
        let b = g.zeros(Shape::new(2, 3));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2x3]") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn add_rejects_incompatible_shapes() {
        let mut g = Graph::new();
        let a = g.zeros(Shape::new(2, 3));
        let b = g.zeros(Shape::new(3, 2));
        assert!(g.add(a, b).is_err());
        let s = g.constant(Shape::SCALAR, vec![2.0]);
        let c = g.add(a, s).unwrap();
        assert_eq!(g.value(c), &[2.0; 6]);
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let mut g = Graph::new();
        let z = g.zeros(Shape::SCALAR);
        let s = g.sigmoid(z);
        let t = g.tanh(z);
        assert_eq!(g.scalar(s), 0.5);
        assert_eq!(g.scalar(t), 0.0);
    }

    #[test]
    fn loss_grad_is_one() {
        let mut g = Graph::new();
        let a = g.leaf(Shape::row(3), vec![1.0, 2.0, 3.0]);
        let s = g.sum(a);
        g.backward(s).unwrap();
        assert_eq!(g.grad(s), &[1.0]);
        assert_eq!(g.grad(a), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let a = g.leaf(Shape::row(3), vec![1.0, 2.0, 3.0]);
        assert!(g.backward(a).is_err());
    }

    #[test]
    fn top_k_ties_go_to_lowest_index() {
        let mask = top_k_mask(&[1.0, 2.0, 2.0, 2.0], 2);
        assert_eq!(mask, vec![false, true, true, false]);
    }

    #[test]
    fn ste_quantize_selects_positive_top_entries() {
        let mut g = Graph::new();
        let e = g.leaf(Shape::row(4), vec![2.0, -1.0, 3.0, 0.5]);
        let a = g.leaf(Shape::SCALAR, vec![1.5]);
        let b = g.leaf(Shape::SCALAR, vec![0.3]);
        let u = g.ste_quantize(e, 2, a, b).unwrap();
        assert_eq!(g.value(u), &[1.5, 0.3, 1.5, 0.3]);
    }

    #[test]
    fn ste_quantize_all_negative_is_beta() {
        let mut g = Graph::new();
        let e = g.leaf(Shape::row(3), vec![-2.0, -1.0, -0.1]);
        let a = g.leaf(Shape::SCALAR, vec![1.7]);
        let b = g.leaf(Shape::SCALAR, vec![0.2]);
        let u = g.ste_quantize(e, 3, a, b).unwrap();
        assert_eq!(g.value(u), &[0.2; 3]);
    }

    #[test]
    fn ste_rejects_bad_c_max() {
        let mut g = Graph::new();
        let e = g.leaf(Shape::row(3), vec![1.0; 3]);
        assert!(g.ste_binarize(e, 0).is_err());
        assert!(g.ste_binarize(e, 4).is_err());
    }

    #[test]
    fn bce_all_zero_weights_is_zero() {
        let mut g = Graph::new();
        let z = g.leaf(Shape::new(2, 1), vec![0.3, -0.2]);
        let l = g.bce_with_logits(z, vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        g.backward(l).unwrap();
        assert_eq!(g.grad(z), &[0.0, 0.0]);
    }

    #[test]
    fn mean_rows_of_empty_list_is_zero() {
        let mut g = Graph::new();
        let t = g.leaf(Shape::new(2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let m = g.mean_rows(t, vec![vec![], vec![0, 1]]).unwrap();
        assert_eq!(g.value(m), &[0.0, 0.0, 2.0, 3.0]);
    }
}
