//! Flat f64 tensors and a define-by-run reverse-mode autodiff graph.
//!
//! Forward calls append op nodes to a [`Graph`]; [`Graph::backward`] walks the
//! tape in reverse append order and accumulates partials into each node's grad
//! slot. Tensors are rank 1 or 2, stored row-major. There is no broadcasting
//! beyond [`Graph::bias_add`], which adds a vector to each row of a matrix.
//!
//! The graph is rebuilt for every forward pass, so gradients always start from
//! zero. Parameters live outside the graph as plain [`Tensor`] values and are
//! re-registered as leaves each pass.

use crate::error::{Error, Result};

// ── Tensor values ───────────────────────────────────────────────────────────

/// A dense rank-1 or rank-2 f64 value. Immutable once inside a graph; only the
/// node's grad slot is written after creation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::contract(format!(
                "tensor rank must be 1 or 2, got shape {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::contract(format!(
                "shape {shape:?} implies {numel} elements but {} were given",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Row-major matrix from equal-length rows.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Tensor> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::contract("matrix rows have unequal lengths".to_string()));
        }
        Ok(Tensor {
            shape: vec![r, c],
            data: rows.concat(),
        })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a matrix, or 1 for a vector.
    pub fn rows(&self) -> usize {
        if self.rank() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Columns of a matrix, or the length of a vector.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

// ── Graph ───────────────────────────────────────────────────────────────────

/// Handle to a node in a [`Graph`]. Only valid for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: TensorId, b: TensorId },
    Transpose { a: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    BiasAdd { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: f64 },
    Sigmoid { a: TensorId },
    Tanh { a: TensorId },
    Softmax { a: TensorId, axis: usize },
    Concat { parts: Vec<TensorId>, axis: usize },
    SliceRows { a: TensorId, start: usize },
    GatherRows { a: TensorId, ids: Vec<usize> },
    Sum { a: TensorId },
    CrossEntropy { logits: TensorId, targets: Vec<usize>, mask: Vec<bool> },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Append-only tape of op nodes. Each forward call validates shapes, computes
/// the value eagerly, and records the op for the backward pass. Not shared
/// across threads; build one graph per forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target w.r.t. this node, if the node
    /// requires grad and backward has run.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> TensorId {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn any_requires_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ── Forward ops ─────────────────────────────────────────────────────────

    /// Register an input or parameter value.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> TensorId {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Non-differentiable constant.
    pub fn constant(&mut self, value: Tensor) -> TensorId {
        self.leaf(value, false)
    }

    /// Matrix product `[m,k] x [k,n] -> [m,n]`. Operands must be rank 2.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let data = matmul_raw(&ta.data, &tb.data, m, k, n);
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Tensor { shape: vec![m, n], data }, rg, Op::MatMul { a, b }))
    }

    /// Matrix transpose `[m,n] -> [n,m]`.
    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                lhs: ta.shape.clone(),
                rhs: vec![],
            });
        }
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let data = transpose_raw(&ta.data, m, n);
        let rg = self.any_requires_grad(&[a]);
        Ok(self.push(Tensor { shape: vec![n, m], data }, rg, Op::Transpose { a }))
    }

    fn ewise_binary(
        &mut self,
        op_name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(Error::Shape {
                op: op_name,
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let data = ta
            .data
            .iter()
            .zip(&tb.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape.clone();
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Tensor { shape, data }, rg, op))
    }

    /// Elementwise sum of same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.ewise_binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    /// Elementwise difference of same-shape tensors.
    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.ewise_binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    /// Elementwise (Hadamard) product of same-shape tensors.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.ewise_binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Add vector `b` (length n) to every row of matrix `a` `[m,n]`.
    pub fn bias_add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 1 || ta.shape[1] != tb.shape[0] {
            return Err(Error::Shape {
                op: "bias_add",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let n = tb.shape[0];
        let data = ta
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tb.data[i % n])
            .collect();
        let shape = ta.shape.clone();
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(Tensor { shape, data }, rg, Op::BiasAdd { a, b }))
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|&x| x * c).collect();
        let shape = ta.shape.clone();
        let rg = self.any_requires_grad(&[a]);
        self.push(Tensor { shape, data }, rg, Op::Scale { a, c })
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|&x| sigmoid_scalar(x)).collect();
        let shape = ta.shape.clone();
        let rg = self.any_requires_grad(&[a]);
        self.push(Tensor { shape, data }, rg, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|&x| x.tanh()).collect();
        let shape = ta.shape.clone();
        let rg = self.any_requires_grad(&[a]);
        self.push(Tensor { shape, data }, rg, Op::Tanh { a })
    }

    /// Softmax along `axis`, computed with max-subtraction. For a vector the
    /// only valid axis is 0; for a matrix, axis 1 normalizes each row and
    /// axis 0 each column.
    pub fn softmax(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        let ta = self.value(a);
        if axis >= ta.rank() {
            return Err(Error::Index {
                what: "softmax axis",
                index: axis,
                bound: ta.rank(),
            });
        }
        let mut out = ta.data.clone();
        for (base, step, len) in axis_slices(&ta.shape, axis) {
            softmax_slice(&mut out, base, step, len);
        }
        let shape = ta.shape.clone();
        let rg = self.any_requires_grad(&[a]);
        Ok(self.push(Tensor { shape, data: out }, rg, Op::Softmax { a, axis }))
    }

    /// Concatenate along `axis`. All parts must agree on the other axis.
    /// Vectors are only concatenated along axis 0 (yielding a longer vector).
    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero tensors".to_string()));
        }
        let first = self.value(parts[0]).shape.clone();
        let rank = first.len();
        if axis >= rank {
            return Err(Error::Index {
                what: "concat axis",
                index: axis,
                bound: rank,
            });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = &self.value(p).shape;
            let dims_agree = s.len() == rank
                && first
                    .iter()
                    .zip(s.iter())
                    .enumerate()
                    .all(|(d, (&x, &y))| d == axis || x == y);
            if !dims_agree {
                return Err(Error::Shape { op: "concat", lhs: first.clone(), rhs: s.clone() });
            }
            out_shape[axis] += s[axis];
        }
        let data = if rank == 1 || axis == 0 {
            let mut data = Vec::new();
            for &p in parts {
                data.extend_from_slice(&self.value(p).data);
            }
            data
        } else {
            // axis 1 on matrices: interleave rows
            let rows = first[0];
            let mut data = Vec::with_capacity(out_shape.iter().product());
            for r in 0..rows {
                for &p in parts {
                    let t = self.value(p);
                    let c = t.shape[1];
                    data.extend_from_slice(&t.data[r * c..(r + 1) * c]);
                }
            }
            data
        };
        let rg = self.any_requires_grad(parts);
        Ok(self.push(
            Tensor { shape: out_shape, data },
            rg,
            Op::Concat { parts: parts.to_vec(), axis },
        ))
    }

    /// Contiguous row slice `[start, start+len)` of a matrix.
    pub fn slice_rows(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::Shape {
                op: "slice_rows",
                lhs: ta.shape.clone(),
                rhs: vec![],
            });
        }
        if start + len > ta.shape[0] || len == 0 {
            return Err(Error::Index {
                what: "row slice",
                index: start + len,
                bound: ta.shape[0],
            });
        }
        let n = ta.shape[1];
        let data = ta.data[start * n..(start + len) * n].to_vec();
        let rg = self.any_requires_grad(&[a]);
        Ok(self.push(Tensor { shape: vec![len, n], data }, rg, Op::SliceRows { a, start }))
    }

    /// Gather rows of a matrix by index; duplicate indices are allowed and
    /// their gradients accumulate. This is the embedding-lookup primitive.
    pub fn gather_rows(&mut self, a: TensorId, ids: &[usize]) -> Result<TensorId> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: ta.shape.clone(),
                rhs: vec![],
            });
        }
        let (rows, n) = (ta.shape[0], ta.shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::Index { what: "gather row", index: bad, bound: rows });
        }
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            data.extend_from_slice(&ta.data[i * n..(i + 1) * n]);
        }
        let rg = self.any_requires_grad(&[a]);
        Ok(self.push(
            Tensor { shape: vec![ids.len(), n], data },
            rg,
            Op::GatherRows { a, ids: ids.to_vec() },
        ))
    }

    /// Sum of all elements, as a scalar (shape `[1]`).
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let s: f64 = ta.data.iter().sum();
        let rg = self.any_requires_grad(&[a]);
        self.push(Tensor::scalar(s), rg, Op::Sum { a })
    }

    /// Mean cross-entropy of row-softmax over unmasked rows of `logits`
    /// `[T,V]` against integer `targets` (length T). Masked rows contribute
    /// nothing to the loss or the gradient. Computed via log-sum-exp, so a
    /// dominant correct logit yields a loss near 0 without overflow.
    pub fn cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<TensorId> {
        let tl = self.value(logits);
        if tl.rank() != 2 || tl.shape[0] != targets.len() || targets.len() != mask.len() {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: tl.shape.clone(),
                rhs: vec![targets.len(), mask.len()],
            });
        }
        let (t, v) = (tl.shape[0], tl.shape[1]);
        let unmasked = mask.iter().filter(|&&m| m).count();
        if unmasked == 0 {
            return Err(Error::contract("cross_entropy over fully masked targets".to_string()));
        }
        let mut total = 0.0;
        for i in 0..t {
            if !mask[i] {
                continue;
            }
            if targets[i] >= v {
                return Err(Error::Index { what: "target id", index: targets[i], bound: v });
            }
            let row = &tl.data[i * v..(i + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[targets[i]];
        }
        let rg = self.any_requires_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / unmasked as f64),
            rg,
            Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec() },
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────────

    /// Accumulate d`loss`/d`node` into every node that requires grad, starting
    /// from a scalar loss. Repeated calls on the same graph keep accumulating.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward target must be scalar, got shape {:?}",
                self.value(loss).shape
            )));
        }
        for node in self.nodes.iter_mut() {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![0.0; node.value.numel()]);
            }
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(()); // loss independent of every parameter
        }
        // Seed with d loss / d loss = 1, then walk the tape backwards. Ops are
        // only appended after their inputs, so one reverse pass visits every
        // node after all its consumers.
        self.nodes[loss.0].grad.as_mut().unwrap()[0] += 1.0;
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = match &self.nodes[i].grad {
                Some(g) => g.clone(),
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            self.accumulate(i, &op, &g);
        }
        Ok(())
    }

    fn add_grad(&mut self, id: TensorId, delta: &[f64]) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let slot = self.nodes[id.0].grad.as_mut().unwrap();
        for (s, d) in slot.iter_mut().zip(delta) {
            *s += d;
        }
    }

    fn accumulate(&mut self, node_idx: usize, op: &Op, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                if self.nodes[a.0].requires_grad {
                    // dA = dC . B^T
                    let bt = transpose_raw(&tb.data, k, n);
                    let da = matmul_raw(g, &bt, m, n, k);
                    self.add_grad(*a, &da);
                }
                if self.nodes[b.0].requires_grad {
                    // dB = A^T . dC
                    let ta = &self.nodes[a.0].value;
                    let at = transpose_raw(&ta.data, m, k);
                    let db = matmul_raw(&at, g, k, m, n);
                    self.add_grad(*b, &db);
                }
            }
            Op::Transpose { a } => {
                let t = &self.nodes[node_idx].value;
                let (n, m) = (t.shape[0], t.shape[1]);
                let da = transpose_raw(g, n, m);
                self.add_grad(*a, &da);
            }
            Op::Add { a, b } => {
                self.add_grad(*a, g);
                self.add_grad(*b, g);
            }
            Op::Sub { a, b } => {
                self.add_grad(*a, g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                self.add_grad(*b, &neg);
            }
            Op::Mul { a, b } => {
                if self.nodes[a.0].requires_grad {
                    let tb = &self.nodes[b.0].value;
                    let da: Vec<f64> = g.iter().zip(&tb.data).map(|(&gx, &y)| gx * y).collect();
                    self.add_grad(*a, &da);
                }
                if self.nodes[b.0].requires_grad {
                    let ta = &self.nodes[a.0].value;
                    let db: Vec<f64> = g.iter().zip(&ta.data).map(|(&gx, &x)| gx * x).collect();
                    self.add_grad(*b, &db);
                }
            }
            Op::BiasAdd { a, b } => {
                self.add_grad(*a, g);
                if self.nodes[b.0].requires_grad {
                    let n = self.nodes[b.0].value.numel();
                    let mut db = vec![0.0; n];
                    for (i, &gx) in g.iter().enumerate() {
                        db[i % n] += gx;
                    }
                    self.add_grad(*b, &db);
                }
            }
            Op::Scale { a, c } => {
                let da: Vec<f64> = g.iter().map(|&gx| gx * c).collect();
                self.add_grad(*a, &da);
            }
            Op::Sigmoid { a } => {
                let s = &self.nodes[node_idx].value.data;
                let da: Vec<f64> = g
                    .iter()
                    .zip(s)
                    .map(|(&gx, &y)| gx * y * (1.0 - y))
                    .collect();
                self.add_grad(*a, &da);
            }
            Op::Tanh { a } => {
                let t = &self.nodes[node_idx].value.data;
                let da: Vec<f64> = g.iter().zip(t).map(|(&gx, &y)| gx * (1.0 - y * y)).collect();
                self.add_grad(*a, &da);
            }
            Op::Softmax { a, axis } => {
                let out = self.nodes[node_idx].value.clone();
                let mut da = vec![0.0; out.numel()];
                for (base, step, len) in axis_slices(&out.shape, *axis) {
                    // dx_i = s_i * (dy_i - sum_j dy_j s_j)
                    let dot: f64 = (0..len)
                        .map(|j| {
                            let idx = base + j * step;
                            g[idx] * out.data[idx]
                        })
                        .sum();
                    for j in 0..len {
                        let idx = base + j * step;
                        da[idx] = out.data[idx] * (g[idx] - dot);
                    }
                }
                self.add_grad(*a, &da);
            }
            Op::Concat { parts, axis } => {
                let rank = self.nodes[parts[0].0].value.rank();
                if rank == 1 || *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.numel();
                        let dp = g[offset..offset + n].to_vec();
                        self.add_grad(p, &dp);
                        offset += n;
                    }
                } else {
                    let rows = self.nodes[parts[0].0].value.shape[0];
                    let total_cols: usize =
                        parts.iter().map(|p| self.nodes[p.0].value.shape[1]).sum();
                    let mut col_offset = 0;
                    for &p in parts {
                        let c = self.nodes[p.0].value.shape[1];
                        let mut dp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            let start = r * total_cols + col_offset;
                            dp.extend_from_slice(&g[start..start + c]);
                        }
                        self.add_grad(p, &dp);
                        col_offset += c;
                    }
                }
            }
            Op::SliceRows { a, start } => {
                if self.nodes[a.0].requires_grad {
                    let n = self.nodes[a.0].value.shape[1];
                    let mut da = vec![0.0; self.nodes[a.0].value.numel()];
                    da[start * n..start * n + g.len()].copy_from_slice(g);
                    self.add_grad(*a, &da);
                }
            }
            Op::GatherRows { a, ids } => {
                if self.nodes[a.0].requires_grad {
                    let n = self.nodes[a.0].value.shape[1];
                    let mut da = vec![0.0; self.nodes[a.0].value.numel()];
                    for (pos, &row) in ids.iter().enumerate() {
                        for j in 0..n {
                            da[row * n + j] += g[pos * n + j];
                        }
                    }
                    self.add_grad(*a, &da);
                }
            }
            Op::Sum { a } => {
                let n = self.nodes[a.0].value.numel();
                let da = vec![g[0]; n];
                self.add_grad(*a, &da);
            }
            Op::CrossEntropy { logits, targets, mask } => {
                if self.nodes[logits.0].requires_grad {
                    let tl = &self.nodes[logits.0].value;
                    let (t, v) = (tl.shape[0], tl.shape[1]);
                    let count = mask.iter().filter(|&&m| m).count() as f64;
                    let mut da = vec![0.0; t * v];
                    for i in 0..t {
                        if !mask[i] {
                            continue;
                        }
                        let row = &tl.data[i * v..(i + 1) * v];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
                        let sum: f64 = exps.iter().sum();
                        for j in 0..v {
                            let p = exps[j] / sum;
                            let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                            da[i * v + j] = g[0] * (p - onehot) / count;
                        }
                    }
                    self.add_grad(*logits, &da);
                }
            }
        }
    }
}

// ── Raw kernels ─────────────────────────────────────────────────────────────

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place stable softmax over one strided slice.
fn softmax_slice(data: &mut [f64], base: usize, step: usize, len: usize) {
    let mut max = f64::NEG_INFINITY;
    for j in 0..len {
        max = max.max(data[base + j * step]);
    }
    let mut sum = 0.0;
    for j in 0..len {
        let e = (data[base + j * step] - max).exp();
        data[base + j * step] = e;
        sum += e;
    }
    for j in 0..len {
        data[base + j * step] /= sum;
    }
}

/// The strided slices a per-axis reduction acts on, as `(base, step, len)`.
/// Shapes are rank 1 or 2 only, so this stays simple.
fn axis_slices(shape: &[usize], axis: usize) -> Vec<(usize, usize, usize)> {
    match (shape.len(), axis) {
        (1, 0) => vec![(0, 1, shape[0])],
        (2, 1) => {
            let (rows, cols) = (shape[0], shape[1]);
            (0..rows).map(|r| (r * cols, 1, cols)).collect()
        }
        (2, 0) => {
            let (rows, cols) = (shape[0], shape[1]);
            (0..cols).map(|c| (c, cols, rows)).collect()
        }
        _ => vec![],
    }
}

// ── Gradient checking ───────────────────────────────────────────────────────

/// Elementwise relative error `|a - n| / max(1e-8, |a| + |n|)`, maximized over
/// all entries. Slices must have equal length.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / f64::max(1e-8, a.abs() + n.abs()))
        .fold(0.0, f64::max)
}

/// Compare analytic gradients of a scalar-valued graph function against
/// central finite differences, returning the worst relative error over every
/// parameter entry.
///
/// `f` is called with a fresh graph and one leaf id per entry of `params`, in
/// order, and must return the loss node. It is evaluated twice up front; if
/// the two loss values differ bitwise the function is not deterministic and a
/// contract error is returned.
pub fn grad_check<F>(params: &[(&str, Tensor)], mut f: F, epsilon: f64) -> Result<f64>
where
    F: FnMut(&mut Graph, &[TensorId]) -> Result<TensorId>,
{
    let run = |f: &mut F, values: &[Tensor]| -> Result<(Graph, TensorId, Vec<TensorId>)> {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = values.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = f(&mut g, &ids)?;
        if g.value(loss).numel() != 1 {
            return Err(Error::contract("grad_check function must return a scalar".to_string()));
        }
        Ok((g, loss, ids))
    };

    let base: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let (mut graph, loss, ids) = run(&mut f, &base)?;
    let l0 = graph.value(loss).data[0];
    let (graph2, loss2, _) = run(&mut f, &base)?;
    if l0.to_bits() != graph2.value(loss2).data[0].to_bits() {
        return Err(Error::contract(
            "grad_check function is not deterministic: two evaluations differ".to_string(),
        ));
    }
    graph.backward(loss)?;

    let mut worst = 0.0f64;
    for (pi, (name, tensor)) in params.iter().enumerate() {
        let analytic = graph
            .grad(ids[pi])
            .ok_or_else(|| Error::contract(format!("no gradient for parameter {name}")))?
            .to_vec();
        for e in 0..tensor.numel() {
            let mut plus = base.to_vec();
            plus[pi].data[e] += epsilon;
            let (gp, lp, _) = run(&mut f, &plus)?;
            let mut minus = base.to_vec();
            minus[pi].data[e] -= epsilon;
            let (gm, lm, _) = run(&mut f, &minus)?;
            let numeric = (gp.value(lp).data[0] - gm.value(lm).data[0]) / (2.0 * epsilon);
            let err = max_relative_error(&[analytic[e]], &[numeric]);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
