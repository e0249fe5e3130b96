//! Layers and the optimizer for recurrent encoder-decoder models.
//!
//! Layers own their parameters as plain [`Tensor`] values. Because the graph
//! is rebuilt every forward pass, a layer is first *bound* to the current
//! graph (registering each parameter once as a leaf) and the returned bound
//! handle is what forward code calls. Binding once per graph is what makes
//! gradients accumulate correctly when a cell is reused across timesteps.
//!
//! Weight matrices are stored `[input_dim, hidden_dim]` so a step computes
//! `x . W` on row vectors; that is the transpose of the `W . x` column
//! convention with identical parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, TensorId};

/// Initial weights are uniform in `(-INIT_RANGE, INIT_RANGE)`; biases start at zero.
pub const INIT_RANGE: f64 = 0.08;

fn uniform_init(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    let numel = shape.iter().product();
    let data = (0..numel)
        .map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
        .collect();
    Tensor { shape, data }
}

/// Parameters of a layer tree, flattened in a fixed traversal order with
/// dotted paths. The same order is used by the optimizer, checkpointing, and
/// gradient collection, so the three never disagree.
pub type ParamList<'a> = Vec<(String, &'a Tensor)>;
pub type ParamListMut<'a> = Vec<(String, &'a mut Tensor)>;

// ── Embedding ───────────────────────────────────────────────────────────────

/// Token-id to vector lookup table.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Tensor, // [vocab_size, dim]
}

impl Embedding {
    pub fn new(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Embedding {
        Embedding {
            table: uniform_init(rng, vec![vocab_size, dim]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape[1]
    }

    pub fn bind(&self, g: &mut Graph) -> EmbeddingBound {
        EmbeddingBound {
            table: g.leaf(self.table.clone(), true),
        }
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((format!("{prefix}.table"), &self.table));
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamListMut<'a>) {
        out.push((format!("{prefix}.table"), &mut self.table));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbeddingBound {
    pub table: TensorId,
}

impl EmbeddingBound {
    /// Embed a token-id sequence into a `[len, dim]` matrix. Duplicate ids
    /// share (and accumulate gradient into) the same table row.
    pub fn lookup(&self, g: &mut Graph, ids: &[u32]) -> Result<TensorId> {
        let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        g.gather_rows(self.table, &ids)
    }

    /// Graph leaf ids under the same paths `params` uses, for gradient reads.
    pub fn leaves(&self, prefix: &str, out: &mut Vec<(String, TensorId)>) {
        out.push((format!("{prefix}.table"), self.table));
    }
}

// ── GRU cell ────────────────────────────────────────────────────────────────

/// Gated recurrent unit with a single bias per gate.
///
/// The update gate interpolates toward the *previous* state:
/// `h_t = (1 - z) * h_cand + z * h_prev`, so all-zero parameters give
/// `h_t = 0.5 * h_prev`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> GruCell {
        let w = |rng: &mut _| uniform_init(rng, vec![input_dim, hidden_dim]);
        let u = |rng: &mut _| uniform_init(rng, vec![hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(vec![hidden_dim]);
        GruCell {
            w_z: w(rng),
            u_z: u(rng),
            b_z: b(),
            w_r: w(rng),
            u_r: u(rng),
            b_r: b(),
            w_h: w(rng),
            u_h: u(rng),
            b_h: b(),
            input_dim,
            hidden_dim,
        }
    }

    /// All-zero parameters; useful for tests pinning the gate algebra.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> GruCell {
        GruCell {
            w_z: Tensor::zeros(vec![input_dim, hidden_dim]),
            u_z: Tensor::zeros(vec![hidden_dim, hidden_dim]),
            b_z: Tensor::zeros(vec![hidden_dim]),
            w_r: Tensor::zeros(vec![input_dim, hidden_dim]),
            u_r: Tensor::zeros(vec![hidden_dim, hidden_dim]),
            b_r: Tensor::zeros(vec![hidden_dim]),
            w_h: Tensor::zeros(vec![input_dim, hidden_dim]),
            u_h: Tensor::zeros(vec![hidden_dim, hidden_dim]),
            b_h: Tensor::zeros(vec![hidden_dim]),
            input_dim,
            hidden_dim,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> GruCellBound {
        GruCellBound {
            w_z: g.leaf(self.w_z.clone(), true),
            u_z: g.leaf(self.u_z.clone(), true),
            b_z: g.leaf(self.b_z.clone(), true),
            w_r: g.leaf(self.w_r.clone(), true),
            u_r: g.leaf(self.u_r.clone(), true),
            b_r: g.leaf(self.b_r.clone(), true),
            w_h: g.leaf(self.w_h.clone(), true),
            u_h: g.leaf(self.u_h.clone(), true),
            b_h: g.leaf(self.b_h.clone(), true),
            hidden_dim: self.hidden_dim,
        }
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut ParamList<'a>) {
        for (name, t) in [
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_h", &self.w_h),
            ("u_h", &self.u_h),
            ("b_h", &self.b_h),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamListMut<'a>) {
        for (name, t) in [
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("b_z", &mut self.b_z),
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("b_r", &mut self.b_r),
            ("w_h", &mut self.w_h),
            ("u_h", &mut self.u_h),
            ("b_h", &mut self.b_h),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GruCellBound {
    pub w_z: TensorId,
    pub u_z: TensorId,
    pub b_z: TensorId,
    pub w_r: TensorId,
    pub u_r: TensorId,
    pub b_r: TensorId,
    pub w_h: TensorId,
    pub u_h: TensorId,
    pub b_h: TensorId,
    pub hidden_dim: usize,
}

impl GruCellBound {
    /// One recurrence step on a row batch: `x` is `[B, input_dim]`, `h_prev`
    /// is `[B, hidden_dim]`, result is `[B, hidden_dim]`.
    pub fn step(&self, g: &mut Graph, x: TensorId, h_prev: TensorId) -> Result<TensorId> {
        let gate = |g: &mut Graph, w, u, b, x, h| -> Result<TensorId> {
            let xw = g.matmul(x, w)?;
            let hu = g.matmul(h, u)?;
            let s = g.add(xw, hu)?;
            g.bias_add(s, b)
        };
        let z_pre = gate(g, self.w_z, self.u_z, self.b_z, x, h_prev)?;
        let z = g.sigmoid(z_pre);
        let r_pre = gate(g, self.w_r, self.u_r, self.b_r, x, h_prev)?;
        let r = g.sigmoid(r_pre);
        let rh = g.mul(r, h_prev)?;
        let c_pre = gate(g, self.w_h, self.u_h, self.b_h, x, rh)?;
        let cand = g.tanh(c_pre);

        let rows = g.value(h_prev).shape[0];
        let ones = g.constant(Tensor {
            shape: vec![rows, self.hidden_dim],
            data: vec![1.0; rows * self.hidden_dim],
        });
        let keep = g.sub(ones, z)?;
        let new_part = g.mul(keep, cand)?;
        let old_part = g.mul(z, h_prev)?;
        g.add(new_part, old_part)
    }

    pub fn zero_state(&self, g: &mut Graph, rows: usize) -> TensorId {
        g.constant(Tensor::zeros(vec![rows, self.hidden_dim]))
    }

    /// Graph leaf ids under the same paths `params` uses, for gradient reads.
    pub fn leaves(&self, prefix: &str, out: &mut Vec<(String, TensorId)>) {
        for (name, id) in [
            ("w_z", self.w_z),
            ("u_z", self.u_z),
            ("b_z", self.b_z),
            ("w_r", self.w_r),
            ("u_r", self.u_r),
            ("b_r", self.b_r),
            ("w_h", self.w_h),
            ("u_h", self.u_h),
            ("b_h", self.b_h),
        ] {
            out.push((format!("{prefix}.{name}"), id));
        }
    }
}

// ── Bidirectional GRU encoder ───────────────────────────────────────────────

/// Two independent GRU cells run over a sequence in opposite directions; the
/// state at position t is the concatenation `[forward_t, backward_t]`. Both
/// directions start from zero states.
#[derive(Debug, Clone)]
pub struct BiGruEncoder {
    pub forward_cell: GruCell,
    pub backward_cell: GruCell,
}

impl BiGruEncoder {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> BiGruEncoder {
        BiGruEncoder {
            forward_cell: GruCell::new(input_dim, hidden_dim, rng),
            backward_cell: GruCell::new(input_dim, hidden_dim, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward_cell.hidden_dim
    }

    pub fn bind(&self, g: &mut Graph) -> BiGruEncoderBound {
        BiGruEncoderBound {
            fwd: self.forward_cell.bind(g),
            bwd: self.backward_cell.bind(g),
        }
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut ParamList<'a>) {
        self.forward_cell.params(&format!("{prefix}.fwd"), out);
        self.backward_cell.params(&format!("{prefix}.bwd"), out);
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamListMut<'a>) {
        self.forward_cell.params_mut(&format!("{prefix}.fwd"), out);
        self.backward_cell.params_mut(&format!("{prefix}.bwd"), out);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiGruEncoderBound {
    pub fwd: GruCellBound,
    pub bwd: GruCellBound,
}

impl BiGruEncoderBound {
    /// Encode one embedded sequence `[T, input_dim]` (T >= 1) into per-position
    /// states `[T, 2*hidden_dim]` plus the final state `[1, 2*hidden_dim]`
    /// (forward state after the last token, backward state after the first).
    pub fn encode(&self, g: &mut Graph, embedded: TensorId) -> Result<(TensorId, TensorId)> {
        let t_len = g.value(embedded).shape[0];
        if t_len == 0 {
            return Err(Error::contract("cannot encode an empty sequence".to_string()));
        }
        let mut fwd_states = Vec::with_capacity(t_len);
        let mut h = self.fwd.zero_state(g, 1);
        for t in 0..t_len {
            let x = g.slice_rows(embedded, t, 1)?;
            h = self.fwd.step(g, x, h)?;
            fwd_states.push(h);
        }
        let mut bwd_states = Vec::with_capacity(t_len);
        let mut hb = self.bwd.zero_state(g, 1);
        for t in (0..t_len).rev() {
            let x = g.slice_rows(embedded, t, 1)?;
            hb = self.bwd.step(g, x, hb)?;
            bwd_states.push(hb);
        }
        bwd_states.reverse(); // index t now holds the backward state at position t
        let rows: Vec<TensorId> = (0..t_len)
            .map(|t| g.concat(&[fwd_states[t], bwd_states[t]], 1))
            .collect::<Result<_>>()?;
        let states = g.concat(&rows, 0)?;
        let final_state = g.concat(&[fwd_states[t_len - 1], bwd_states[0]], 1)?;
        Ok((states, final_state))
    }

    /// Graph leaf ids under the same paths `params` uses, for gradient reads.
    pub fn leaves(&self, prefix: &str, out: &mut Vec<(String, TensorId)>) {
        self.fwd.leaves(&format!("{prefix}.fwd"), out);
        self.bwd.leaves(&format!("{prefix}.bwd"), out);
    }
}

// ── Attention ───────────────────────────────────────────────────────────────

/// Bilinear ("general") attention: `score(q, k_s) = q . W_a . k_s`, weights by
/// softmax over positions, context as the weight-averaged key.
#[derive(Debug, Clone)]
pub struct LuongAttention {
    pub w_a: Tensor, // [query_dim, key_dim]
}

impl LuongAttention {
    pub fn new(query_dim: usize, key_dim: usize, rng: &mut impl Rng) -> LuongAttention {
        LuongAttention {
            w_a: uniform_init(rng, vec![query_dim, key_dim]),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> LuongAttentionBound {
        LuongAttentionBound {
            w_a: g.leaf(self.w_a.clone(), true),
        }
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((format!("{prefix}.w_a"), &self.w_a));
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamListMut<'a>) {
        out.push((format!("{prefix}.w_a"), &mut self.w_a));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LuongAttentionBound {
    pub w_a: TensorId,
}

impl LuongAttentionBound {
    /// Attend from `query` `[1, query_dim]` over `keys` `[S, key_dim]`.
    /// Returns `(context [1, key_dim], weights [1, S])`. Weights are a softmax,
    /// so they sum to 1; a single key gets weight exactly 1.
    pub fn attend(
        &self,
        g: &mut Graph,
        query: TensorId,
        keys: TensorId,
    ) -> Result<(TensorId, TensorId)> {
        let projected = g.matmul(query, self.w_a)?;
        let keys_t = g.transpose(keys)?;
        let scores = g.matmul(projected, keys_t)?;
        let weights = g.softmax(scores, 1)?;
        let context = g.matmul(weights, keys)?;
        Ok((context, weights))
    }

    /// `attend` with a validity mask over key positions: invalid positions
    /// get a score of −∞, so their softmax weight is exactly 0 and the
    /// context is a combination of valid keys only.
    pub fn attend_masked(
        &self,
        g: &mut Graph,
        query: TensorId,
        keys: TensorId,
        valid: &[bool],
    ) -> Result<(TensorId, TensorId)> {
        let positions = g.value(keys).shape[0];
        if valid.len() != positions {
            return Err(Error::Shape {
                op: "attend_masked",
                lhs: vec![positions],
                rhs: vec![valid.len()],
            });
        }
        if valid.iter().all(|&v| !v) {
            return Err(Error::contract(
                "attention over fully masked keys".to_string(),
            ));
        }
        if valid.iter().all(|&v| v) {
            return self.attend(g, query, keys);
        }
        let projected = g.matmul(query, self.w_a)?;
        let keys_t = g.transpose(keys)?;
        let scores = g.matmul(projected, keys_t)?;
        let bias = g.constant(Tensor {
            shape: vec![1, positions],
            data: valid
                .iter()
                .map(|&v| if v { 0.0 } else { f64::NEG_INFINITY })
                .collect(),
        });
        let masked = g.add(scores, bias)?;
        let weights = g.softmax(masked, 1)?;
        let context = g.matmul(weights, keys)?;
        Ok((context, weights))
    }

    /// Graph leaf ids under the same paths `params` uses, for gradient reads.
    pub fn leaves(&self, prefix: &str, out: &mut Vec<(String, TensorId)>) {
        out.push((format!("{prefix}.w_a"), self.w_a));
    }
}

// ── Linear projection ───────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor, // [in_dim, out_dim]
    pub b: Tensor, // [out_dim]
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Linear {
        Linear {
            w: uniform_init(rng, vec![in_dim, out_dim]),
            b: Tensor::zeros(vec![out_dim]),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> LinearBound {
        LinearBound {
            w: g.leaf(self.w.clone(), true),
            b: g.leaf(self.b.clone(), true),
        }
    }

    pub fn params<'a>(&'a self, prefix: &str, out: &mut ParamList<'a>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamListMut<'a>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.b"), &mut self.b));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearBound {
    pub w: TensorId,
    pub b: TensorId,
}

impl LinearBound {
    pub fn forward(&self, g: &mut Graph, x: TensorId) -> Result<TensorId> {
        let y = g.matmul(x, self.w)?;
        g.bias_add(y, self.b)
    }

    /// Graph leaf ids under the same paths `params` uses, for gradient reads.
    pub fn leaves(&self, prefix: &str, out: &mut Vec<(String, TensorId)>) {
        out.push((format!("{prefix}.w"), self.w));
        out.push((format!("{prefix}.b"), self.b));
    }
}

// ── Loss ────────────────────────────────────────────────────────────────────

/// Masked mean cross-entropy of `logits` `[T, V]` against gold ids. Masked
/// positions contribute nothing; an all-false mask is a contract error.
pub fn cross_entropy(
    g: &mut Graph,
    logits: TensorId,
    targets: &[u32],
    mask: &[bool],
) -> Result<TensorId> {
    let targets: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    g.cross_entropy(logits, &targets, mask)
}

// ── Adam ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// First/second moment accumulators keyed by parameter path. Each parameter
/// keeps its own step counter, so a parameter that only participates in some
/// updates (a task-private decoder under multi-task training) still gets
/// correct bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    slots: std::collections::BTreeMap<String, AdamSlot>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> AdamState {
        AdamState {
            config,
            slots: std::collections::BTreeMap::new(),
        }
    }

    /// Number of update steps applied to the named parameter so far.
    pub fn step_count(&self, name: &str) -> u64 {
        self.slots.get(name).map_or(0, |s| s.t)
    }

    /// Apply one Adam update to a single parameter in place.
    pub fn step(&mut self, name: &str, param: &mut Tensor, grad: &[f64]) -> Result<()> {
        if grad.len() != param.numel() {
            return Err(Error::contract(format!(
                "gradient length {} does not match parameter {name} with {} entries",
                grad.len(),
                param.numel()
            )));
        }
        let n = param.numel();
        let slot = self.slots.entry(name.to_string()).or_insert_with(|| AdamSlot {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        });
        if slot.m.len() != n {
            return Err(Error::contract(format!(
                "parameter {name} changed size from {} to {n}",
                slot.m.len()
            )));
        }
        slot.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(slot.t as i32);
        let bc2 = 1.0 - beta2.powi(slot.t as i32);
        for i in 0..n {
            slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * grad[i];
            slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = slot.m[i] / bc1;
            let v_hat = slot.v[i] / bc2;
            param.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Scale gradients in place so their global L2 norm does not exceed
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [(String, Vec<f64>)], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|&x| x * x)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}
