//! Tape-based reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The [`Graph`] is a define-by-run tape: parameters are registered once and
//! persist across training steps, while every forward pass appends value nodes
//! and operation records that are discarded by [`Graph::clear_tape`] after the
//! step. All arithmetic is 64-bit.
//!
//! Supported shapes are scalars (`[]`), vectors (`[n]`) and row-major matrices
//! (`[d, k]`); there is no broadcasting beyond matrix-vector products and
//! elementwise ops on equal shapes.

use serde::{Deserialize, Serialize};

use super::DiffError;

/// Handle to a tensor node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    /// Raw node id in the computation record.
    pub fn node_id(&self) -> usize {
        self.0
    }
}

/// Elementwise activation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softplus,
    Sigmoid,
}

#[derive(Debug, Clone)]
enum Op {
    /// out = table[row, :]
    GatherRow { table: usize, row: usize, dim: usize },
    /// out = concat(parts)
    Concat { parts: Vec<usize> },
    /// out = x[start .. start+len]
    Slice { x: usize, start: usize },
    /// out = W·x  (W: [d,k], x: [k])
    Affine { w: usize, x: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    /// elementwise product
    Mul { a: usize, b: usize },
    /// out = s * v with s scalar and v a vector
    MulScalar { s: usize, v: usize },
    /// out = c * x
    Scale { x: usize, c: f64 },
    /// out = x + c (elementwise); derivative is the identity
    AddConst { x: usize },
    Act { x: usize, kind: Activation },
    Ln { x: usize },
    /// out = x / max(||x||, eps)
    L2Normalize { x: usize, eps: f64 },
    /// identity forward, zero backward
    StopGrad,
    /// out = sum(x), scalar
    Sum { x: usize },
    /// scalars -> vector
    Stack { parts: Vec<usize> },
    Softmax { x: usize },
    /// softmax with entries outside the top-k hard-zeroed (no renormalization);
    /// `soft` keeps the full softmax for the backward pass, `keep` the mask.
    TopKSoftmax {
        x: usize,
        soft: Vec<f64>,
        keep: Vec<bool>,
    },
}

#[derive(Debug, Clone)]
struct OpRecord {
    out: usize,
    op: Op,
}

/// Define-by-run computation graph.
///
/// Parameter nodes (created through [`Graph::param`]) persist across steps and
/// carry gradient accumulators; everything else lives only until the next
/// [`Graph::clear_tape`].
#[derive(Debug, Clone, Default)]
pub struct Graph {
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    requires_grad: Vec<bool>,
    ops: Vec<OpRecord>,
    n_persistent: usize,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of persistent (parameter) nodes.
    pub fn n_params(&self) -> usize {
        self.n_persistent
    }

    /// Registers a persistent trainable tensor. Must be called before any
    /// operation has been recorded on the tape.
    pub fn param(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var, DiffError> {
        if !self.ops.is_empty() || self.values.len() != self.n_persistent {
            return Err(DiffError::InvalidArg(
                "parameters must be registered before the tape records operations".into(),
            ));
        }
        if values.len() != numel(shape) {
            return Err(DiffError::ShapeMismatch {
                op: "param",
                expected: shape.to_vec(),
                got: vec![values.len()],
            });
        }
        let n = values.len();
        self.shapes.push(shape.to_vec());
        self.values.push(values);
        self.grads.push(vec![0.0; n]);
        self.requires_grad.push(true);
        self.n_persistent += 1;
        Ok(Var(self.n_persistent - 1))
    }

    /// Appends a non-trainable leaf for this pass (inputs, constants).
    pub fn input(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var, DiffError> {
        if values.len() != numel(shape) {
            return Err(DiffError::ShapeMismatch {
                op: "input",
                expected: shape.to_vec(),
                got: vec![values.len()],
            });
        }
        Ok(self.push_node(shape.to_vec(), values, false))
    }

    /// Scalar constant leaf.
    pub fn const_scalar(&mut self, c: f64) -> Var {
        self.push_node(vec![], vec![c], false)
    }

    fn push_node(&mut self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Var {
        let n = values.len();
        debug_assert_eq!(n, numel(&shape));
        self.shapes.push(shape);
        self.values.push(values);
        self.grads.push(vec![0.0; n]);
        self.requires_grad.push(requires_grad);
        Var(self.values.len() - 1)
    }

    fn record(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Var {
        let out = self.push_node(shape, values, true);
        self.ops.push(OpRecord { out: out.0, op });
        out
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.shapes[v.0]
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }

    /// Scalar value of a `[]`- or `[1]`-shaped node.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.values[v.0].len(), 1);
        self.values[v.0][0]
    }

    pub fn is_scalar(&self, v: Var) -> bool {
        self.values[v.0].len() == 1
    }

    /// Overwrites the values of a node (used by the optimizer on parameters).
    pub fn set_values(&mut self, v: Var, values: &[f64]) -> Result<(), DiffError> {
        if values.len() != self.values[v.0].len() {
            return Err(DiffError::ShapeMismatch {
                op: "set_values",
                expected: self.shapes[v.0].clone(),
                got: vec![values.len()],
            });
        }
        self.values[v.0].copy_from_slice(values);
        Ok(())
    }

    pub fn set_value_at(&mut self, v: Var, idx: usize, value: f64) {
        self.values[v.0][idx] = value;
    }

    pub fn value_at(&self, v: Var, idx: usize) -> f64 {
        self.values[v.0][idx]
    }

    /// Zeroes every gradient buffer, parameters included.
    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            for x in g.iter_mut() {
                *x = 0.0;
            }
        }
    }

    /// Drops all per-pass nodes and operation records, keeping parameters.
    pub fn clear_tape(&mut self) {
        self.shapes.truncate(self.n_persistent);
        self.values.truncate(self.n_persistent);
        self.grads.truncate(self.n_persistent);
        self.requires_grad.truncate(self.n_persistent);
        self.ops.clear();
    }

    // ── Operations ──────────────────────────────────────────────────────

    /// Embedding lookup: row `row` of a `[rows, dim]` table.
    pub fn gather_row(&mut self, table: Var, row: usize) -> Result<Var, DiffError> {
        let shape = &self.shapes[table.0];
        if shape.len() != 2 {
            return Err(DiffError::ShapeMismatch {
                op: "gather_row",
                expected: vec![0, 0],
                got: shape.clone(),
            });
        }
        let (rows, dim) = (shape[0], shape[1]);
        if row >= rows {
            return Err(DiffError::InvalidArg(format!(
                "gather_row: row {row} out of bounds for table with {rows} rows"
            )));
        }
        let vals = self.values[table.0][row * dim..(row + 1) * dim].to_vec();
        Ok(self.record(
            vec![dim],
            vals,
            Op::GatherRow {
                table: table.0,
                row,
                dim,
            },
        ))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::InvalidArg("concat of zero parts".into()));
        }
        let mut vals = Vec::new();
        for p in parts {
            vals.extend_from_slice(&self.values[p.0]);
        }
        let n = vals.len();
        Ok(self.record(
            vec![n],
            vals,
            Op::Concat {
                parts: parts.iter().map(|p| p.0).collect(),
            },
        ))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, DiffError> {
        let n = self.values[x.0].len();
        if start + len > n {
            return Err(DiffError::InvalidArg(format!(
                "slice [{start}, {}) out of bounds for length {n}",
                start + len
            )));
        }
        let vals = self.values[x.0][start..start + len].to_vec();
        Ok(self.record(vec![len], vals, Op::Slice { x: x.0, start }))
    }

    /// Matrix-vector product `W·x` with `W: [d, k]` and `x: [k]`.
    pub fn affine(&mut self, w: Var, x: Var) -> Result<Var, DiffError> {
        let ws = self.shapes[w.0].clone();
        let xs = self.shapes[x.0].clone();
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(DiffError::ShapeMismatch {
                op: "affine",
                expected: ws,
                got: xs,
            });
        }
        let (d, k) = (ws[0], ws[1]);
        let wv = &self.values[w.0];
        let xv = &self.values[x.0];
        let mut out = vec![0.0; d];
        for i in 0..d {
            let row = &wv[i * k..(i + 1) * k];
            let mut acc = 0.0;
            for j in 0..k {
                acc += row[j] * xv[j];
            }
            out[i] = acc;
        }
        Ok(self.record(vec![d], out, Op::Affine { w: w.0, x: x.0 }))
    }

    fn elementwise_shapes(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>, DiffError> {
        if self.shapes[a.0] != self.shapes[b.0] {
            return Err(DiffError::ShapeMismatch {
                op,
                expected: self.shapes[a.0].clone(),
                got: self.shapes[b.0].clone(),
            });
        }
        Ok(self.shapes[a.0].clone())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let shape = self.elementwise_shapes("add", a, b)?;
        let vals: Vec<f64> = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.record(shape, vals, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let shape = self.elementwise_shapes("sub", a, b)?;
        let vals: Vec<f64> = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.record(shape, vals, Op::Sub { a: a.0, b: b.0 }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let shape = self.elementwise_shapes("mul", a, b)?;
        let vals: Vec<f64> = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.record(shape, vals, Op::Mul { a: a.0, b: b.0 }))
    }

    /// Scalar times vector.
    pub fn mul_scalar(&mut self, s: Var, v: Var) -> Result<Var, DiffError> {
        if !self.is_scalar(s) {
            return Err(DiffError::ShapeMismatch {
                op: "mul_scalar",
                expected: vec![],
                got: self.shapes[s.0].clone(),
            });
        }
        let c = self.scalar(s);
        let shape = self.shapes[v.0].clone();
        let vals: Vec<f64> = self.values[v.0].iter().map(|x| c * x).collect();
        Ok(self.record(shape, vals, Op::MulScalar { s: s.0, v: v.0 }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let shape = self.shapes[x.0].clone();
        let vals: Vec<f64> = self.values[x.0].iter().map(|v| c * v).collect();
        self.record(shape, vals, Op::Scale { x: x.0, c })
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let shape = self.shapes[x.0].clone();
        let vals: Vec<f64> = self.values[x.0].iter().map(|v| v + c).collect();
        self.record(shape, vals, Op::AddConst { x: x.0 })
    }

    /// Elementwise activation with the matching derivative in the backward
    /// pass. relu' at exactly 0 is defined as 0.
    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let shape = self.shapes[x.0].clone();
        let vals: Vec<f64> = self.values[x.0]
            .iter()
            .map(|&v| match kind {
                Activation::Relu => {
                    if v > 0.0 {
                        v
                    } else {
                        0.0
                    }
                }
                Activation::Softplus => softplus(v),
                Activation::Sigmoid => sigmoid(v),
            })
            .collect();
        self.record(shape, vals, Op::Act { x: x.0, kind })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Softplus)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    /// Natural log; all entries must be strictly positive.
    pub fn ln(&mut self, x: Var) -> Result<Var, DiffError> {
        if self.values[x.0].iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(DiffError::Numeric(
                "ln of a non-positive or non-finite value".into(),
            ));
        }
        let shape = self.shapes[x.0].clone();
        let vals: Vec<f64> = self.values[x.0].iter().map(|v| v.ln()).collect();
        Ok(self.record(shape, vals, Op::Ln { x: x.0 }))
    }

    /// x / max(||x||₂, eps). The eps guard makes the zero vector map to
    /// itself; the derivative uses the norm branch when ||x|| >= eps and the
    /// constant-denominator branch otherwise.
    pub fn l2_normalize(&mut self, x: Var, eps: f64) -> Result<Var, DiffError> {
        if eps <= 0.0 {
            return Err(DiffError::InvalidArg("l2_normalize: eps must be > 0".into()));
        }
        let shape = self.shapes[x.0].clone();
        let norm = self.values[x.0].iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = norm.max(eps);
        let vals: Vec<f64> = self.values[x.0].iter().map(|v| v / denom).collect();
        Ok(self.record(shape, vals, Op::L2Normalize { x: x.0, eps }))
    }

    /// Identity forward; deposits exactly zero into everything upstream.
    pub fn stop_grad(&mut self, x: Var) -> Var {
        let shape = self.shapes[x.0].clone();
        let vals = self.values[x.0].clone();
        self.record(shape, vals, Op::StopGrad)
    }

    /// Sum of all entries, scalar output.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.values[x.0].iter().sum();
        self.record(vec![], vec![s], Op::Sum { x: x.0 })
    }

    /// Stacks scalar nodes into a vector.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::InvalidArg("stack of zero parts".into()));
        }
        let mut vals = Vec::with_capacity(parts.len());
        for p in parts {
            if !self.is_scalar(*p) {
                return Err(DiffError::ShapeMismatch {
                    op: "stack",
                    expected: vec![],
                    got: self.shapes[p.0].clone(),
                });
            }
            vals.push(self.values[p.0][0]);
        }
        let n = vals.len();
        Ok(self.record(
            vec![n],
            vals,
            Op::Stack {
                parts: parts.iter().map(|p| p.0).collect(),
            },
        ))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let shape = self.shapes[x.0].clone();
        let vals = softmax_vals(&self.values[x.0]);
        self.record(shape, vals, Op::Softmax { x: x.0 })
    }

    /// Softmax with only the top-k entries kept (ties broken by lower index)
    /// and the rest hard-zeroed. The kept mass is not renormalized, and the
    /// gradient flows only through the kept entries.
    pub fn topk_softmax(&mut self, x: Var, k: usize) -> Result<Var, DiffError> {
        let n = self.values[x.0].len();
        if k == 0 || k > n {
            return Err(DiffError::InvalidArg(format!(
                "topk_softmax: k = {k} out of range for {n} entries"
            )));
        }
        let soft = softmax_vals(&self.values[x.0]);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.values[x.0][b]
                .partial_cmp(&self.values[x.0][a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut keep = vec![false; n];
        for &i in order.iter().take(k) {
            keep[i] = true;
        }
        let vals: Vec<f64> = soft
            .iter()
            .zip(&keep)
            .map(|(&s, &m)| if m { s } else { 0.0 })
            .collect();
        let shape = self.shapes[x.0].clone();
        Ok(self.record(shape, vals, Op::TopKSoftmax { x: x.0, soft, keep }))
    }

    // ── Composites ─────────────────────────────────────────────────────

    /// Inner product of two equal-length vectors, scalar output.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let prod = self.mul(a, b)?;
        Ok(self.sum(prod))
    }

    /// Mean of a list of scalars.
    pub fn mean_stack(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let stacked = self.stack(parts)?;
        let total = self.sum(stacked);
        Ok(self.scale(total, 1.0 / parts.len() as f64))
    }

    // ── Backward ───────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Gradients of per-pass nodes are reset
    /// first, so repeated calls accumulate additively into parameter
    /// gradients only.
    pub fn backward(&mut self, loss: Var) -> Result<(), DiffError> {
        if !self.is_scalar(loss) {
            return Err(DiffError::NonScalarLoss(self.shapes[loss.0].clone()));
        }
        for g in self.grads.iter_mut().skip(self.n_persistent) {
            for x in g.iter_mut() {
                *x = 0.0;
            }
        }
        self.grads[loss.0][0] += 1.0;

        let ops = std::mem::take(&mut self.ops);
        for rec in ops.iter().rev() {
            self.backprop_op(rec);
        }
        self.ops = ops;
        Ok(())
    }

    fn backprop_op(&mut self, rec: &OpRecord) {
        let go = self.grads[rec.out].clone();
        if go.iter().all(|&g| g == 0.0) {
            return;
        }
        match &rec.op {
            Op::GatherRow { table, row, dim } => {
                let dst = &mut self.grads[*table][row * dim..(row + 1) * dim];
                for (d, g) in dst.iter_mut().zip(&go) {
                    *d += g;
                }
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = self.grads[p].len();
                    for (d, g) in self.grads[p].iter_mut().zip(&go[off..off + n]) {
                        *d += g;
                    }
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let dst = &mut self.grads[*x][*start..*start + go.len()];
                for (d, g) in dst.iter_mut().zip(&go) {
                    *d += g;
                }
            }
            Op::Affine { w, x } => {
                let k = self.shapes[*w][1];
                let d = self.shapes[*w][0];
                // dW += g · xᵀ
                {
                    let xv = self.values[*x].clone();
                    let gw = &mut self.grads[*w];
                    for i in 0..d {
                        let gi = go[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &mut gw[i * k..(i + 1) * k];
                        for j in 0..k {
                            row[j] += gi * xv[j];
                        }
                    }
                }
                // dx += Wᵀ · g
                {
                    let wv = &self.values[*w];
                    let gx = &mut self.grads[*x];
                    for i in 0..d {
                        let gi = go[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &wv[i * k..(i + 1) * k];
                        for j in 0..k {
                            gx[j] += gi * row[j];
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for (d, g) in self.grads[*a].iter_mut().zip(&go) {
                    *d += g;
                }
                for (d, g) in self.grads[*b].iter_mut().zip(&go) {
                    *d += g;
                }
            }
            Op::Sub { a, b } => {
                for (d, g) in self.grads[*a].iter_mut().zip(&go) {
                    *d += g;
                }
                for (d, g) in self.grads[*b].iter_mut().zip(&go) {
                    *d -= g;
                }
            }
            Op::Mul { a, b } => {
                let av = self.values[*a].clone();
                let bv = self.values[*b].clone();
                for ((d, g), y) in self.grads[*a].iter_mut().zip(&go).zip(&bv) {
                    *d += g * y;
                }
                for ((d, g), y) in self.grads[*b].iter_mut().zip(&go).zip(&av) {
                    *d += g * y;
                }
            }
            Op::MulScalar { s, v } => {
                let sv = self.values[*s][0];
                let vv = self.values[*v].clone();
                let mut ds = 0.0;
                for (g, y) in go.iter().zip(&vv) {
                    ds += g * y;
                }
                self.grads[*s][0] += ds;
                for (d, g) in self.grads[*v].iter_mut().zip(&go) {
                    *d += g * sv;
                }
            }
            Op::Scale { x, c } => {
                for (d, g) in self.grads[*x].iter_mut().zip(&go) {
                    *d += g * c;
                }
            }
            Op::AddConst { x } => {
                for (d, g) in self.grads[*x].iter_mut().zip(&go) {
                    *d += g;
                }
            }
            Op::Act { x, kind } => {
                let xv = self.values[*x].clone();
                let ov = self.values[rec.out].clone();
                for i in 0..go.len() {
                    let slope = match kind {
                        Activation::Relu => {
                            if xv[i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Activation::Softplus => sigmoid(xv[i]),
                        Activation::Sigmoid => ov[i] * (1.0 - ov[i]),
                    };
                    self.grads[*x][i] += go[i] * slope;
                }
            }
            Op::Ln { x } => {
                let xv = self.values[*x].clone();
                for i in 0..go.len() {
                    self.grads[*x][i] += go[i] / xv[i];
                }
            }
            Op::L2Normalize { x, eps } => {
                let xv = self.values[*x].clone();
                let yv = self.values[rec.out].clone();
                let norm = xv.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm >= *eps {
                    // dx = (g - y (y·g)) / norm
                    let ydotg: f64 = yv.iter().zip(&go).map(|(y, g)| y * g).sum();
                    for i in 0..go.len() {
                        self.grads[*x][i] += (go[i] - yv[i] * ydotg) / norm;
                    }
                } else {
                    for i in 0..go.len() {
                        self.grads[*x][i] += go[i] / eps;
                    }
                }
            }
            Op::StopGrad => {}
            Op::Sum { x } => {
                let g = go[0];
                for d in self.grads[*x].iter_mut() {
                    *d += g;
                }
            }
            Op::Stack { parts } => {
                for (i, &p) in parts.iter().enumerate() {
                    self.grads[p][0] += go[i];
                }
            }
            Op::Softmax { x } => {
                let yv = self.values[rec.out].clone();
                let dot: f64 = yv.iter().zip(&go).map(|(y, g)| y * g).sum();
                for i in 0..go.len() {
                    self.grads[*x][i] += yv[i] * (go[i] - dot);
                }
            }
            Op::TopKSoftmax { x, soft, keep } => {
                // Mask is a constant of the forward pass: only kept entries
                // feed gradient into the underlying softmax.
                let masked: Vec<f64> = go
                    .iter()
                    .zip(keep)
                    .map(|(&g, &m)| if m { g } else { 0.0 })
                    .collect();
                let dot: f64 = soft.iter().zip(&masked).map(|(s, g)| s * g).sum();
                for i in 0..masked.len() {
                    self.grads[*x][i] += soft[i] * (masked[i] - dot);
                }
            }
        }
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_vals(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_with_vec(vals: &[f64]) -> (Graph, Var) {
        let mut g = Graph::new();
        let v = g.param(&[vals.len()], vals.to_vec()).unwrap();
        (g, v)
    }

    #[test]
    fn affine_identity() {
        let mut g = Graph::new();
        let w = g.param(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = g.param(&[2], vec![3.0, -1.0]).unwrap();
        let y = g.affine(w, x).unwrap();
        assert_eq!(g.values(y), &[3.0, -1.0]);
    }

    #[test]
    fn affine_zero_matrix() {
        let mut g = Graph::new();
        let w = g.param(&[2, 3], vec![0.0; 6]).unwrap();
        let x = g.param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = g.affine(w, x).unwrap();
        assert_eq!(g.values(y), &[0.0, 0.0]);
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let w = g.param(&[2, 3], vec![0.0; 6]).unwrap();
        let x = g.param(&[2], vec![1.0, 2.0]).unwrap();
        let err = g.affine(w, x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn relu_forward() {
        let (mut g, x) = graph_with_vec(&[-2.0, 0.0, 3.0]);
        let y = g.relu(x);
        assert_eq!(g.values(y), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let (mut g, x) = graph_with_vec(&[0.0]);
        let y = g.sigmoid(x);
        assert_eq!(g.values(y), &[0.5]);
    }

    #[test]
    fn softplus_at_zero_is_ln_two() {
        let (mut g, x) = graph_with_vec(&[0.0]);
        let y = g.softplus(x);
        assert!((g.values(y)[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn l2_normalize_three_four_five() {
        let (mut g, x) = graph_with_vec(&[3.0, 4.0]);
        let y = g.l2_normalize(x, 1e-12).unwrap();
        assert!((g.values(y)[0] - 0.6).abs() < 1e-15);
        assert!((g.values(y)[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn l2_normalize_zero_vector_guard() {
        let (mut g, x) = graph_with_vec(&[0.0, 0.0, 0.0]);
        let y = g.l2_normalize(x, 1e-12).unwrap();
        assert_eq!(g.values(y), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn stop_grad_is_value_transparent() {
        let (mut g, x) = graph_with_vec(&[1.5, -2.5]);
        let y = g.stop_grad(x);
        assert_eq!(g.values(y), g.values(x).to_vec().as_slice());
    }

    #[test]
    fn stop_grad_blocks_gradient() {
        let (mut g, x) = graph_with_vec(&[1.0, 2.0]);
        let s = g.stop_grad(x);
        let loss = g.sum(s);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &[0.0, 0.0]);
    }

    #[test]
    fn stop_grad_live_branch_still_flows() {
        // loss = sum(x + stop_grad(x)) → dx = ones
        let (mut g, x) = graph_with_vec(&[1.0, 2.0]);
        let s = g.stop_grad(x);
        let both = g.add(x, s).unwrap();
        let loss = g.sum(both);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &[1.0, 1.0]);
    }

    #[test]
    fn backward_of_square_sum() {
        // loss = sum(x∘x), x = (1, 2) → grad = (2, 4)
        let (mut g, x) = graph_with_vec(&[1.0, 2.0]);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &[2.0, 4.0]);
    }

    #[test]
    fn backward_of_constant_leaves_grads_zero() {
        let (mut g, x) = graph_with_vec(&[1.0, 2.0]);
        let c = g.const_scalar(42.0);
        g.backward(c).unwrap();
        assert_eq!(g.grad(x), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let (mut g, x) = graph_with_vec(&[1.0, 2.0]);
        assert!(matches!(g.backward(x), Err(DiffError::NonScalarLoss(_))));
    }

    #[test]
    fn gradient_accumulation_is_additive() {
        let (mut g, x) = graph_with_vec(&[1.0, 3.0]);
        let sq = g.mul(x, x).unwrap();
        let l1 = g.sum(sq);
        let l2 = g.sum(x);
        // backward(l1) then backward(l2)
        g.backward(l1).unwrap();
        g.backward(l2).unwrap();
        let separate = g.grad(x).to_vec();

        g.zero_grads();
        let combined = g.add(l1, l2).unwrap();
        g.backward(combined).unwrap();
        let joint = g.grad(x).to_vec();
        for (a, b) in separate.iter().zip(&joint) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reset_then_backward_reproduces_fresh_gradients() {
        let (mut g, x) = graph_with_vec(&[2.0, -1.0]);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        let first = g.grad(x).to_vec();
        g.zero_grads();
        g.backward(loss).unwrap();
        assert_eq!(first, g.grad(x).to_vec());
    }

    #[test]
    fn topk_softmax_keeps_exactly_k_without_renormalizing() {
        let (mut g, x) = graph_with_vec(&[2.0, -1.0, 0.5]);
        let y = g.topk_softmax(x, 2).unwrap();
        let full = softmax_vals(&[2.0, -1.0, 0.5]);
        let got = g.values(y);
        assert!((got[0] - full[0]).abs() < 1e-15);
        assert_eq!(got[1], 0.0);
        assert!((got[2] - full[2]).abs() < 1e-15);
        assert_eq!(got.iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn softmax_sums_to_one() {
        let (mut g, x) = graph_with_vec(&[0.3, -1.2, 2.4, 0.0]);
        let y = g.softmax(x);
        let s: f64 = g.values(y).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clear_tape_keeps_parameters() {
        let (mut g, x) = graph_with_vec(&[1.0, 2.0]);
        let y = g.relu(x);
        let _ = g.sum(y);
        g.clear_tape();
        assert_eq!(g.values(x), &[1.0, 2.0]);
        assert_eq!(g.n_params(), 1);
        // the tape is reusable after clearing
        let y2 = g.relu(x);
        assert_eq!(g.values(y2), &[1.0, 2.0]);
    }

    #[test]
    fn ln_rejects_non_positive() {
        let (mut g, x) = graph_with_vec(&[1.0, 0.0]);
        assert!(matches!(g.ln(x), Err(DiffError::Numeric(_))));
    }

    #[test]
    fn slice_and_concat_roundtrip_gradients() {
        let (mut g, x) = graph_with_vec(&[1.0, 2.0, 3.0, 4.0]);
        let a = g.slice(x, 0, 2).unwrap();
        let b = g.slice(x, 2, 2).unwrap();
        let back = g.concat(&[a, b]).unwrap();
        let sq = g.mul(back, back).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &[2.0, 4.0, 6.0, 8.0]);
    }
}
