//! Define-by-run tape with reverse-mode differentiation.
//!
//! Each op computes its value eagerly and records what the backward pass
//! needs. Parameters enter the tape once per graph through [`Graph::param`],
//! so every use of a weight accumulates into a single leaf.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f32 = 1e-5;
/// Probabilities are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f32 = 1e-7;

enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    AddRow(Var, Var),
    SubRow(Var, Var),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Transpose(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Softmax(Var),
    Sigmoid(Var),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f32>, inv_std: Vec<f32> },
    Dropout { x: Var, mask: Vec<f32> },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows { x: Var, start: usize, end: usize },
    Sum(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f32> },
    Bce { probs: Var, targets: Vec<f32> },
    RowNorms(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Graph<'static> {
    /// A graph with no parameter store, for free-standing computations.
    pub fn detached(training: bool, seed: u64) -> Self {
        Graph {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore, training: bool, seed: u64) -> Self {
        Graph {
            params: Some(params),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by graph op");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn data(&self, v: Var) -> &[f32] {
        self.nodes[v.0].value.data()
    }

    /// Inserts a tensor as a leaf.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.input(value, false)
    }

    /// Inserts a parameter from the bound store; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.params.expect("graph has no parameter store");
        let value = store.value(id).clone();
        let v = self.push(value, Op::Param, true);
        self.param_vars.insert(id, v);
        v
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "add")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "sub")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x - y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "mul")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let (r, c) = self.shape(a);
        let data = self.data(a).iter().map(|x| x * s).collect();
        let rg = self.rg(a);
        self.push(Tensor::matrix(r, c, data).expect("same shape"), Op::Scale(a, s), rg)
    }

    /// `x + row`, broadcasting a `[1, n]` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(row) != (1, c) {
            return Err(Error::Shape(format!(
                "add_row: {:?} vs {:?}",
                (r, c),
                self.shape(row)
            )));
        }
        let rv = self.data(row);
        let data = self
            .data(x)
            .chunks(c.max(1))
            .flat_map(|xr| xr.iter().zip(rv).map(|(a, b)| a + b))
            .collect();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::AddRow(x, row), rg))
    }

    /// `x - row`, broadcasting a `[1, n]` row over every row of `x`.
    pub fn sub_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(row) != (1, c) {
            return Err(Error::Shape(format!(
                "sub_row: {:?} vs {:?}",
                (r, c),
                self.shape(row)
            )));
        }
        let rv = self.data(row);
        let data = self
            .data(x)
            .chunks(c.max(1))
            .flat_map(|xr| xr.iter().zip(rv).map(|(a, b)| a - b))
            .collect();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::SubRow(x, row), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::Shape(format!("matmul: [{m},{k}] x [{k2},{n}]")));
        }
        let data = kernels::matmul(self.data(a), self.data(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (n, k2)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::Shape(format!("matmul_bt: [{m},{k}] x [{n},{k2}]^T")));
        }
        let data = kernels::matmul_bt(self.data(a), self.data(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::MatMulBt(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let data = kernels::transpose(self.data(a), r, c);
        let rg = self.rg(a);
        self.push(Tensor::matrix(c, r, data).expect("shape"), Op::Transpose(a), rg)
    }

    /// Gathers rows of `table` (`[vocab, d]`) for each id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.shape(table);
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Invalid(format!("embedding id {bad} out of range {v}")));
        }
        let t = self.data(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::matrix(ids.len(), d, data)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(c.max(1)) {
            kernels::softmax_in_place(row);
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(r, c, data).expect("shape"), Op::Softmax(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let data = self.data(a).iter().map(|&x| sigmoid(x)).collect();
        let rg = self.rg(a);
        self.push(Tensor::matrix(r, c, data).expect("shape"), Op::Sigmoid(a), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let data = self.data(a).iter().map(|&x| gelu(x)).collect();
        let rg = self.rg(a);
        self.push(Tensor::matrix(r, c, data).expect("shape"), Op::Gelu(a), rg)
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (`[1, n]`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) {
            return Err(Error::Shape("layer_norm affine size".into()));
        }
        let xs = self.data(x);
        let (g, b) = (self.data(gamma), self.data(beta));
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LN_EPS as f64).sqrt();
            inv_std[i] = is as f32;
            for j in 0..c {
                let h = (row[j] as f64 - mean) * is;
                xhat[i * c + j] = h as f32;
                out[i * c + j] = (h * g[j] as f64 + b[j] as f64) as f32;
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            Tensor::matrix(r, c, out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout; the identity when the graph is not training.
    pub fn dropout(&mut self, x: Var, rate: f32) -> Var {
        if !self.training || rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let n = self.value(x).len();
        let mask: Vec<f32> = (0..n)
            .map(|_| {
                if self.rng.gen::<f32>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let (r, c) = self.shape(x);
        let data = self.data(x).iter().zip(&mask).map(|(a, m)| a * m).collect();
        let rg = self.rg(x);
        self.push(
            Tensor::matrix(r, c, data).expect("shape"),
            Op::Dropout { x, mask },
            rg,
        )
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start >= end || end > c {
            return Err(Error::Shape(format!("slice_cols {start}..{end} of {c}")));
        }
        let w = end - start;
        let xs = self.data(x);
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&xs[i * c + start..i * c + end]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(r, w, data)?, Op::SliceCols { x, start }, rg))
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start >= end || end > r {
            return Err(Error::Shape(format!("slice_rows {start}..{end} of {r}")));
        }
        let data = self.data(x)[start * c..end * c].to_vec();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(end - start, c, data)?,
            Op::SliceRows { x, start },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        if parts.iter().any(|&p| self.shape(p).0 != r) {
            return Err(Error::Shape("concat_cols row mismatch".into()));
        }
        let c: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = parts
            .first()
            .map(|&p| self.shape(p).1)
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        if parts.iter().any(|&p| self.shape(p).1 != c) {
            return Err(Error::Shape("concat_rows column mismatch".into()));
        }
        let r: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut data = Vec::with_capacity(r * c);
        for &p in parts {
            data.extend_from_slice(self.data(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Mean of rows `[start, end)` as a `[1, d]` row.
    pub fn mean_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start >= end || end > r {
            return Err(Error::Invalid(format!(
                "pooling span [{start}, {end}) invalid for {r} rows"
            )));
        }
        let xs = self.data(x);
        let mut data = vec![0.0; c];
        for i in start..end {
            for (acc, v) in data.iter_mut().zip(&xs[i * c..(i + 1) * c]) {
                *acc += v;
            }
        }
        let n = (end - start) as f32;
        data.iter_mut().for_each(|v| *v /= n);
        let rg = self.rg(x);
        Ok(self.push(Tensor::row_vector(data), Op::MeanRows { x, start, end }, rg))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().map(|&v| v as f64).sum::<f64>() as f32;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f32;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Mean softmax cross-entropy of each row of `logits` against its target class.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(Error::Shape(format!(
                "cross_entropy: {r} rows, {} targets",
                targets.len()
            )));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Invalid(format!("target class {t} out of {c}")));
        }
        let mut probs = self.data(logits).to_vec();
        let mut loss = 0.0f64;
        for (i, row) in probs.chunks_mut(c).enumerate() {
            let lse = kernels::log_sum_exp(row);
            loss += lse - row[targets[i]] as f64;
            kernels::softmax_in_place(row);
        }
        let loss = (loss / r.max(1) as f64) as f32;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of probabilities against `{0, 1}` targets.
    pub fn bce(&mut self, probs: Var, targets: &[f32]) -> Result<Var> {
        let n = self.value(probs).len();
        if targets.len() != n {
            return Err(Error::Shape(format!("bce: {n} probs, {} targets", targets.len())));
        }
        let loss = self
            .data(probs)
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP) as f64;
                let t = t as f64;
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n.max(1) as f64;
        let rg = self.rg(probs);
        Ok(self.push(
            Tensor::scalar(loss as f32),
            Op::Bce {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Euclidean norm of each row, as an `[r, 1]` column.
    pub fn row_norms(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let data = self
            .data(x)
            .chunks(c.max(1))
            .map(|row| row.iter().map(|v| v * v).sum::<f32>().sqrt())
            .collect::<Vec<_>>();
        let rg = self.rg(x);
        self.push(
            Tensor::matrix(r, 1, data).expect("shape"),
            Op::RowNorms(x),
            rg,
        )
    }

    /// Dot product of two equally shaped tensors, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Runs the reverse sweep from a scalar `loss`, consuming the graph.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.backprop_node(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        let param_nodes = self
            .param_vars
            .iter()
            .map(|(&id, &v)| (id, v.0))
            .collect();
        Ok(Gradients {
            by_node: grads,
            param_nodes,
        })
    }

    fn backprop_node(&self, idx: usize, dy: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let node = &self.nodes[idx];
        let (r, c) = (node.value.rows(), node.value.cols());
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |g| axpy(g, dy, 1.0));
                self.acc(grads, *b, |g| axpy(g, dy, 1.0));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |g| axpy(g, dy, 1.0));
                self.acc(grads, *b, |g| axpy(g, dy, -1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.data(*a), self.data(*b));
                self.acc(grads, *a, |g| {
                    g.iter_mut().zip(dy.iter().zip(vb)).for_each(|(g, (d, y))| *g += d * y)
                });
                self.acc(grads, *b, |g| {
                    g.iter_mut().zip(dy.iter().zip(va)).for_each(|(g, (d, x))| *g += d * x)
                });
            }
            Op::Scale(a, s) => self.acc(grads, *a, |g| axpy(g, dy, *s)),
            Op::AddRow(x, row) | Op::SubRow(x, row) => {
                let sign = if matches!(node.op, Op::SubRow(..)) { -1.0 } else { 1.0 };
                self.acc(grads, *x, |g| axpy(g, dy, 1.0));
                self.acc(grads, *row, |g| {
                    for drow in dy.chunks(c.max(1)) {
                        axpy(g, drow, sign);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let ((m, k), (_, n)) = (self.shape(*a), self.shape(*b));
                let (va, vb) = (self.data(*a), self.data(*b));
                self.acc(grads, *a, |g| kernels::add_matmul_bt(g, dy, vb, m, n, k));
                self.acc(grads, *b, |g| kernels::add_matmul_at(g, va, dy, m, k, n));
            }
            Op::MatMulBt(a, b) => {
                let ((m, k), (n, _)) = (self.shape(*a), self.shape(*b));
                let (va, vb) = (self.data(*a), self.data(*b));
                self.acc(grads, *a, |g| kernels::add_matmul(g, dy, vb, m, n, k));
                self.acc(grads, *b, |g| kernels::add_matmul_at(g, dy, va, m, n, k));
            }
            Op::Transpose(a) => {
                let t = kernels::transpose(dy, r, c);
                self.acc(grads, *a, |g| axpy(g, &t, 1.0));
            }
            Op::Embedding { table, ids } => {
                let d = c;
                self.acc(grads, *table, |g| {
                    for (row, &id) in ids.iter().enumerate() {
                        axpy(&mut g[id * d..(id + 1) * d], &dy[row * d..(row + 1) * d], 1.0);
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                self.acc(grads, *a, |g| {
                    for i in 0..r {
                        let (yr, dr) = (&y[i * c..(i + 1) * c], &dy[i * c..(i + 1) * c]);
                        let s: f32 = yr.iter().zip(dr).map(|(y, d)| y * d).sum();
                        for j in 0..c {
                            g[i * c + j] += yr[j] * (dr[j] - s);
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                self.acc(grads, *a, |g| {
                    for ((g, d), y) in g.iter_mut().zip(dy).zip(y) {
                        *g += d * y * (1.0 - y);
                    }
                });
            }
            Op::Gelu(a) => {
                let x = self.data(*a);
                self.acc(grads, *a, |g| {
                    for ((g, d), x) in g.iter_mut().zip(dy).zip(x) {
                        *g += d * gelu_grad(*x);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = self.data(*gamma);
                self.acc(grads, *gamma, |g| {
                    for i in 0..r {
                        for j in 0..c {
                            g[j] += dy[i * c + j] * xhat[i * c + j];
                        }
                    }
                });
                self.acc(grads, *beta, |g| {
                    for drow in dy.chunks(c) {
                        axpy(g, drow, 1.0);
                    }
                });
                self.acc(grads, *x, |g| {
                    let n = c as f32;
                    let mut dxhat = vec![0.0; c];
                    for i in 0..r {
                        let xh = &xhat[i * c..(i + 1) * c];
                        for j in 0..c {
                            dxhat[j] = dy[i * c + j] * gv[j];
                        }
                        let sum_d: f32 = dxhat.iter().sum();
                        let sum_dx: f32 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            g[i * c + j] +=
                                inv_std[i] / n * (n * dxhat[j] - sum_d - xh[j] * sum_dx);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                self.acc(grads, *x, |g| {
                    for ((g, d), m) in g.iter_mut().zip(dy).zip(mask) {
                        *g += d * m;
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let xc = self.shape(*x).1;
                self.acc(grads, *x, |g| {
                    for i in 0..r {
                        axpy(
                            &mut g[i * xc + start..i * xc + start + c],
                            &dy[i * c..(i + 1) * c],
                            1.0,
                        );
                    }
                });
            }
            Op::SliceRows { x, start } => {
                self.acc(grads, *x, |g| {
                    axpy(&mut g[start * c..(start + r) * c], dy, 1.0);
                });
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    self.acc(grads, p, |g| {
                        for i in 0..r {
                            axpy(
                                &mut g[i * pc..(i + 1) * pc],
                                &dy[i * c + off..i * c + off + pc],
                                1.0,
                            );
                        }
                    });
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.acc(grads, p, |g| axpy(g, &dy[off..off + len], 1.0));
                    off += len;
                }
            }
            Op::MeanRows { x, start, end } => {
                let inv = 1.0 / (end - start) as f32;
                self.acc(grads, *x, |g| {
                    for i in *start..*end {
                        axpy(&mut g[i * c..(i + 1) * c], dy, inv);
                    }
                });
            }
            Op::Sum(a) => {
                let d = dy[0];
                self.acc(grads, *a, |g| g.iter_mut().for_each(|g| *g += d));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (lr, lc) = self.shape(*logits);
                let scale = dy[0] / lr.max(1) as f32;
                self.acc(grads, *logits, |g| {
                    for i in 0..lr {
                        for j in 0..lc {
                            let onehot = if targets[i] == j { 1.0 } else { 0.0 };
                            g[i * lc + j] += scale * (probs[i * lc + j] - onehot);
                        }
                    }
                });
            }
            Op::Bce { probs, targets } => {
                let p = self.data(*probs);
                let scale = dy[0] / p.len().max(1) as f32;
                self.acc(grads, *probs, |g| {
                    for ((g, &p), &t) in g.iter_mut().zip(p).zip(targets) {
                        if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
                            *g += scale * (-(t / p) + (1.0 - t) / (1.0 - p));
                        }
                    }
                });
            }
            Op::RowNorms(x) => {
                let xs = self.data(*x);
                let norms = node.value.data();
                let xc = self.shape(*x).1;
                self.acc(grads, *x, |g| {
                    for i in 0..r {
                        let k = dy[i] / norms[i].max(1e-12);
                        for j in 0..xc {
                            g[i * xc + j] += k * xs[i * xc + j];
                        }
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<f32>>], v: Var, f: impl FnOnce(&mut [f32])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let g = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(g);
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    by_node: Vec<Option<Vec<f32>>>,
    param_nodes: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a node, if any flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&[f32]> {
        self.by_node.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f32])> {
        self.param_nodes
            .iter()
            .filter_map(|&(id, n)| self.by_node[n].as_deref().map(|g| (id, g)))
    }
}

fn axpy(y: &mut [f32], x: &[f32], a: f32) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)

fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f32) -> f32 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) mod kernels {
    /// `[m,k] x [k,n]`, accumulated in f64.
    pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(m * n);
        let mut acc = vec![0.0f64; n];
        for i in 0..m {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for p in 0..k {
                let av = a[i * k + p] as f64;
                if av == 0.0 {
                    continue;
                }
                for (o, bv) in acc.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *o += av * *bv as f64;
                }
            }
            out.extend(acc.iter().map(|v| *v as f32));
        }
        out
    }

    /// `out += a[m,k] x b[k,n]`.
    pub fn add_matmul(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (o, bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }

    /// `[m,k] x [n,k]^T`, accumulated in f64.
    pub fn matmul_bt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b[j * k..(j + 1) * k];
                let dot: f64 = arow.iter().zip(brow).map(|(x, y)| *x as f64 * *y as f64).sum();
                out.push(dot as f32);
            }
        }
        out
    }

    /// `out += a[m,k] x b[n,k]^T`.
    pub fn add_matmul_bt(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b[j * k..(j + 1) * k];
                out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f32>();
            }
        }
    }

    /// `out[k,n] += a[m,k]^T x b[m,n]`.
    pub fn add_matmul_at(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let brow = &b[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let orow = &mut out[p * n..(p + 1) * n];
                for (o, bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }

    pub fn transpose(a: &[f32], r: usize, c: usize) -> Vec<f32> {
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = a[i * c + j];
            }
        }
        out
    }

    pub fn log_sum_exp(row: &[f32]) -> f64 {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let s: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        max + s.ln()
    }

    pub fn softmax_in_place(row: &mut [f32]) {
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = (*v as f64 - lse).exp() as f32;
        }
    }
}
