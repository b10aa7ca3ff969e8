//! Recorded computation with reverse-mode gradients.
//!
//! Every primitive appends one node holding its forward value. Nodes are
//! created in topological order by construction, so [`Tape::backward`]
//! walks them in reverse index order.

use std::sync::Arc;

use super::param::{ParamId, ParamStore};
use super::tensor::{matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Fixed,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    ClampMin(Var, f64),
    Concat(Vec<Var>),
    Dropout(Var, Arc<Tensor>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    ReduceSum(Var),
    ReduceMean(Var),
    RowSum(Var),
    BlockDiag(Var),
    Mcp {
        x: Var,
        alpha: f64,
        lambda: f64,
    },
    Spmm {
        a: Var,
        coef: Var,
        rows: Arc<[usize]>,
        cols: Arc<[usize]>,
    },
    GatherSum(Vec<(Var, Arc<[usize]>)>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Fixed => "fixed",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::ClampMin(..) => "clamp_min",
            Op::Concat(_) => "concat",
            Op::Dropout(..) => "dropout",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddRows(..) => "scatter_add_rows",
            Op::ReduceSum(_) => "reduce_sum",
            Op::ReduceMean(_) => "reduce_mean",
            Op::RowSum(_) => "row_sum",
            Op::BlockDiag(_) => "block_diag",
            Op::Mcp { .. } => "mcp",
            Op::Spmm { .. } => "spmm",
            Op::GatherSum(_) => "gather_sum",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Fixed | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Log(a)
            | Op::Exp(a)
            | Op::ClampMin(a, _)
            | Op::Dropout(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::ReduceSum(a)
            | Op::ReduceMean(a)
            | Op::RowSum(a)
            | Op::BlockDiag(a)
            | Op::Mcp { x: a, .. } => vec![*a],
            Op::Concat(parts) => parts.clone(),
            Op::Spmm { a, coef, .. } => vec![*a, *coef],
            Op::GatherSum(parts) => parts.iter().map(|(v, _)| *v).collect(),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    first_non_finite: Option<(usize, &'static str)>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds every parameter gradient into the store's accumulators.
    pub fn accumulate(&self, store: &mut ParamStore) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn mcp_value(x: f64, alpha: f64, lambda: f64) -> f64 {
    let a = x.abs();
    if a <= alpha * lambda {
        lambda * a - x * x / (2.0 * alpha)
    } else {
        alpha * lambda * lambda / 2.0
    }
}

fn mcp_derivative(x: f64, alpha: f64, lambda: f64) -> f64 {
    let a = x.abs();
    if a <= alpha * lambda {
        // sign(0) = 0 picks the zero subgradient at the kink
        let s = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        s * lambda - x / alpha
    } else {
        0.0
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Error naming the first node whose value contained NaN or an infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite {
            Some((node, op)) => Err(Error::NonFinite { op, node }),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let idx = self.nodes.len();
        if self.first_non_finite.is_none() && !value.all_finite() {
            self.first_non_finite = Some((idx, op.name()));
        }
        let requires_grad = match op {
            Op::Fixed => false,
            Op::Constant | Op::Param(_) => true,
            _ => op.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(idx)
    }

    /// A leaf whose gradient is tracked (and reported by [`Gradients::wrt`]).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// A leaf that never receives a gradient.
    pub fn fixed(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Fixed)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Sparse product: `out[rows[i]] += coef[i] · a[cols[i]]` into an
    /// `n_rows×d` zero matrix. `coef` is an `nnz×1` column.
    pub fn spmm(&mut self, a: Var, coef: Var, rows: Arc<[usize]>, cols: Arc<[usize]>, n_rows: usize) -> Result<Var> {
        self.require_matrix("spmm", a)?;
        let t = self.value(a);
        let c = self.value(coef);
        if rows.len() != cols.len() || c.shape() != [rows.len(), 1] {
            return Err(Error::shape("spmm", c.shape(), &[rows.len(), 1]));
        }
        if cols.iter().any(|&j| j >= t.rows()) || rows.iter().any(|&i| i >= n_rows) {
            return Err(Error::shape("spmm", t.shape(), &[n_rows]));
        }
        let d = t.cols();
        let mut out = Tensor::zeros(&[n_rows, d]);
        {
            let od = out.data_mut();
            for ((&i, &j), &w) in rows.iter().zip(cols.iter()).zip(c.data()) {
                for (o, &v) in od[i * d..(i + 1) * d].iter_mut().zip(t.row(j)) {
                    *o += w * v;
                }
            }
        }
        Ok(self.push(out, Op::Spmm { a, coef, rows, cols }))
    }

    /// `out[i] = Σ_p parts[p].0[parts[p].1[i]]`; all parts share a width and index length.
    pub fn gather_sum(&mut self, parts: Vec<(Var, Arc<[usize]>)>) -> Result<Var> {
        let Some((first, idx0)) = parts.first() else {
            return Err(Error::InvalidArgument("gather_sum needs at least one part".into()));
        };
        self.require_matrix("gather_sum", *first)?;
        let (n, d) = (idx0.len(), self.value(*first).cols());
        for (v, idx) in &parts {
            self.require_matrix("gather_sum", *v)?;
            let t = self.value(*v);
            if t.cols() != d || idx.len() != n {
                return Err(Error::shape("gather_sum", t.shape(), &[idx.len(), d]));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
                return Err(Error::shape("gather_sum", t.shape(), &[bad]));
            }
        }
        let mut out = Tensor::zeros(&[n, d]);
        {
            let od = out.data_mut();
            for (v, idx) in &parts {
                let t = self.value(*v);
                for (orow, &src) in od.chunks_mut(d.max(1)).zip(idx.iter()) {
                    for (o, &x) in orow.iter_mut().zip(t.row(src)) {
                        *o += x;
                    }
                }
            }
        }
        Ok(self.push(out, Op::GatherSum(parts)))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id))
    }

    fn require_matrix(&self, op: &'static str, v: Var) -> Result<()> {
        let t = self.value(v);
        if t.is_matrix() {
            Ok(())
        } else {
            Err(Error::shape(op, t.shape(), &[]))
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(())
        } else {
            Err(Error::shape(op, sa, sb))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.require_matrix("matmul", a)?;
        self.require_matrix("matmul", b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let out = matmul_raw(ta, false, tb, false);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Adds a `1×n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.require_matrix("add_row", a)?;
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.shape() != [1, ta.shape()[1]] {
            return Err(Error::shape("add_row", ta.shape(), tb.shape()));
        }
        let n = ta.shape()[1];
        let b = tb.data();
        let mut out = ta.clone();
        for row in out.data_mut().chunks_mut(n.max(1)) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(relu);
        self.push(out, Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    /// `max(x, floor)`; gradient is zero wherever `x <= floor`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|x| x.max(floor));
        self.push(out, Op::ClampMin(a, floor))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rows = self.value(first).rows();
        for &p in parts {
            self.require_matrix("concat", p)?;
            if self.value(p).rows() != rows {
                return Err(Error::shape("concat", self.shape(first), self.shape(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Multiplies by a pre-sampled mask (entries `0` or `1/(1-p)`).
    pub fn dropout(&mut self, a: Var, mask: Arc<Tensor>) -> Result<Var> {
        if self.shape(a) != mask.shape() {
            return Err(Error::shape("dropout", self.shape(a), mask.shape()));
        }
        let out = self.value(a).zip_map(&mask, |x, m| x * m);
        Ok(self.push(out, Op::Dropout(a, mask)))
    }

    /// Row `i` of the result is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        self.require_matrix("gather_rows", a)?;
        let t = self.value(a);
        let (rows, cols) = (t.rows(), t.cols());
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("gather_rows", t.shape(), &[bad]));
        }
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(vec![index.len(), cols], data)?;
        Ok(self.push(out, Op::GatherRows(a, index)))
    }

    /// `out[index[i]] += a[i]` into a zero matrix with `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<[usize]>, rows: usize) -> Result<Var> {
        self.require_matrix("scatter_add_rows", a)?;
        let t = self.value(a);
        if index.len() != t.rows() {
            return Err(Error::shape("scatter_add_rows", t.shape(), &[index.len()]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("scatter_add_rows", &[rows], &[bad]));
        }
        let cols = t.cols();
        let mut out = Tensor::zeros(&[rows, cols]);
        {
            let od = out.data_mut();
            for (i, &dst) in index.iter().enumerate() {
                for (o, &v) in od[dst * cols..(dst + 1) * cols].iter_mut().zip(t.row(i)) {
                    *o += v;
                }
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, index)))
    }

    pub fn reduce_sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::ReduceSum(a))
    }

    /// Mean of all entries; the mean of an empty tensor is 0.
    pub fn reduce_mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = if t.is_empty() {
            0.0
        } else {
            t.data().iter().sum::<f64>() / t.len() as f64
        };
        self.push(Tensor::scalar(m), Op::ReduceMean(a))
    }

    /// `m×n` to `m×1` by summing each row.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.require_matrix("row_sum", a)?;
        let t = self.value(a);
        let sums = (0..t.rows()).map(|i| t.row(i).iter().sum()).collect();
        Ok(self.push(Tensor::column(sums), Op::RowSum(a)))
    }

    /// Expands `[blocks, s, s]` into a dense block-diagonal `(blocks·s)²` matrix.
    pub fn block_diag(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let sh = t.shape();
        if sh.len() != 3 || sh[1] != sh[2] {
            return Err(Error::shape("block_diag", sh, &[]));
        }
        let (nb, s) = (sh[0], sh[1]);
        let d = nb * s;
        let mut out = Tensor::zeros(&[d, d]);
        {
            let od = out.data_mut();
            let src = t.data();
            for b in 0..nb {
                for i in 0..s {
                    let dst = (b * s + i) * d + b * s;
                    od[dst..dst + s].copy_from_slice(&src[(b * s + i) * s..(b * s + i + 1) * s]);
                }
            }
        }
        Ok(self.push(out, Op::BlockDiag(a)))
    }

    /// Elementwise minimax concave penalty.
    pub fn mcp(&mut self, a: Var, alpha: f64, lambda: f64) -> Var {
        let out = self.value(a).map(|x| mcp_value(x, alpha, lambda));
        self.push(out, Op::Mcp { x: a, alpha, lambda })
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut params = Vec::new();

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant | Op::Fixed => {}
                Op::Param(id) => params.push((*id, idx)),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        acc(&mut grads, *a, matmul_raw(&g, false, tb, true));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, matmul_raw(ta, true, &g, false));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g.clone());
                }
                Op::AddRow(a, bias) => {
                    let n = g.cols();
                    let mut gb = vec![0.0; n];
                    for row in g.data().chunks(n.max(1)) {
                        for (s, &v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    acc(&mut grads, *bias, Tensor::new(vec![1, n], gb)?);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| c * x)),
                Op::AddScalar(a) => acc(&mut grads, *a, g.clone()),
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y * (1.0 - y));
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| x / v);
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y);
                    acc(&mut grads, *a, ga);
                }
                Op::ClampMin(a, floor) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v > *floor { x } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut data = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            data.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        acc(&mut grads, p, Tensor::new(vec![rows, w], data)?);
                        offset += w;
                    }
                }
                Op::Dropout(a, mask) => acc(&mut grads, *a, g.zip_map(mask, |x, m| x * m)),
                Op::GatherRows(a, index) => {
                    let src = self.value(*a);
                    let cols = src.cols();
                    let mut ga = Tensor::zeros(src.shape());
                    {
                        let gd = ga.data_mut();
                        for (i, &row) in index.iter().enumerate() {
                            for (o, &v) in gd[row * cols..(row + 1) * cols].iter_mut().zip(g.row(i)) {
                                *o += v;
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAddRows(a, index) => {
                    let src = self.value(*a);
                    let cols = src.cols();
                    let mut data = Vec::with_capacity(src.len());
                    for &dst in index.iter() {
                        data.extend_from_slice(&g.data()[dst * cols..(dst + 1) * cols]);
                    }
                    acc(&mut grads, *a, Tensor::new(src.shape().to_vec(), data)?);
                }
                Op::ReduceSum(a) => {
                    let gv = g.item();
                    acc(&mut grads, *a, Tensor::full(self.shape(*a), gv));
                }
                Op::ReduceMean(a) => {
                    let n = self.value(*a).len().max(1) as f64;
                    let gv = g.item() / n;
                    acc(&mut grads, *a, Tensor::full(self.shape(*a), gv));
                }
                Op::RowSum(a) => {
                    let src = self.value(*a);
                    let cols = src.cols();
                    let data = g.data().iter().flat_map(|&v| std::iter::repeat_n(v, cols)).collect();
                    acc(&mut grads, *a, Tensor::new(src.shape().to_vec(), data)?);
                }
                Op::BlockDiag(a) => {
                    let sh = self.shape(*a);
                    let (nb, s) = (sh[0], sh[1]);
                    let d = nb * s;
                    let mut data = vec![0.0; nb * s * s];
                    for b in 0..nb {
                        for i in 0..s {
                            let src = (b * s + i) * d + b * s;
                            data[(b * s + i) * s..(b * s + i + 1) * s].copy_from_slice(&g.data()[src..src + s]);
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(sh.to_vec(), data)?);
                }
                Op::Mcp { x, alpha, lambda } => {
                    let ga = g.zip_map(self.value(*x), |gv, v| gv * mcp_derivative(v, *alpha, *lambda));
                    acc(&mut grads, *x, ga);
                }
                Op::Spmm { a, coef, rows, cols } => {
                    let (ta, tc) = (self.value(*a), self.value(*coef));
                    let d = ta.cols();
                    if self.needs(*a) {
                        let mut ga = Tensor::zeros(ta.shape());
                        let gd = ga.data_mut();
                        for ((&i, &j), &w) in rows.iter().zip(cols.iter()).zip(tc.data()) {
                            for (o, &v) in gd[j * d..(j + 1) * d].iter_mut().zip(g.row(i)) {
                                *o += w * v;
                            }
                        }
                        acc(&mut grads, *a, ga);
                    }
                    if self.needs(*coef) {
                        let gc = rows
                            .iter()
                            .zip(cols.iter())
                            .map(|(&i, &j)| g.row(i).iter().zip(ta.row(j)).map(|(x, y)| x * y).sum())
                            .collect();
                        acc(&mut grads, *coef, Tensor::column(gc));
                    }
                }
                Op::GatherSum(parts) => {
                    for (v, index) in parts {
                        if !self.needs(*v) {
                            continue;
                        }
                        let src = self.value(*v);
                        let cols = src.cols();
                        let mut gv = Tensor::zeros(src.shape());
                        let gd = gv.data_mut();
                        for (i, &row) in index.iter().enumerate() {
                            for (o, &x) in gd[row * cols..(row + 1) * cols].iter_mut().zip(g.row(i)) {
                                *o += x;
                            }
                        }
                        acc(&mut grads, *v, gv);
                    }
                }
            }
            grads[idx] = Some(g);
        }
        params.reverse();
        Ok(Gradients { grads, params })
    }
}
