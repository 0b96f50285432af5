//! Tape of executed tensor operations.
//!
//! Each call appends a node whose parents were created earlier, so the tape order
//! is already a topological order. [`Graph::backward`] walks it once in reverse.

use super::kernels;
use super::tensor::all_finite;
use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    SoftmaxRows(Var),
    Gelu(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SelectCol(Var, usize),
    MulCol(Var, Var),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    SumAll(Var),
    CrossEntropy(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Reverse-mode tape over 2-D tensors.
#[derive(Debug)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims2<F: Scalar>(t: &Tensor<F>, op: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        [n] => Ok((1, *n)),
        s => Err(Error::Shape(format!("{op} expects a 2-D tensor, got {s:?}"))),
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; gradients are collected for it iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<F>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, tensor: Tensor<F>) -> Var {
        self.push(tensor.with_requires_grad(false), Op::Leaf, false)
    }

    pub fn param(&mut self, tensor: Tensor<F>) -> Var {
        self.push(tensor.with_requires_grad(true), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn emit(&mut self, name: &str, shape: Vec<usize>, data: Vec<F>, op: Op<F>, parents: &[Var]) -> Result<Var> {
        if !all_finite(&data) {
            return Err(Error::NonFinite { op: name.into() });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(Tensor::from_parts_unchecked(shape, data), op, requires_grad))
    }

    fn dims(&self, v: Var, op: &str) -> Result<(usize, usize)> {
        dims2(self.value(v), op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.dims(a, "matmul")?;
        let (q2, r) = self.dims(b, "matmul")?;
        if q != q2 {
            return Err(Error::Shape(format!(
                "matmul of {:?} by {:?}: inner dimensions differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![F::ZERO; p * r];
        kernels::matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, p, q, r);
        self.emit("matmul", vec![p, r], out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "transpose")?;
        let x = self.value(a).data();
        let mut out = vec![F::ZERO; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        self.emit("transpose", vec![c, r], out, Op::Transpose(a), &[a])
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "{op} of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.emit("add", shape, out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1×c` row to every row of an `r×c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "add_row")?;
        let (one, c2) = self.dims(row, "add_row")?;
        if one != 1 || c != c2 {
            return Err(Error::Shape(format!(
                "add_row of {:?} and {:?}",
                self.value(a).shape(),
                self.value(row).shape()
            )));
        }
        let x = self.value(a).data();
        let b = self.value(row).data();
        let out = (0..r * c).map(|i| x[i] + b[i % c]).collect();
        self.emit("add_row", vec![r, c], out, Op::AddRow(a, row), &[a, row])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.emit("mul", shape, out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: F) -> Result<Var> {
        let out = self.value(a).data().iter().map(|&x| x * k).collect();
        let shape = self.value(a).shape().to_vec();
        self.emit("scale", shape, out, Op::Scale(a, k), &[a])
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "softmax_rows")?;
        let x = self.value(a).data();
        let mut out = vec![F::ZERO; r * c];
        for i in 0..r {
            kernels::softmax_row(&x[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        self.emit("softmax_rows", vec![r, c], out, Op::SoftmaxRows(a), &[a])
    }

    /// Gaussian error linear unit, `x·Φ(x)` with the exact erf.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).data().iter().map(|&x| kernels::gelu(x)).collect();
        let shape = self.value(a).shape().to_vec();
        self.emit("gelu", shape, out, Op::Gelu(a), &[a])
    }

    /// `[a | b]` along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims(a, "concat_cols")?;
        let (rb, cb) = self.dims(b, "concat_cols")?;
        if ra != rb {
            return Err(Error::Shape(format!(
                "concat_cols of {:?} and {:?}: row counts differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&x[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&y[i * cb..(i + 1) * cb]);
        }
        self.emit("concat_cols", vec![ra, ca + cb], out, Op::ConcatCols(a, b), &[a, b])
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Shape("concat_rows of zero tensors".into()))?;
        let (_, c) = self.dims(first, "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, cp) = self.dims(p, "concat_rows")?;
            if cp != c {
                return Err(Error::Shape(format!(
                    "concat_rows: column count {cp} differs from {c}"
                )));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        self.emit("concat_rows", vec![rows, c], out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Column `j` as an `r×1` matrix.
    pub fn select_col(&mut self, a: Var, j: usize) -> Result<Var> {
        let (r, c) = self.dims(a, "select_col")?;
        if j >= c {
            return Err(Error::Index(format!("column {j} of a {r}×{c} matrix")));
        }
        let x = self.value(a).data();
        let out = (0..r).map(|i| x[i * c + j]).collect();
        self.emit("select_col", vec![r, 1], out, Op::SelectCol(a, j), &[a])
    }

    /// Scales row `t` of `a` by `col[t]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "mul_col")?;
        let (rc, one) = self.dims(col, "mul_col")?;
        if rc != r || one != 1 {
            return Err(Error::Shape(format!(
                "mul_col of {:?} by {:?}",
                self.value(a).shape(),
                self.value(col).shape()
            )));
        }
        let (x, s) = (self.value(a).data(), self.value(col).data());
        let out = (0..r * c).map(|i| x[i] * s[i / c]).collect();
        self.emit("mul_col", vec![r, c], out, Op::MulCol(a, col), &[a, col])
    }

    /// Embedding lookup: rows of `table` at `ids`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(table, "gather_rows")?;
        if ids.is_empty() {
            return Err(Error::Shape("gather_rows with no ids".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= r) {
            return Err(Error::Index(format!("row id {bad} out of range for {r} rows")));
        }
        let x = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            out.extend_from_slice(&x[i * c..(i + 1) * c]);
        }
        self.emit(
            "gather_rows",
            vec![ids.len(), c],
            out,
            Op::GatherRows(table, ids.to_vec()),
            &[table],
        )
    }

    /// Column means, `r×c → 1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a, "mean_rows")?;
        let x = self.value(a).data();
        let mut out = vec![F::ZERO; c];
        for i in 0..r {
            for (o, &v) in out.iter_mut().zip(&x[i * c..(i + 1) * c]) {
                *o += v;
            }
        }
        let inv = F::ONE / F::from_usize(r);
        for o in out.iter_mut() {
            *o *= inv;
        }
        self.emit("mean_rows", vec![1, c], out, Op::MeanRows(a), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let mut s = F::ZERO;
        for &v in self.value(a).data() {
            s += v;
        }
        self.emit("sum_all", vec![1], vec![s], Op::SumAll(a), &[a])
    }

    /// Mean negative log-likelihood of the true class over a `b×c` batch of logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, c) = self.dims(logits, "cross_entropy")?;
        if labels.len() != b {
            return Err(Error::Shape(format!(
                "cross_entropy: {b} logit rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Index(format!("label {bad} out of range for {c} classes")));
        }
        let x = self.value(logits).data();
        let mut total = F::ZERO;
        for (i, &label) in labels.iter().enumerate() {
            let row = &x[i * c..(i + 1) * c];
            let mut max = row[0];
            for &v in &row[1..] {
                max = max.max(v);
            }
            let mut sum = F::ZERO;
            for &v in row {
                sum += (v - max).exp();
            }
            total += sum.ln() + max - row[label];
        }
        let loss = total / F::from_usize(b);
        self.emit(
            "cross_entropy",
            vec![1],
            vec![loss],
            Op::CrossEntropy(logits, labels.to_vec()),
            &[logits],
        )
    }

    /// Accumulates d`root`/d`node` for every node that requires a gradient.
    /// `root` must hold a single value. Previous gradients are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar of shape {:?}",
                self.value(root).shape()
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(vec![F::ONE]);
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream);
            self.grads[idx] = Some(upstream);
        }
        for (i, g) in self.grads.iter().enumerate() {
            if let Some(g) = g {
                if !all_finite(g) {
                    return Err(Error::NonFinite {
                        op: format!("backward (node {i})"),
                    });
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: Vec<F>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a += b;
                }
            }
            slot => *slot = Some(contribution),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, idx: usize, g: &[F]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (p, q) = dims2(self.value(a), "").unwrap();
                let r = self.value(b).cols();
                if self.wants(a) {
                    let mut da = vec![F::ZERO; p * q];
                    kernels::matmul_nt_acc(g, self.value(b).data(), &mut da, p, r, q);
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    let mut db = vec![F::ZERO; q * r];
                    kernels::matmul_tn_acc(self.value(a).data(), g, &mut db, q, p, r);
                    self.accumulate(b, db);
                }
            }
            Op::Transpose(a) => {
                let a = *a;
                let (r, c) = dims2(self.value(a), "").unwrap();
                let mut da = vec![F::ZERO; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                self.accumulate(a, da);
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g.to_vec());
                self.accumulate(b, g.to_vec());
            }
            Op::AddRow(a, row) => {
                let (a, row) = (*a, *row);
                let c = self.value(row).len();
                if self.wants(row) {
                    let mut db = vec![F::ZERO; c];
                    for (i, &v) in g.iter().enumerate() {
                        db[i % c] += v;
                    }
                    self.accumulate(row, db);
                }
                self.accumulate(a, g.to_vec());
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.wants(a) {
                    let da = g.iter().zip(self.value(b).data()).map(|(&u, &y)| u * y).collect();
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    let db = g.iter().zip(self.value(a).data()).map(|(&u, &x)| u * x).collect();
                    self.accumulate(b, db);
                }
            }
            Op::Scale(a, k) => {
                let (a, k) = (*a, *k);
                self.accumulate(a, g.iter().map(|&u| u * k).collect());
            }
            Op::SoftmaxRows(a) => {
                let a = *a;
                let c = node.value.cols();
                let mut da = vec![F::ZERO; out.len()];
                for (i, (y, u)) in out.chunks(c).zip(g.chunks(c)).enumerate() {
                    let mut dot = F::ZERO;
                    for (&yj, &uj) in y.iter().zip(u) {
                        dot += yj * uj;
                    }
                    for j in 0..c {
                        da[i * c + j] = y[j] * (u[j] - dot);
                    }
                }
                self.accumulate(a, da);
            }
            Op::Gelu(a) => {
                let a = *a;
                let da = self
                    .value(a)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &u)| u * kernels::gelu_grad(x))
                    .collect();
                self.accumulate(a, da);
            }
            Op::ConcatCols(a, b) => {
                let (a, b) = (*a, *b);
                let ca = self.value(a).cols();
                let cb = self.value(b).cols();
                let rows = self.value(a).rows();
                let (mut da, mut db) = (Vec::with_capacity(rows * ca), Vec::with_capacity(rows * cb));
                for row in g.chunks(ca + cb) {
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let len = self.value(p).len();
                    self.accumulate(p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::SelectCol(a, j) => {
                let (a, j) = (*a, *j);
                let c = self.value(a).cols();
                let mut da = vec![F::ZERO; self.value(a).len()];
                for (i, &u) in g.iter().enumerate() {
                    da[i * c + j] = u;
                }
                self.accumulate(a, da);
            }
            Op::MulCol(a, col) => {
                let (a, col) = (*a, *col);
                let c = self.value(a).cols();
                if self.wants(a) {
                    let s = self.value(col).data();
                    let da = g.iter().enumerate().map(|(i, &u)| u * s[i / c]).collect();
                    self.accumulate(a, da);
                }
                if self.wants(col) {
                    let x = self.value(a).data();
                    let ds = g
                        .chunks(c)
                        .zip(x.chunks(c))
                        .map(|(u, xr)| {
                            let mut s = F::ZERO;
                            for (&ui, &xi) in u.iter().zip(xr) {
                                s += ui * xi;
                            }
                            s
                        })
                        .collect();
                    self.accumulate(col, ds);
                }
            }
            Op::GatherRows(table, ids) => {
                let table = *table;
                let c = self.value(table).cols();
                let mut dt = vec![F::ZERO; self.value(table).len()];
                for (k, &id) in ids.iter().enumerate() {
                    for j in 0..c {
                        dt[id * c + j] += g[k * c + j];
                    }
                }
                self.accumulate(table, dt);
            }
            Op::MeanRows(a) => {
                let a = *a;
                let r = self.value(a).rows();
                let inv = F::ONE / F::from_usize(r);
                let mut da = Vec::with_capacity(self.value(a).len());
                for _ in 0..r {
                    da.extend(g.iter().map(|&u| u * inv));
                }
                self.accumulate(a, da);
            }
            Op::SumAll(a) => {
                let a = *a;
                let n = self.value(a).len();
                self.accumulate(a, vec![g[0]; n]);
            }
            Op::CrossEntropy(logits, labels) => {
                let logits = *logits;
                let labels = labels.clone();
                let x = self.value(logits).data();
                let c = self.value(logits).cols();
                let b = labels.len();
                let scale = g[0] / F::from_usize(b);
                let mut dl = vec![F::ZERO; x.len()];
                for (i, &label) in labels.iter().enumerate() {
                    kernels::softmax_row(&x[i * c..(i + 1) * c], &mut dl[i * c..(i + 1) * c]);
                    dl[i * c + label] -= F::ONE;
                    for v in &mut dl[i * c..(i + 1) * c] {
                        *v *= scale;
                    }
                }
                self.accumulate(logits, dl);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_projector() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(2).unwrap());
        let x = g.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let y = g.matmul(i, x).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

        let p = g.constant(t(&[vec![1.0, 0.0], vec![0.0, 0.0]]));
        let m = g.constant(t(&[vec![5.0, 6.0], vec![7.0, 8.0]]));
        let y = g.matmul(p, m).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]).unwrap());
        let b = g.constant(Tensor::zeros(vec![2, 3]).unwrap());
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("by [2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_closed_forms() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![0.0, 0.0], vec![0.0, 3f64.ln()], vec![1000.0, 1000.5]]));
        let y = g.softmax_rows(x).unwrap();
        let v = g.value(y).data();
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
        assert!((v[2] - 0.25).abs() < 1e-12 && (v[3] - 0.75).abs() < 1e-12);
        assert!(v[4].is_finite() && ((v[4] + v[5]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gelu_reference_points() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 2], vec![0.0f64, 10.0]).unwrap());
        let y = g.gelu(x).unwrap();
        assert_eq!(g.value(y).data()[0], 0.0);
        assert!(((g.value(y).data()[1] - 10.0) / 10.0).abs() < 1e-3);
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![0.0, 0.0]]));
        let l = g.cross_entropy(x, &[0]).unwrap();
        assert!((g.value(l).data()[0] - 2f64.ln()).abs() < 1e-12);
        let x = g.constant(t(&[vec![10.0, -10.0]]));
        let l = g.cross_entropy(x, &[0]).unwrap();
        assert!(g.value(l).data()[0] < 1e-4);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(vec![1, 2]).unwrap());
        assert!(matches!(g.cross_entropy(x, &[2]), Err(Error::Index(_))));
    }

    #[test]
    fn backward_of_shared_subexpression_accumulates() {
        // f = sum(x ⊙ x) → df/dx = 2x
        let mut g = Graph::new();
        let x = g.param(t(&[vec![1.0, -2.0, 3.0]]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum_all(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(t(&[vec![1.0, 2.0]]));
        let p = g.param(t(&[vec![3.0, 4.0]]));
        let y = g.mul(c, p).unwrap();
        let s = g.sum_all(y).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(p).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let p = g.param(t(&[vec![3.0, 4.0]]));
        assert!(g.backward(p).is_err());
    }
}
