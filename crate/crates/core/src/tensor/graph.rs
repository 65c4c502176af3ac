use std::collections::BTreeMap;

use super::gemm::gemm;
use super::{log_sum_exp, sigmoid, softmax_in_place, Param, Tensor, NORM_EPS};
use crate::error::{CaeError, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Affine(Var, f64),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    L2NormalizeRows {
        x: Var,
        norms: Vec<f64>,
    },
    L1Distance(Var, Var),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        denom: f64,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradient tape. Nodes are appended in evaluation order, so the node list is
/// always topologically sorted and `backward` can sweep it once in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: BTreeMap<String, Var>,
    grads: Vec<Option<Vec<f64>>>,
}

/// Trailing-dimension broadcast: `rhs` must equal `lhs` or a suffix of its shape.
fn broadcastable(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable leaf that is not tied to any [`Param`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a parameter as a differentiable leaf. Binding the same name twice
    /// returns the same node, so shared uses accumulate into one gradient.
    pub fn param(&mut self, p: &Param) -> Var {
        if let Some(&v) = self.bound.get(p.name()) {
            return v;
        }
        let v = self.push(p.value().clone(), Op::Leaf, true);
        self.bound.insert(p.name().to_string(), v);
        v
    }

    /// Names of every parameter bound into this graph, in sorted order.
    pub fn bound_params(&self) -> impl Iterator<Item = &str> {
        self.bound.keys().map(String::as_str)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Copies the value into a fresh constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(CaeError::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !broadcastable(ta.shape(), tb.shape()) {
            return Err(CaeError::dim(name, ta.shape(), tb.shape()));
        }
        let bl = tb.len().max(1);
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[i % bl]))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// `a + b`, with `b` broadcast over the leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        let rg = self.needs(&[x]);
        self.push(value, op, rg)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| v <= 0.0) {
            return Err(CaeError::Domain {
                op: "log",
                detail: format!("non-positive argument {bad}"),
            });
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine(x, scale))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    /// Clamps into `[lo, hi]`; gradient is passed only where the input was inside.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || start + len > t.cols() {
            return Err(CaeError::dim("slice_cols", t.shape(), &[start, len]));
        }
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new(vec![rows, len], data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start }, rg))
    }

    /// Stacks 2-D tensors with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(CaeError::Contract("concat_rows of nothing".into()));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.cols() != cols {
                return Err(CaeError::dim("concat_rows", self.shape(first), t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / cols.max(1);
        let value = Tensor::new(vec![rows, cols], data)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Row lookup into a `[V x e]` table, producing `[ids.len() x e]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(CaeError::dim("gather", t.shape(), &[ids.len()]));
        }
        let (vocab, width) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            if id >= vocab {
                return Err(CaeError::Index {
                    index: id,
                    bound: vocab,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(vec![ids.len(), width], data)?;
        let rg = self.needs(&[table]);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Divides every row (last dimension) by its Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let cols = t.cols();
        let mut data = t.data().to_vec();
        let mut norms = Vec::with_capacity(t.rows());
        for row in data.chunks_mut(cols.max(1)) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n > NORM_EPS) {
                return Err(CaeError::DegenerateInput { op: "l2_normalize" });
            }
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::L2NormalizeRows { x, norms }, rg))
    }

    /// `sum |a - b|` over all entries. The subgradient at `a == b` is zero.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(CaeError::dim("l1_distance", ta.shape(), tb.shape()));
        }
        let d = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y).abs()).sum();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::scalar(d), Op::L1Distance(a, b), rg))
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let n = targets.len();
        self.softmax_cross_entropy_weighted(logits, targets, &vec![1.0; n], n as f64)
    }

    /// `sum_i w_i * nll_i / denom`; rows with zero weight contribute nothing,
    /// which is how padding is masked.
    pub fn softmax_cross_entropy_weighted(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: &[f64],
        denom: f64,
    ) -> Result<Var> {
        let t = self.value(logits);
        let (rows, vocab) = (t.rows(), t.cols());
        if t.shape().len() != 2 || rows != targets.len() || rows != weights.len() {
            return Err(CaeError::dim("softmax_cross_entropy", t.shape(), &[targets.len()]));
        }
        if !(denom > 0.0) {
            return Err(CaeError::Contract("cross-entropy denominator must be positive".into()));
        }
        let mut probs = t.data().to_vec();
        let mut total = 0.0;
        for (r, (&target, &w)) in targets.iter().zip(weights).enumerate() {
            if target >= vocab {
                return Err(CaeError::Index {
                    index: target,
                    bound: vocab,
                });
            }
            let row = &mut probs[r * vocab..(r + 1) * vocab];
            if w != 0.0 {
                total += w * (log_sum_exp(row) - row[target]);
            }
            softmax_in_place(row);
        }
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / denom),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                denom,
                probs,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Previous gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(CaeError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let nodes = &self.nodes;
        // Accumulates into the gradient buffer of `v` if it participates.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if nodes[v.0].requires_grad {
                let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
                f(buf);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, &mut |da| gemm(m, n, k, g, false, tb.data(), true, 1.0, da));
                acc(*b, &mut |db| gemm(k, m, n, ta.data(), true, g, false, 1.0, db));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi));
                acc(*b, &mut |db| {
                    let bl = db.len();
                    for (j, gi) in g.iter().enumerate() {
                        db[j % bl] += sign * gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let bl = tb.len();
                acc(*a, &mut |da| {
                    for (j, d) in da.iter_mut().enumerate() {
                        *d += g[j] * tb[j % bl];
                    }
                });
                acc(*b, &mut |db| {
                    for (j, gi) in g.iter().enumerate() {
                        db[j % bl] += gi * ta[j];
                    }
                });
            }
            Op::Neg(x) => acc(*x, &mut |dx| dx.iter_mut().zip(g).for_each(|(d, gi)| *d -= gi)),
            Op::Tanh(x) => acc(*x, &mut |dx| {
                for ((d, gi), y) in dx.iter_mut().zip(g).zip(out) {
                    *d += gi * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => acc(*x, &mut |dx| {
                for ((d, gi), y) in dx.iter_mut().zip(g).zip(out) {
                    *d += gi * y * (1.0 - y);
                }
            }),
            Op::Log(x) => {
                let input = nodes[x.0].value.data();
                acc(*x, &mut |dx| {
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(input) {
                        *d += gi / xi;
                    }
                })
            }
            Op::Exp(x) => acc(*x, &mut |dx| {
                for ((d, gi), y) in dx.iter_mut().zip(g).zip(out) {
                    *d += gi * y;
                }
            }),
            Op::Affine(x, scale) => acc(*x, &mut |dx| dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi * scale)),
            Op::Clamp(x, lo, hi) => {
                let input = nodes[x.0].value.data();
                acc(*x, &mut |dx| {
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(input) {
                        if *xi >= *lo && *xi <= *hi {
                            *d += gi;
                        }
                    }
                })
            }
            Op::Sum(x) => acc(*x, &mut |dx| dx.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => acc(*x, &mut |dx| {
                let n = dx.len() as f64;
                dx.iter_mut().for_each(|d| *d += g[0] / n)
            }),
            Op::SliceCols { x, start } => {
                let cols = nodes[x.0].value.cols();
                let width = node.value.cols();
                acc(*x, &mut |dx| {
                    for (r, grow) in g.chunks(width).enumerate() {
                        let base = r * cols + start;
                        dx[base..base + width].iter_mut().zip(grow).for_each(|(d, gi)| *d += gi);
                    }
                })
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = nodes[p.0].value.len();
                    let slice = &g[offset..offset + n];
                    acc(*p, &mut |dp| dp.iter_mut().zip(slice).for_each(|(d, gi)| *d += gi));
                    offset += n;
                }
            }
            Op::Gather { table, ids } => {
                let width = node.value.cols();
                acc(*table, &mut |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g[r * width..(r + 1) * width];
                        dt[id * width..(id + 1) * width]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, gi)| *d += gi);
                    }
                })
            }
            Op::L2NormalizeRows { x, norms } => {
                let width = node.value.cols();
                acc(*x, &mut |dx| {
                    for (r, &n) in norms.iter().enumerate() {
                        let y = &out[r * width..(r + 1) * width];
                        let gr = &g[r * width..(r + 1) * width];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..width {
                            dx[r * width + j] += (gr[j] - y[j] * dot) / n;
                        }
                    }
                })
            }
            Op::L1Distance(a, b) => {
                let (ta, tb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let sign = |j: usize| {
                    let d = ta[j] - tb[j];
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                acc(*a, &mut |da| {
                    for (j, d) in da.iter_mut().enumerate() {
                        *d += g[0] * sign(j);
                    }
                });
                acc(*b, &mut |db| {
                    for (j, d) in db.iter_mut().enumerate() {
                        *d -= g[0] * sign(j);
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                weights,
                denom,
                probs,
            } => {
                let vocab = nodes[logits.0].value.cols();
                acc(*logits, &mut |dl| {
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let scale = g[0] * w / denom;
                        let p = &probs[r * vocab..(r + 1) * vocab];
                        let d = &mut dl[r * vocab..(r + 1) * vocab];
                        for (j, (dj, pj)) in d.iter_mut().zip(p).enumerate() {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            *dj += scale * (pj - onehot);
                        }
                    }
                })
            }
        }
    }

    /// Gradient of the last `backward` loss with respect to `v`, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the computed gradient of every listed parameter into its `grad`
    /// buffer. Parameters that were not bound or not reached receive zeros.
    pub fn accumulate_grads<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) {
        for p in params {
            let g = self.bound.get(p.name()).and_then(|&v| self.grad(v));
            p.accumulate_grad(g);
        }
    }
}
