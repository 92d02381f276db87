//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters are borrowed,
//! not copied; only nodes that depend on a trainable parameter take part in
//! the backward sweep.

use std::borrow::Cow;

use super::tensor::{dot, Scalar, Tensor};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, F),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor<F>,
        rstd: Vec<F>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<F>,
    },
}

struct Node<'p, F: Scalar> {
    value: Cow<'p, Tensor<F>>,
    op: Op<F>,
    needs_grad: bool,
}

pub struct Graph<'p, F: Scalar> {
    nodes: Vec<Node<'p, F>>,
}

/// Gradients of trainable parameters, indexed by the key given to
/// [`Graph::param`].
#[derive(Debug, Clone)]
pub struct ParamGrads<F: Scalar> {
    pub by_key: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> ParamGrads<F> {
    pub fn get(&self, key: usize) -> Option<&Tensor<F>> {
        self.by_key.get(key).and_then(Option::as_ref)
    }
}

impl<F: Scalar> Default for Graph<'_, F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, F: Scalar> Graph<'p, F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
        }
    }

    fn push(&mut self, value: Cow<'p, Tensor<F>>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, t: &'p Tensor<F>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    /// A trainable parameter; its gradient is reported under `key`.
    pub fn param(&mut self, t: &'p Tensor<F>, key: usize) -> Var {
        self.push(Cow::Borrowed(t), Op::Param(key), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Cow::Owned(v), Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Cow::Owned(v), Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Cow::Owned(v), Op::Add(a, b), ng)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!(b.shape(), (1, v.cols()), "bias shape mismatch");
        for r in 0..v.rows() {
            for (x, &y) in v.row_mut(r).iter_mut().zip(b.row(0)) {
                *x += y;
            }
        }
        let ng = self.needs(a) || self.needs(bias);
        self.push(Cow::Owned(v), Op::AddBias(a, bias), ng)
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let mut v = self.value(a).clone();
        v.scale(s);
        let ng = self.needs(a);
        self.push(Cow::Owned(v), Op::Scale(a, s), ng)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&x| gelu(x)).collect();
        let v = Tensor::from_vec(x.rows(), x.cols(), data);
        let ng = self.needs(a);
        self.push(Cow::Owned(v), Op::Gelu(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        let ng = self.needs(a);
        self.push(Cow::Owned(v), Op::SoftmaxRows(a), ng)
    }

    /// Row-wise layer normalization with `1 × n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = F::of(cols as f64);
        let mut xhat = Tensor::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let rs = F::one() / (var + F::of(LN_EPS)).sqrt();
            for (o, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * rs;
            }
            rstd.push(rs);
        }
        let g = self.value(gain);
        let b = self.value(bias);
        let mut out = xhat.clone();
        for r in 0..rows {
            for ((o, &gv), &bv) in out.row_mut(r).iter_mut().zip(g.row(0)).zip(b.row(0)) {
                *o = *o * gv + bv;
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(
            Cow::Owned(out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
        )
    }

    /// Rows `ids` of `table`, in order.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Tensor::zeros(ids.len(), t.cols());
        for (i, &id) in ids.iter().enumerate() {
            v.row_mut(i).copy_from_slice(t.row(id));
        }
        let ng = self.needs(table);
        self.push(
            Cow::Owned(v),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows width mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(
            Cow::Owned(Tensor::from_vec(rows, cols, data)),
            Op::ConcatRows(parts.to_vec()),
            ng,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let mut v = Tensor::zeros(t.rows(), len);
        for r in 0..t.rows() {
            v.row_mut(r).copy_from_slice(&t.row(r)[start..start + len]);
        }
        let ng = self.needs(x);
        self.push(Cow::Owned(v), Op::SliceCols { x, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), rows, "concat_cols height mismatch");
            for r in 0..rows {
                v.row_mut(r)[offset..offset + t.cols()].copy_from_slice(t.row(r));
            }
            offset += t.cols();
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Cow::Owned(v), Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        let t = self.value(x);
        let mut v = Tensor::zeros(rows.len(), t.cols());
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).copy_from_slice(t.row(r));
        }
        let ng = self.needs(x);
        self.push(
            Cow::Owned(v),
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            ng,
        )
    }

    /// `-ln softmax(logits)[target]` for a `1 × L` logit row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows(), 1, "cross_entropy expects a single row");
        let mut probs = l.row(0).to_vec();
        let max = probs.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + probs.iter().map(|&x| (x - max).exp()).sum::<F>().ln();
        let loss = lse - l.get(0, target);
        softmax_in_place(&mut probs);
        let ng = self.needs(logits);
        self.push(
            Cow::Owned(Tensor::from_vec(1, 1, vec![loss])),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            ng,
        )
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> ParamGrads<F> {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out: Vec<Option<Tensor<F>>> = Vec::new();
        grads[loss.0] = Some(Tensor::filled(1, 1, F::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let needs = |v: Var| self.nodes[v.0].needs_grad;
            match &node.op {
                Op::Leaf => {}
                Op::Param(key) => {
                    if out.len() <= *key {
                        out.resize_with(key + 1, || None);
                    }
                    accumulate(&mut out[*key], g);
                }
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        let ga = g.matmul_t(self.value(*b));
                        accumulate(&mut grads[a.0], ga);
                    }
                    if needs(*b) {
                        let gb = self.value(*a).t_matmul(&g);
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::MatMulT(a, b) => {
                    if needs(*a) {
                        let ga = g.matmul(self.value(*b));
                        accumulate(&mut grads[a.0], ga);
                    }
                    if needs(*b) {
                        let gb = g.t_matmul(self.value(*a));
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::Add(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if needs(*b) {
                        accumulate(&mut grads[b.0], g);
                    }
                }
                Op::AddBias(a, bias) => {
                    if needs(*bias) {
                        let mut gb = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        accumulate(&mut grads[bias.0], gb);
                    }
                    if needs(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.scale(*s);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let data = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &gv)| gv * gelu_grad(x))
                        .collect();
                    accumulate(&mut grads[a.0], Tensor::from_vec(x.rows(), x.cols(), data));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner = dot(yr, gr);
                        for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - inner);
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let (rows, cols) = xhat.shape();
                    let gv = self.value(*gain);
                    if needs(*gain) {
                        let mut gg = Tensor::zeros(1, cols);
                        for r in 0..rows {
                            for ((o, &d), &h) in gg.row_mut(0).iter_mut().zip(g.row(r)).zip(xhat.row(r)) {
                                *o += d * h;
                            }
                        }
                        accumulate(&mut grads[gain.0], gg);
                    }
                    if needs(*bias) {
                        let mut gb = Tensor::zeros(1, cols);
                        for r in 0..rows {
                            for (o, &d) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                                *o += d;
                            }
                        }
                        accumulate(&mut grads[bias.0], gb);
                    }
                    if needs(*x) {
                        let n = F::of(cols as f64);
                        let mut gx = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            let dxhat: Vec<F> =
                                g.row(r).iter().zip(gv.row(0)).map(|(&d, &w)| d * w).collect();
                            let mean_d = dxhat.iter().copied().sum::<F>() / n;
                            let mean_dh = dot(&dxhat, xhat.row(r)) / n;
                            for ((o, &d), &h) in gx.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r)) {
                                *o = rstd[r] * (d - mean_d - h * mean_dh);
                            }
                        }
                        accumulate(&mut grads[x.0], gx);
                    }
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let slot = grads[table.0].get_or_insert_with(|| Tensor::zeros(t.rows(), t.cols()));
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, &v) in slot.row_mut(id).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        if needs(p) {
                            let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                            accumulate(&mut grads[p.0], Tensor::from_vec(rows, cols, data));
                        }
                        offset += rows;
                    }
                }
                Op::SliceCols { x, start } => {
                    let (rows, cols) = self.value(*x).shape();
                    let slot = grads[x.0].get_or_insert_with(|| Tensor::zeros(rows, cols));
                    for r in 0..rows {
                        for (o, &v) in slot.row_mut(r)[*start..*start + g.cols()].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        if needs(p) {
                            let mut gp = Tensor::zeros(rows, cols);
                            for r in 0..rows {
                                gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                            }
                            accumulate(&mut grads[p.0], gp);
                        }
                        offset += cols;
                    }
                }
                Op::SelectRows { x, rows } => {
                    let (r0, c0) = self.value(*x).shape();
                    let slot = grads[x.0].get_or_insert_with(|| Tensor::zeros(r0, c0));
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, &v) in slot.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let upstream = g.get(0, 0);
                    let data = probs
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| {
                            let onehot = if j == *target { F::one() } else { F::zero() };
                            (p - onehot) * upstream
                        })
                        .collect();
                    accumulate(&mut grads[logits.0], Tensor::from_vec(1, probs.len(), data));
                }
            }
        }
        ParamGrads { by_key: out }
    }
}

fn accumulate<F: Scalar>(slot: &mut Option<Tensor<F>>, g: Tensor<F>) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

pub(crate) fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu<F: Scalar>(x: F) -> F {
    let c = F::of(GELU_C);
    let a = F::of(GELU_A);
    let half = F::of(0.5);
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::of(GELU_C);
    let a = F::of(GELU_A);
    let half = F::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + F::of(3.0) * a * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of every op against the tape's gradient.
    fn check<Fwd>(inputs: Vec<Tensor<f64>>, forward: Fwd)
    where
        Fwd: Fn(&mut Graph<'_, f64>, &[Var]) -> Var,
    {
        let loss_of = |ins: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
            let l = forward(&mut g, &vars);
            g.value(l).get(0, 0)
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().enumerate().map(|(k, t)| g.param(t, k)).collect();
        let l = forward(&mut g, &vars);
        let grads = g.backward(l);
        let h = 1e-6;
        for (k, t) in inputs.iter().enumerate() {
            for j in 0..t.len() {
                let mut plus = inputs.clone();
                plus[k].data_mut()[j] += h;
                let mut minus = inputs.clone();
                minus[k].data_mut()[j] -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let an = grads.get(k).map_or(0.0, |g| g.data()[j]);
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "input {k} elem {j}: fd {fd} vs tape {an}"
                );
            }
        }
    }

    fn t(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let data = (0..rows * cols)
            .map(|i| ((i as f64 + 1.0) * 0.7 + seed as f64 * 1.3).sin())
            .collect();
        Tensor::from_vec(rows, cols, data)
    }

    #[test]
    fn attention_like_composite() {
        check(vec![t(3, 4, 1), t(4, 4, 2), t(4, 4, 3), t(1, 4, 4), t(1, 4, 5)], |g, v| {
            let x = g.layer_norm(v[0], v[3], v[4]);
            let q = g.matmul(x, v[1]);
            let k = g.matmul(x, v[2]);
            let s = g.matmul_t(q, k);
            let s = g.scale(s, 0.5);
            let p = g.softmax_rows(s);
            let o = g.matmul(p, x);
            let h0 = g.slice_cols(o, 0, 2);
            let h1 = g.slice_cols(o, 2, 2);
            let o = g.concat_cols(&[h1, h0]);
            let o = g.gelu(o);
            let o = g.add(o, x);
            let row = g.select_rows(o, &[1]);
            g.cross_entropy(row, 2)
        });
    }

    #[test]
    fn gather_concat_bias() {
        check(vec![t(5, 3, 1), t(2, 3, 2), t(1, 3, 3), t(3, 3, 4)], |g, v| {
            let e = g.gather(v[0], &[4, 1, 4]);
            let x = g.concat_rows(&[v[1], e]);
            let x = g.add_bias(x, v[2]);
            let x = g.matmul(x, v[3]);
            let r = g.select_rows(x, &[0, 4]);
            let r = g.matmul_t(r, v[1]);
            let r = g.concat_rows(&[r, r]);
            let last = g.select_rows(r, &[3]);
            g.cross_entropy(last, 0)
        });
    }
}
