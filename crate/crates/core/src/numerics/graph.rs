//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node to the tape; node indices are therefore a
//! topological order and the backward pass is a single reverse sweep.

use super::tensor::{log_softmax, sigmoid, softmax, Tensor};
use super::NumericsError;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv2d { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    Sum(Var),
    RowMean { x: Var, rows: usize },
    SoftmaxKl { logits: Var, target: Vec<f64>, weight: f64 },
    Bce { p: Var, label: f64, weight: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    requires_grad: bool,
}

/// Lower clamp applied to probabilities entering a binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
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

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(t.into_data(), shape, Op::Leaf, false)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(data, vec![n], Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, true)
    }

    pub fn param_vec(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(data, vec![n], Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient of `v`, or zeros when nothing flowed into it (constants included).
    pub fn grad_or_zero(&self, v: Var) -> Vec<f64> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[v.0].value.len()],
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    /// Fails on the first node whose value or gradient is NaN or infinite.
    pub fn ensure_finite(&self) -> Result<(), NumericsError> {
        for (i, node) in self.nodes.iter().enumerate() {
            if node.value.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFinite(format!(
                    "value of node {i} ({})",
                    op_name(&node.op)
                )));
            }
            if let Some(g) = &self.grads[i] {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NumericsError::NonFinite(format!(
                        "gradient of node {i} ({})",
                        op_name(&node.op)
                    )));
                }
            }
        }
        Ok(())
    }

    // ---------------------------------------------------------------- ops

    /// `y = x W + b` for a vector `x` of length n and `W` of shape [n, m].
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NumericsError> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 1 || ws.len() != 2 || xs[0] != ws[0] {
            return Err(mismatch("linear", xs, ws));
        }
        let (n, m) = (ws[0], ws[1]);
        let mut y = match b {
            Some(b) => {
                if self.shape(b) != [m] {
                    return Err(mismatch("linear bias", ws, self.shape(b)));
                }
                self.value(b).to_vec()
            }
            None => vec![0.0; m],
        };
        {
            let xv = &self.nodes[x.0].value;
            let wv = &self.nodes[w.0].value;
            for i in 0..n {
                let xi = xv[i];
                if xi == 0.0 {
                    continue;
                }
                let row = &wv[i * m..(i + 1) * m];
                for (yj, wij) in y.iter_mut().zip(row) {
                    *yj += xi * wij;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(y, vec![m], Op::Linear { x, w, b }, rg))
    }

    /// Valid (no padding), stride-1 2-D convolution. `x` is [C, H, W], `w` is
    /// [O, C, KH, KW] and `b` is [O].
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || xs[0] != ws[1] || xs[1] < ws[2] || xs[2] < ws[3] {
            return Err(mismatch("conv2d", &xs, &ws));
        }
        if self.shape(b) != [ws[0]] {
            return Err(mismatch("conv2d bias", &ws, self.shape(b)));
        }
        let (c, h, wd) = (xs[0], xs[1], xs[2]);
        let (o, kh, kw) = (ws[0], ws[2], ws[3]);
        let (oh, ow) = (h - kh + 1, wd - kw + 1);
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let bv = &self.nodes[b.0].value;
        let mut y = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for r in 0..oh {
                for q in 0..ow {
                    let mut acc = bv[oc];
                    for ic in 0..c {
                        for dr in 0..kh {
                            let xrow = ic * h * wd + (r + dr) * wd + q;
                            let wrow = ((oc * c + ic) * kh + dr) * kw;
                            for dq in 0..kw {
                                acc += xv[xrow + dq] * wv[wrow + dq];
                            }
                        }
                    }
                    y[(oc * oh + r) * ow + q] = acc;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(y, vec![o, oh, ow], Op::Conv2d { x, w, b }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64, op: Op) -> Result<Var, NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(name, self.shape(a), self.shape(b)));
        }
        let y: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&p, &q)| f(p, q))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(y, shape, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, "mul", |p, q| p * q, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let y: Vec<f64> = self.value(a).iter().map(|&v| f(v)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(y, shape, op, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |v| v * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// Concatenation of 1-D nodes.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let mut y = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(mismatch("concat", self.shape(p), &[]));
            }
            y.extend_from_slice(self.value(p));
        }
        let n = y.len();
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(y, vec![n], Op::Concat(parts.to_vec()), rg))
    }

    /// Contiguous sub-vector `x[start..start + len]` of a flattened node.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let n = self.value(x).len();
        if start + len > n {
            return Err(mismatch("slice", &[n], &[start, len]));
        }
        let y = self.value(x)[start..start + len].to_vec();
        let rg = self.rg(x);
        Ok(self.push(y, vec![len], Op::Slice { x, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NumericsError> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(mismatch("reshape", self.shape(x), &shape));
        }
        let y = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(y, shape, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(vec![s], vec![1], Op::Sum(x), rg)
    }

    /// Mean over the first `rows` rows of a [R, C] node, giving a [C] vector.
    pub fn row_mean(&mut self, x: Var, rows: usize) -> Result<Var, NumericsError> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 || rows == 0 || rows > shape[0] {
            return Err(mismatch("row_mean", &shape, &[rows]));
        }
        let cols = shape[1];
        let xv = self.value(x);
        let mut y = vec![0.0; cols];
        for r in 0..rows {
            for (c, yc) in y.iter_mut().enumerate() {
                *yc += xv[r * cols + c];
            }
        }
        let inv = 1.0 / rows as f64;
        y.iter_mut().for_each(|v| *v *= inv);
        let rg = self.rg(x);
        Ok(self.push(y, vec![cols], Op::RowMean { x, rows }, rg))
    }

    /// `weight * KL(target || softmax(logits))` as a scalar node.
    pub fn softmax_kl(&mut self, logits: Var, target: &[f64], weight: f64) -> Result<Var, NumericsError> {
        if self.value(logits).len() != target.len() {
            return Err(mismatch("softmax_kl", self.shape(logits), &[target.len()]));
        }
        let ls = log_softmax(self.value(logits));
        let mut loss = 0.0;
        for (&p, &lq) in target.iter().zip(&ls) {
            if p > 0.0 {
                loss += p * (p.ln() - lq);
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(
            vec![weight * loss],
            vec![1],
            Op::SoftmaxKl {
                logits,
                target: target.to_vec(),
                weight,
            },
            rg,
        ))
    }

    /// `weight * BCE(p, label)` with `p` clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, p: Var, label: f64, weight: f64) -> Result<Var, NumericsError> {
        if self.value(p).len() != 1 {
            return Err(mismatch("bce", self.shape(p), &[1]));
        }
        let pc = self.value(p)[0].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let loss = -(label * pc.ln() + (1.0 - label) * (1.0 - pc).ln());
        let rg = self.rg(p);
        Ok(self.push(vec![weight * loss], vec![1], Op::Bce { p, label, weight }, rg))
    }

    // ----------------------------------------------------------- backward

    /// Reverse sweep from a scalar node with seed gradient 1.
    pub fn backward(&mut self, root: Var) -> Result<(), NumericsError> {
        if self.value(root).len() != 1 {
            return Err(mismatch("backward", self.shape(root), &[1]));
        }
        self.backward_with(root, &[1.0])
    }

    /// Reverse sweep from `root` seeded with an arbitrary upstream gradient.
    /// Intermediate gradients are kept after the sweep, so call
    /// [`Graph::zero_grad`] before sweeping again from another root.
    pub fn backward_with(&mut self, root: Var, seed: &[f64]) -> Result<(), NumericsError> {
        if self.value(root).len() != seed.len() {
            return Err(mismatch("backward seed", self.shape(root), &[seed.len()]));
        }
        if !self.rg(root) {
            return Ok(());
        }
        accumulate(&mut self.grads, &self.nodes, root, |g| {
            g.iter_mut().zip(seed).for_each(|(a, b)| *a += b)
        });
        let Graph { nodes, grads } = self;
        for idx in (0..=root.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            if node.requires_grad {
                propagate(nodes, grads, node, &gy);
            }
            grads[idx] = Some(gy);
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Linear { .. } => "linear",
        Op::Conv2d { .. } => "conv2d",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Relu(_) => "relu",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Concat(_) => "concat",
        Op::Slice { .. } => "slice",
        Op::Reshape(_) => "reshape",
        Op::Sum(_) => "sum",
        Op::RowMean { .. } => "row_mean",
        Op::SoftmaxKl { .. } => "softmax_kl",
        Op::Bce { .. } => "bce",
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, f: impl FnOnce(&mut [f64])) {
    if !nodes[v.0].requires_grad {
        return;
    }
    let slot = &mut grads[v.0];
    let g = slot.get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
    f(g);
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, gy: &[f64]) {
    let val = |v: Var| -> &[f64] { &nodes[v.0].value };
    match &node.op {
        Op::Leaf => {}
        Op::Linear { x, w, b } => {
            let (n, m) = (nodes[w.0].shape[0], nodes[w.0].shape[1]);
            let (xv, wv) = (val(*x), val(*w));
            accumulate(grads, nodes, *x, |gx| {
                for (i, gxi) in gx.iter_mut().enumerate() {
                    let row = &wv[i * m..(i + 1) * m];
                    *gxi += row.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>();
                }
            });
            accumulate(grads, nodes, *w, |gw| {
                for i in 0..n {
                    let xi = xv[i];
                    if xi == 0.0 {
                        continue;
                    }
                    for (g, d) in gw[i * m..(i + 1) * m].iter_mut().zip(gy) {
                        *g += xi * d;
                    }
                }
            });
            if let Some(b) = b {
                accumulate(grads, nodes, *b, |gb| {
                    gb.iter_mut().zip(gy).for_each(|(a, d)| *a += d)
                });
            }
        }
        Op::Conv2d { x, w, b } => {
            let xs = &nodes[x.0].shape;
            let ws = &nodes[w.0].shape;
            let (c, h, wd) = (xs[0], xs[1], xs[2]);
            let (o, kh, kw) = (ws[0], ws[2], ws[3]);
            let (oh, ow) = (h - kh + 1, wd - kw + 1);
            let (xv, wv) = (val(*x), val(*w));
            accumulate(grads, nodes, *b, |gb| {
                for oc in 0..o {
                    gb[oc] += gy[oc * oh * ow..(oc + 1) * oh * ow].iter().sum::<f64>();
                }
            });
            accumulate(grads, nodes, *w, |gw| {
                for oc in 0..o {
                    for r in 0..oh {
                        for q in 0..ow {
                            let d = gy[(oc * oh + r) * ow + q];
                            if d == 0.0 {
                                continue;
                            }
                            for ic in 0..c {
                                for dr in 0..kh {
                                    let xrow = ic * h * wd + (r + dr) * wd + q;
                                    let wrow = ((oc * c + ic) * kh + dr) * kw;
                                    for dq in 0..kw {
                                        gw[wrow + dq] += d * xv[xrow + dq];
                                    }
                                }
                            }
                        }
                    }
                }
            });
            accumulate(grads, nodes, *x, |gx| {
                for oc in 0..o {
                    for r in 0..oh {
                        for q in 0..ow {
                            let d = gy[(oc * oh + r) * ow + q];
                            if d == 0.0 {
                                continue;
                            }
                            for ic in 0..c {
                                for dr in 0..kh {
                                    let xrow = ic * h * wd + (r + dr) * wd + q;
                                    let wrow = ((oc * c + ic) * kh + dr) * kw;
                                    for dq in 0..kw {
                                        gx[xrow + dq] += d * wv[wrow + dq];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, |g| g.iter_mut().zip(gy).for_each(|(p, d)| *p += d));
            accumulate(grads, nodes, *b, |g| g.iter_mut().zip(gy).for_each(|(p, d)| *p += d));
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, |g| g.iter_mut().zip(gy).for_each(|(p, d)| *p += d));
            accumulate(grads, nodes, *b, |g| g.iter_mut().zip(gy).for_each(|(p, d)| *p -= d));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            accumulate(grads, nodes, *a, |g| {
                for i in 0..g.len() {
                    g[i] += gy[i] * bv[i];
                }
            });
            accumulate(grads, nodes, *b, |g| {
                for i in 0..g.len() {
                    g[i] += gy[i] * av[i];
                }
            });
        }
        Op::Scale(a, s) => {
            accumulate(grads, nodes, *a, |g| g.iter_mut().zip(gy).for_each(|(p, d)| *p += d * s));
        }
        Op::Relu(a) => {
            let av = val(*a);
            accumulate(grads, nodes, *a, |g| {
                for i in 0..g.len() {
                    if av[i] > 0.0 {
                        g[i] += gy[i];
                    }
                }
            });
        }
        Op::Sigmoid(a) => {
            let y = &node.value;
            accumulate(grads, nodes, *a, |g| {
                for i in 0..g.len() {
                    g[i] += gy[i] * y[i] * (1.0 - y[i]);
                }
            });
        }
        Op::Tanh(a) => {
            let y = &node.value;
            accumulate(grads, nodes, *a, |g| {
                for i in 0..g.len() {
                    g[i] += gy[i] * (1.0 - y[i] * y[i]);
                }
            });
        }
        Op::Concat(parts) => {
            let mut off = 0;
            for p in parts {
                let n = nodes[p.0].value.len();
                accumulate(grads, nodes, *p, |g| {
                    g.iter_mut().zip(&gy[off..off + n]).for_each(|(a, d)| *a += d)
                });
                off += n;
            }
        }
        Op::Slice { x, start } => {
            let n = gy.len();
            accumulate(grads, nodes, *x, |g| {
                g[*start..start + n].iter_mut().zip(gy).for_each(|(a, d)| *a += d)
            });
        }
        Op::Reshape(x) => {
            accumulate(grads, nodes, *x, |g| g.iter_mut().zip(gy).for_each(|(a, d)| *a += d));
        }
        Op::Sum(x) => {
            accumulate(grads, nodes, *x, |g| g.iter_mut().for_each(|a| *a += gy[0]));
        }
        Op::RowMean { x, rows } => {
            let cols = nodes[x.0].shape[1];
            let inv = 1.0 / *rows as f64;
            accumulate(grads, nodes, *x, |g| {
                for r in 0..*rows {
                    for c in 0..cols {
                        g[r * cols + c] += gy[c] * inv;
                    }
                }
            });
        }
        Op::SoftmaxKl {
            logits,
            target,
            weight,
        } => {
            let q = softmax(val(*logits));
            accumulate(grads, nodes, *logits, |g| {
                for i in 0..g.len() {
                    g[i] += gy[0] * weight * (q[i] - target[i]);
                }
            });
        }
        Op::Bce { p, label, weight } => {
            let pv = val(*p)[0];
            accumulate(grads, nodes, *p, |g| {
                if pv > BCE_CLAMP && pv < 1.0 - BCE_CLAMP {
                    g[0] += gy[0] * weight * (-label / pv + (1.0 - label) / (1.0 - pv));
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_hand_values() {
        let mut g = Graph::new();
        let x = g.constant_vec(vec![1.0, 2.0]);
        let w = g.constant(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
        let b = g.constant_vec(vec![3.0]);
        let y = g.linear(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y), &[6.0]);
    }

    #[test]
    fn linear_reports_both_shapes() {
        let mut g = Graph::new();
        let x = g.constant_vec(vec![1.0, 2.0, 3.0]);
        let w = g.constant(Tensor::zeros(&[2, 4]));
        let err = g.linear(x, w, None).unwrap_err().to_string();
        assert!(err.contains("[3]") && err.contains("[2, 4]"), "{err}");
    }

    #[test]
    fn constant_gradient_is_zero() {
        let mut g = Graph::new();
        let c = g.constant_vec(vec![1.0, 2.0]);
        let p = g.param_vec(vec![0.5, -0.5]);
        let m = g.mul(c, p).unwrap();
        let s = g.sum(m);
        g.backward(s).unwrap();
        assert_eq!(g.grad_or_zero(c), vec![0.0, 0.0]);
        assert_eq!(g.grad(p).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn shared_leaf_accumulates_gradient() {
        // d/dp (p*p) summed over two uses = 2p
        let mut g = Graph::new();
        let p = g.param_vec(vec![3.0]);
        let y = g.mul(p, p).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[6.0]);
    }

    #[test]
    fn nonfinite_values_are_reported() {
        let mut g = Graph::new();
        let a = g.param_vec(vec![f64::MAX]);
        let _ = g.scale(a, 10.0);
        assert!(matches!(g.ensure_finite(), Err(NumericsError::NonFinite(_))));
    }
}
