//! Reverse-mode differentiation over small dense vectors and matrices.
//!
//! Every node stores its value in one contiguous arena and gets a gradient
//! slot of the same size at the same offset. Nodes are appended in
//! evaluation order, so the arena order is already a topological order and
//! the backward pass is a single reverse sweep.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Floor added inside the logarithm of the cross-entropy loss.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Deliberately wrong backward rules, used as a negative control for the
/// gradient checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Uses `1 - y` instead of `1 - y^2` as the tanh derivative.
    TanhBackward,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Activation(Var, Activation),
    Row(Var, usize),
    Mask(Var, Box<[f64]>),
    WeightedSum(Box<[(Var, f64)]>),
    Softmax(Var),
    NegLog(Var, usize),
    BceWithLogits(Var, Box<[f64]>),
    SumSquares(Var),
    SumElements(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Node {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    grads: Vec<f64>,
    fault: Option<Fault>,
    relu_pattern: u64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: Option<Fault>) -> Self {
        Self {
            fault,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Hash of which ReLU inputs were positive, in recording order. Two
    /// evaluations with equal patterns lie on the same linear piece of
    /// every ReLU.
    pub fn relu_pattern(&self) -> u64 {
        self.relu_pattern
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        op: Op,
        rows: usize,
        cols: usize,
        values: impl IntoIterator<Item = f64>,
    ) -> Var {
        let offset = self.values.len();
        self.values.extend(values);
        debug_assert_eq!(self.values.len() - offset, rows * cols);
        self.nodes.push(Node {
            op,
            offset,
            rows,
            cols,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = self.node(v);
        &self.values[n.offset..n.offset + n.len()]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        assert_eq!(value.len(), 1, "node is not a scalar");
        value[0]
    }

    /// `(rows, cols)`; vectors have one column.
    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn size(&self, v: Var) -> usize {
        self.node(v).len()
    }

    /// Gradient accumulated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> &[f64] {
        let n = self.node(v);
        if self.grads.len() < n.offset + n.len() {
            return &[];
        }
        &self.grads[n.offset..n.offset + n.len()]
    }

    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.rows(), t.cols(), t.data().iter().copied())
    }

    pub fn constant(&mut self, data: &[f64]) -> Var {
        self.push(Op::Leaf, data.len(), 1, data.iter().copied())
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (rows, cols) = self.dims(w);
        assert_eq!(cols, self.size(x), "matvec: inner dimensions differ");
        let wn = self.node(w).offset;
        let xn = self.node(x).offset;
        let mut out = vec![0.0; rows];
        {
            let wv = &self.values[wn..wn + rows * cols];
            let xv = &self.values[xn..xn + cols];
            for (o, wrow) in out.iter_mut().zip(wv.chunks_exact(cols)) {
                *o = wrow.iter().zip(xv).map(|(a, b)| a * b).sum();
            }
        }
        self.push(Op::MatVec(w, x), rows, 1, out)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> (usize, usize, Vec<f64>) {
        let (rows, cols) = self.dims(a);
        assert_eq!(
            self.size(a),
            self.size(b),
            "element-wise op on different sizes"
        );
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        (rows, cols, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (r, c, out) = self.binary(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), r, c, out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (r, c, out) = self.binary(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), r, c, out)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (r, c, out) = self.binary(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), r, c, out)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let out: Vec<f64> = self.value(a).iter().map(|x| 1.0 - x).collect();
        self.push(Op::OneMinus(a), r, c, out)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let (r, c) = self.dims(a);
        let out: Vec<f64> = self.value(a).iter().map(|x| factor * x).collect();
        self.push(Op::Scale(a, factor), r, c, out)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let (r, c) = self.dims(a);
        if kind == Activation::Relu {
            let mut h = self.relu_pattern;
            for &x in self.value(a) {
                h = (h ^ u64::from(x > 0.0)).wrapping_mul(0x100000001b3);
            }
            self.relu_pattern = h;
        }
        let out: Vec<f64> = self.value(a).iter().map(|&x| kind.apply(x)).collect();
        self.push(Op::Activation(a, kind), r, c, out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    /// Row `index` of a matrix node, as a vector.
    pub fn row(&mut self, table: Var, index: usize) -> Var {
        let (rows, cols) = self.dims(table);
        assert!(index < rows, "row {index} out of range for {rows} rows");
        let start = self.node(table).offset + index * cols;
        let out: Vec<f64> = self.values[start..start + cols].to_vec();
        self.push(Op::Row(table, index), cols, 1, out)
    }

    /// Multiplies element-wise by a constant mask.
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let (r, c) = self.dims(a);
        assert_eq!(mask.len(), r * c, "mask size differs from input");
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        self.push(Op::Mask(a, mask.into_boxed_slice()), r, c, out)
    }

    /// Inverted dropout: during training each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        check_dropout_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let mask = dropout_mask(self.size(a), rate, rng);
        Ok(self.mask(a, mask))
    }

    /// `Σ weight_k · term_k` over same-sized nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        assert!(!terms.is_empty(), "weighted sum of nothing");
        let (r, c) = self.dims(terms[0].0);
        let mut out = vec![0.0; r * c];
        for &(v, w) in terms {
            let value = self.value(v);
            assert_eq!(value.len(), out.len(), "weighted sum over different sizes");
            for (o, x) in out.iter_mut().zip(value) {
                *o += w * x;
            }
        }
        self.push(Op::WeightedSum(terms.into()), r, c, out)
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let weighted: Vec<(Var, f64)> = terms.iter().map(|&v| (v, 1.0)).collect();
        self.weighted_sum(&weighted)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let out = softmax(self.value(a));
        self.push(Op::Softmax(a), r, c, out)
    }

    /// `-ln(probs[gold] + LOG_EPS)`.
    pub fn cross_entropy(&mut self, probs: Var, gold: usize) -> Result<Var> {
        let p = self.value(probs);
        if gold >= p.len() {
            return Err(Error::structural(format!(
                "gold index {gold} out of range for {} classes",
                p.len()
            )));
        }
        let loss = -(p[gold] + LOG_EPS).ln();
        Ok(self.push(Op::NegLog(probs, gold), 1, 1, [loss]))
    }

    /// Summed binary cross-entropy of independent sigmoid outputs, computed
    /// from the logits for stability.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Var {
        let l = self.value(logits);
        assert_eq!(
            l.len(),
            targets.len(),
            "bce: targets differ in size from logits"
        );
        let loss: f64 = l
            .iter()
            .zip(targets)
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        self.push(Op::BceWithLogits(logits, targets.into()), 1, 1, [loss])
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().map(|x| x * x).sum();
        self.push(Op::SumSquares(a), 1, 1, [s])
    }

    pub fn sum_elements(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().sum();
        self.push(Op::SumElements(a), 1, 1, [s])
    }

    /// `lambda · Σ ‖W‖²` over the given nodes.
    pub fn l2_penalty(&mut self, weights: &[Var], lambda: f64) -> Var {
        if weights.is_empty() {
            return self.constant(&[0.0]);
        }
        let squares: Vec<(Var, f64)> = weights
            .iter()
            .map(|&w| (self.sum_squares(w), lambda))
            .collect();
        self.weighted_sum(&squares)
    }

    /// Propagates `d loss / d node` to every node that the scalar `loss`
    /// depends on.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.size(loss), 1, "backward needs a scalar loss");
        self.grads.clear();
        self.grads.resize(self.values.len(), 0.0);
        let mut reached = vec![false; self.nodes.len()];
        reached[loss.0] = true;
        let seed_at = self.node(loss).offset;
        self.grads[seed_at] = 1.0;

        for index in (0..=loss.0).rev() {
            if !reached[index] {
                continue;
            }
            let node = &self.nodes[index];
            let (lower, upper) = self.grads.split_at_mut(node.offset);
            let g = &upper[..node.len()];
            let values = &self.values;
            let nodes = &self.nodes;
            let val = |v: Var| &values[span(nodes, v)];
            macro_rules! grad_of {
                ($v:expr, $reached:expr) => {{
                    let v: Var = $v;
                    $reached[v.0] = true;
                    &mut lower[span(nodes, v)]
                }};
            }
            let out = &values[node.offset..node.offset + node.len()];

            match &node.op {
                Op::Leaf => {}
                Op::MatVec(w, x) => {
                    let cols = nodes[w.0].cols;
                    let xv = val(*x);
                    let gw = grad_of!(*w, reached);
                    for (gi, gwrow) in g.iter().zip(gw.chunks_exact_mut(cols)) {
                        if *gi != 0.0 {
                            for (a, b) in gwrow.iter_mut().zip(xv) {
                                *a += gi * b;
                            }
                        }
                    }
                    let wv = val(*w);
                    let gx = grad_of!(*x, reached);
                    for (gi, wrow) in g.iter().zip(wv.chunks_exact(cols)) {
                        if *gi != 0.0 {
                            for (a, b) in gx.iter_mut().zip(wrow) {
                                *a += gi * b;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(grad_of!(*a, reached), g, 1.0);
                    accumulate(grad_of!(*b, reached), g, 1.0);
                }
                Op::Sub(a, b) => {
                    accumulate(grad_of!(*a, reached), g, 1.0);
                    accumulate(grad_of!(*b, reached), g, -1.0);
                }
                Op::Mul(a, b) => {
                    let bv = val(*b);
                    for ((ga, gi), y) in grad_of!(*a, reached).iter_mut().zip(g).zip(bv) {
                        *ga += gi * y;
                    }
                    let av = val(*a);
                    for ((gb, gi), x) in grad_of!(*b, reached).iter_mut().zip(g).zip(av) {
                        *gb += gi * x;
                    }
                }
                Op::OneMinus(a) => accumulate(grad_of!(*a, reached), g, -1.0),
                Op::Scale(a, factor) => accumulate(grad_of!(*a, reached), g, *factor),
                Op::Activation(a, kind) => {
                    let xv = val(*a);
                    let faulty =
                        self.fault == Some(Fault::TanhBackward) && *kind == Activation::Tanh;
                    let ga = grad_of!(*a, reached);
                    for (((gx, gi), &x), &y) in ga.iter_mut().zip(g).zip(xv).zip(out) {
                        let d = if faulty {
                            1.0 - y
                        } else {
                            kind.derivative(x, y)
                        };
                        *gx += gi * d;
                    }
                }
                Op::Row(table, index) => {
                    let cols = nodes[table.0].cols;
                    let gt = grad_of!(*table, reached);
                    accumulate(&mut gt[index * cols..(index + 1) * cols], g, 1.0);
                }
                Op::Mask(a, mask) => {
                    for ((ga, gi), m) in grad_of!(*a, reached).iter_mut().zip(g).zip(mask.iter()) {
                        *ga += gi * m;
                    }
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms.iter() {
                        accumulate(grad_of!(v, reached), g, w);
                    }
                }
                Op::Softmax(a) => {
                    let dot: f64 = g.iter().zip(out).map(|(gi, y)| gi * y).sum();
                    for ((ga, gi), y) in grad_of!(*a, reached).iter_mut().zip(g).zip(out) {
                        *ga += y * (gi - dot);
                    }
                }
                Op::NegLog(probs, gold) => {
                    let p = val(*probs)[*gold];
                    grad_of!(*probs, reached)[*gold] += -g[0] / (p + LOG_EPS);
                }
                Op::BceWithLogits(logits, targets) => {
                    let lv = val(*logits);
                    let gl = grad_of!(*logits, reached);
                    for ((gx, &x), t) in gl.iter_mut().zip(lv).zip(targets.iter()) {
                        *gx += g[0] * (sigmoid(x) - t);
                    }
                }
                Op::SumElements(a) => {
                    for ga in grad_of!(*a, reached).iter_mut() {
                        *ga += g[0];
                    }
                }
                Op::SumSquares(a) => {
                    let av = val(*a);
                    for (ga, x) in grad_of!(*a, reached).iter_mut().zip(av) {
                        *ga += 2.0 * g[0] * x;
                    }
                }
            }
        }
    }
}

fn span(nodes: &[Node], v: Var) -> std::ops::Range<usize> {
    let n = &nodes[v.0];
    n.offset..n.offset + n.len()
}

fn accumulate(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

/// Max-shifted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

pub(crate) fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn tanh_gradient_matches_finite_difference() {
        let mut tape = Tape::new();
        let x = tape.constant(&[0.3]);
        let y = tape.tanh(x);
        tape.backward(y);
        let fd = central_difference(f64::tanh, 0.3, 1e-5);
        assert!((tape.grad(x)[0] - fd).abs() < 1e-8);
    }

    #[test]
    fn sigmoid_and_relu_fixed_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn matvec_gradients() {
        let w = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut tape = Tape::new();
        let wv = tape.leaf(&w);
        let x = tape.constant(&[1.0, -1.0, 2.0]);
        let y = tape.matvec(wv, x);
        assert_eq!(tape.value(y), &[5.0, 11.0]);
        let ones = tape.constant(&[1.0, 1.0]);
        let prod = tape.mul(y, ones);
        let loss = tape.sum_squares(prod);
        tape.backward(loss);
        // d/dW of (Wx)_i^2 = 2 (Wx)_i x_j
        assert_eq!(tape.grad(wv), &[10.0, -10.0, 20.0, 22.0, -22.0, 44.0]);
        // d/dx = W^T 2Wx
        assert_eq!(tape.grad(x), &[98.0, 130.0, 162.0]);
    }

    #[test]
    fn shared_operand_in_product() {
        let mut tape = Tape::new();
        let x = tape.constant(&[3.0]);
        let y = tape.mul(x, x);
        tape.backward(y);
        assert_eq!(tape.grad(x), &[6.0]);
    }

    #[test]
    fn cross_entropy_gradient_wrt_logits() {
        let logits = [0.2, -1.3, 0.7, 0.1];
        let mut tape = Tape::new();
        let l = tape.constant(&logits);
        let p = tape.softmax(l);
        let loss = tape.cross_entropy(p, 2).unwrap();
        tape.backward(loss);
        let probs = softmax(&logits);
        for (i, (g, p)) in tape.grad(l).iter().zip(&probs).enumerate() {
            let onehot = if i == 2 { 1.0 } else { 0.0 };
            assert!((g - (p - onehot)).abs() < 1e-10);
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_index() {
        let mut tape = Tape::new();
        let p = tape.constant(&[0.5, 0.5]);
        assert!(tape.cross_entropy(p, 2).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let mut tape = Tape::new();
        let p = tape.constant(&[1.0, 0.0, 0.0]);
        let l = tape.cross_entropy(p, 0).unwrap();
        assert!(tape.scalar(l).abs() < 1e-11);
        let q = tape.constant(&[0.5, 0.5]);
        let l = tape.cross_entropy(q, 1).unwrap();
        assert!((tape.scalar(l) - std::f64::consts::LN_2).abs() < 1e-11);
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let mut tape = Tape::new();
        let l = tape.constant(&[0.0, 0.0]);
        let loss = tape.bce_with_logits(l, &[1.0, 0.0]);
        assert!((tape.scalar(loss) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        tape.backward(loss);
        assert_eq!(tape.grad(l), &[-0.5, 0.5]);
    }

    #[test]
    fn l2_penalty_value_and_gradient() {
        let w = Tensor::vector(vec![3.0, 4.0]);
        let mut tape = Tape::new();
        let wv = tape.leaf(&w);
        let pen = tape.l2_penalty(&[wv], 1.0);
        assert_eq!(tape.scalar(pen), 25.0);
        tape.backward(pen);
        assert_eq!(tape.grad(wv), &[6.0, 8.0]);

        let mut tape = Tape::new();
        let wv = tape.leaf(&w);
        let pen = tape.l2_penalty(&[wv], 0.0);
        assert_eq!(tape.scalar(pen), 0.0);
    }

    #[test]
    fn l2_gradient_matches_finite_difference() {
        let lambda = 0.37;
        let w = [0.3, -1.2, 2.5];
        let mut tape = Tape::new();
        let wv = tape.constant(&w);
        let pen = tape.l2_penalty(&[wv], lambda);
        tape.backward(pen);
        for i in 0..w.len() {
            let f = |x: f64| {
                let mut v = w;
                v[i] = x;
                lambda * v.iter().map(|a| a * a).sum::<f64>()
            };
            let fd = central_difference(f, w[i], 1e-5);
            assert!((tape.grad(wv)[i] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn row_gradient_lands_in_table() {
        let table = Tensor::matrix(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut tape = Tape::new();
        let t = tape.leaf(&table);
        let r = tape.row(t, 1);
        assert_eq!(tape.value(r), &[2.0, 3.0]);
        let s = tape.sum_squares(r);
        tape.backward(s);
        assert_eq!(tape.grad(t), &[0.0, 0.0, 4.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn unreached_nodes_get_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(&[1.0]);
        let b = tape.constant(&[2.0]);
        let _unused = tape.tanh(b);
        let loss = tape.scale(a, 3.0);
        tape.backward(loss);
        assert_eq!(tape.grad(a), &[3.0]);
        assert_eq!(tape.grad(b), &[0.0]);
    }

    #[test]
    fn injected_fault_breaks_tanh_rule() {
        let mut tape = Tape::with_fault(Some(Fault::TanhBackward));
        let x = tape.constant(&[0.3]);
        let y = tape.tanh(x);
        tape.backward(y);
        let fd = central_difference(f64::tanh, 0.3, 1e-5);
        assert!((tape.grad(x)[0] - fd).abs() > 1e-3);
    }
}
