//! Small tape-based reverse-mode automatic differentiation over `f64`
//! vectors. Each forward pass builds a fresh tape; `backward` walks it once
//! in reverse. Shapes are plain lengths; matrices are row-major flat vectors.
//!
//! Internal shape violations are bugs, not user errors, and panic via
//! assertions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Broadcast multiply of a vector by a length-1 scalar node.
    MulScalar {
        vec: usize,
        scalar: usize,
    },
    Scale(usize, f64),
    /// Constant offset; the constant itself is applied at construction and
    /// is irrelevant to the gradient.
    AddConst(usize),
    MatVec {
        w: usize,
        x: usize,
        rows: usize,
        cols: usize,
    },
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Abs(usize),
    /// Sum of all elements into a length-1 node.
    SumAll(usize),
    /// Elementwise sum of equally-sized nodes.
    SumMany(Vec<usize>),
    GatherRow {
        table: usize,
        row: usize,
        width: usize,
    },
    /// Two-class softmax cross-entropy against a fixed label; length-1 out.
    CrossEntropy {
        logits: usize,
        label: usize,
    },
    /// Forward: elementwise `1.0` where value >= 0.5 else `0.0`.
    /// Backward: identity (straight-through).
    StraightThrough(usize),
}

struct Node {
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, data: Vec<f64>) -> Var {
        self.push(data, Op::Leaf)
    }

    pub fn leaf_slice(&mut self, data: &[f64]) -> Var {
        self.leaf(data.to_vec())
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.leaf(vec![0.0; len])
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    pub fn len(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.len(a), self.len(b), "add: length mismatch");
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(value, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.len(a), self.len(b), "sub: length mismatch");
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x - y)
            .collect();
        self.push(value, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.len(a), self.len(b), "mul: length mismatch");
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        self.push(value, Op::Mul(a.0, b.0))
    }

    pub fn mul_scalar(&mut self, vec: Var, scalar: Var) -> Var {
        assert_eq!(self.len(scalar), 1, "mul_scalar: scalar must have length 1");
        let s = self.nodes[scalar.0].value[0];
        let value = self.nodes[vec.0].value.iter().map(|x| x * s).collect();
        self.push(
            value,
            Op::MulScalar {
                vec: vec.0,
                scalar: scalar.0,
            },
        )
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| x * k).collect();
        self.push(value, Op::Scale(a.0, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| x + k).collect();
        self.push(value, Op::AddConst(a.0))
    }

    /// `w` is a `rows x cols` row-major matrix node; `x` has length `cols`.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.len(w), rows * cols, "matvec: matrix size mismatch");
        assert_eq!(self.len(x), cols, "matvec: vector size mismatch");
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let mut value = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = 0.0;
            let base = r * cols;
            for c in 0..cols {
                acc += wv[base + c] * xv[c];
            }
            value[r] = acc;
        }
        self.push(
            value,
            Op::MatVec {
                w: w.0,
                x: x.0,
                rows,
                cols,
            },
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(value, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0]
            .value
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(value, Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| x.max(0.0)).collect();
        self.push(value, Op::Relu(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| x.abs()).collect();
        self.push(value, Op::Abs(a.0))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = vec![self.nodes[a.0].value.iter().sum()];
        self.push(value, Op::SumAll(a.0))
    }

    pub fn sum_many(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "sum_many: empty input");
        let len = self.len(vars[0]);
        let mut value = vec![0.0; len];
        for v in vars {
            assert_eq!(self.len(*v), len, "sum_many: length mismatch");
            for (acc, x) in value.iter_mut().zip(&self.nodes[v.0].value) {
                *acc += x;
            }
        }
        self.push(value, Op::SumMany(vars.iter().map(|v| v.0).collect()))
    }

    pub fn mean_many(&mut self, vars: &[Var]) -> Var {
        let s = self.sum_many(vars);
        self.scale(s, 1.0 / vars.len() as f64)
    }

    pub fn gather_row(&mut self, table: Var, row: usize, width: usize) -> Var {
        let t = &self.nodes[table.0].value;
        assert!(
            (row + 1) * width <= t.len(),
            "gather_row: row {row} out of range"
        );
        let value = t[row * width..(row + 1) * width].to_vec();
        self.push(
            value,
            Op::GatherRow {
                table: table.0,
                row,
                width,
            },
        )
    }

    /// Numerically stable two-class softmax cross-entropy.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Var {
        assert_eq!(self.len(logits), 2, "cross_entropy: need 2 logits");
        assert!(label < 2, "cross_entropy: label must be 0 or 1");
        let l = &self.nodes[logits.0].value;
        let m = l[0].max(l[1]);
        let lse = m + ((l[0] - m).exp() + (l[1] - m).exp()).ln();
        let value = vec![lse - l[label]];
        self.push(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                label,
            },
        )
    }

    pub fn straight_through(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0]
            .value
            .iter()
            .map(|&x| if x >= 0.5 { 1.0 } else { 0.0 })
            .collect();
        self.push(value, Op::StraightThrough(a.0))
    }

    /// Reverse pass from a scalar loss node. Gradients accumulate into every
    /// node; read them per leaf with [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        assert_eq!(self.len(loss), 1, "backward: loss must be scalar");
        let loss_value = self.nodes[loss.0].value[0];
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                context: format!("loss value {loss_value}"),
            });
        }
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for (j, gj) in g.iter().enumerate() {
                        self.nodes[a].grad[j] += gj;
                        self.nodes[b].grad[j] += gj;
                    }
                    self.nodes[i].grad = g;
                }
                Op::Sub(a, b) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for (j, gj) in g.iter().enumerate() {
                        self.nodes[a].grad[j] += gj;
                        self.nodes[b].grad[j] -= gj;
                    }
                    self.nodes[i].grad = g;
                }
                Op::Mul(a, b) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for j in 0..g.len() {
                        let av = self.nodes[a].value[j];
                        let bv = self.nodes[b].value[j];
                        self.nodes[a].grad[j] += g[j] * bv;
                        self.nodes[b].grad[j] += g[j] * av;
                    }
                    self.nodes[i].grad = g;
                }
                Op::MulScalar { vec, scalar } => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    let s = self.nodes[scalar].value[0];
                    let mut ds = 0.0;
                    for j in 0..g.len() {
                        let xv = self.nodes[vec].value[j];
                        self.nodes[vec].grad[j] += g[j] * s;
                        ds += g[j] * xv;
                    }
                    self.nodes[scalar].grad[0] += ds;
                    self.nodes[i].grad = g;
                }
                Op::Scale(a, k) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for (j, gj) in g.iter().enumerate() {
                        self.nodes[a].grad[j] += gj * k;
                    }
                    self.nodes[i].grad = g;
                }
                Op::AddConst(a) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for (j, gj) in g.iter().enumerate() {
                        self.nodes[a].grad[j] += gj;
                    }
                    self.nodes[i].grad = g;
                }
                Op::MatVec { w, x, rows, cols } => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    // dW[r,c] += g[r] * x[c]; dx[c] += sum_r g[r] * W[r,c]
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let base = r * cols;
                        for c in 0..cols {
                            let xv = self.nodes[x].value[c];
                            let wv = self.nodes[w].value[base + c];
                            self.nodes[w].grad[base + c] += gr * xv;
                            self.nodes[x].grad[c] += gr * wv;
                        }
                    }
                    self.nodes[i].grad = g;
                }
                Op::Tanh(a) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for j in 0..g.len() {
                        let y = self.nodes[i].value[j];
                        self.nodes[a].grad[j] += g[j] * (1.0 - y * y);
                    }
                    self.nodes[i].grad = g;
                }
                Op::Sigmoid(a) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for j in 0..g.len() {
                        let y = self.nodes[i].value[j];
                        self.nodes[a].grad[j] += g[j] * y * (1.0 - y);
                    }
                    self.nodes[i].grad = g;
                }
                Op::Relu(a) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for j in 0..g.len() {
                        if self.nodes[a].value[j] > 0.0 {
                            self.nodes[a].grad[j] += g[j];
                        }
                    }
                    self.nodes[i].grad = g;
                }
                Op::Abs(a) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for j in 0..g.len() {
                        let x = self.nodes[a].value[j];
                        // Subgradient 0 at x == 0.
                        let sign = if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        self.nodes[a].grad[j] += g[j] * sign;
                    }
                    self.nodes[i].grad = g;
                }
                Op::SumAll(a) => {
                    let g = self.nodes[i].grad[0];
                    for ga in self.nodes[a].grad.iter_mut() {
                        *ga += g;
                    }
                }
                Op::SumMany(parents) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for p in &parents {
                        for (j, gj) in g.iter().enumerate() {
                            self.nodes[*p].grad[j] += gj;
                        }
                    }
                    self.nodes[i].grad = g;
                }
                Op::GatherRow { table, row, width } => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    let base = row * width;
                    for (j, gj) in g.iter().enumerate() {
                        self.nodes[table].grad[base + j] += gj;
                    }
                    self.nodes[i].grad = g;
                }
                Op::CrossEntropy { logits, label } => {
                    let g = self.nodes[i].grad[0];
                    let l = &self.nodes[logits].value;
                    let m = l[0].max(l[1]);
                    let e0 = (l[0] - m).exp();
                    let e1 = (l[1] - m).exp();
                    let z = e0 + e1;
                    let p = [e0 / z, e1 / z];
                    for j in 0..2 {
                        let onehot = if j == label { 1.0 } else { 0.0 };
                        self.nodes[logits].grad[j] += g * (p[j] - onehot);
                    }
                }
                Op::StraightThrough(a) => {
                    let g = std::mem::take(&mut self.nodes[i].grad);
                    for (j, gj) in g.iter().enumerate() {
                        self.nodes[a].grad[j] += gj;
                    }
                    self.nodes[i].grad = g;
                }
            }
        }
        Ok(())
    }
}
