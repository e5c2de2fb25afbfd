//! Reverse-mode gradient tape.
//!
//! Operations are recorded at the granularity of whole tensor kernels (mean
//! removal, graph mixing, matrix products, activations, residual adds), not
//! scalar arithmetic. Each node keeps its forward value; [`GradientTape::backward`]
//! walks the nodes in reverse and hands every input its adjoint.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{center_norm_backward, center_norm_forward, Activation};
use super::{Matrix, Tensor3};
use crate::error::{shape_err, Error, Result};

/// Handle to a node recorded on a [`GradientTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Matrix),
    Tensor(Tensor3),
}

impl Value {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Value::Scalar(v) => core::slice::from_ref(v),
            Value::Vector(v) => v,
            Value::Matrix(m) => m.as_slice(),
            Value::Tensor(t) => t.as_slice(),
        }
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Value::Scalar(v) => core::slice::from_mut(v),
            Value::Vector(v) => v,
            Value::Matrix(m) => m.as_mut_slice(),
            Value::Tensor(t) => t.as_mut_slice(),
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    fn accumulate(&mut self, other: &Value) {
        for (a, b) in self.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    CenterNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        alpha: f64,
    },
    GraphMix {
        x: Var,
        adj: Arc<Matrix>,
    },
    FeatureMatmul {
        x: Var,
        w: Var,
    },
    TimeMatmul {
        m: Var,
        x: Var,
    },
    TimeBias {
        x: Var,
        bias: Var,
    },
    Activation {
        x: Var,
        kind: Activation,
    },
    MeanAbsError {
        pred: Var,
        target: Tensor3,
    },
    Sum(Var),
    SumSquares(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Value,
    op: Op,
}

/// Single-owner record of a differentiable computation.
#[derive(Debug, Default)]
pub struct GradientTape {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Value>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Value> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn tensor(&self, v: Var) -> Option<&Tensor3> {
        match self.get(v) {
            Some(Value::Tensor(t)) => Some(t),
            _ => None,
        }
    }

    pub fn matrix(&self, v: Var) -> Option<&Matrix> {
        match self.get(v) {
            Some(Value::Matrix(m)) => Some(m),
            _ => None,
        }
    }

    pub fn vector(&self, v: Var) -> Option<&[f64]> {
        match self.get(v) {
            Some(Value::Vector(b)) => Some(b),
            _ => None,
        }
    }
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Value) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn tensor_leaf(&mut self, t: Tensor3) -> Var {
        self.leaf(Value::Tensor(t))
    }

    pub fn matrix_leaf(&mut self, m: Matrix) -> Var {
        self.leaf(Value::Matrix(m))
    }

    pub fn vector_leaf(&mut self, v: Vec<f64>) -> Var {
        self.leaf(Value::Vector(v))
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Result<&Tensor3> {
        match &self.nodes[v.0].value {
            Value::Tensor(t) => Ok(t),
            other => Err(shape_err("tape tensor", "tensor", kind_name(other))),
        }
    }

    pub fn matrix(&self, v: Var) -> Result<&Matrix> {
        match &self.nodes[v.0].value {
            Value::Matrix(m) => Ok(m),
            other => Err(shape_err("tape matrix", "matrix", kind_name(other))),
        }
    }

    fn vector(&self, v: Var) -> Result<&[f64]> {
        match &self.nodes[v.0].value {
            Value::Vector(b) => Ok(b),
            other => Err(shape_err("tape vector", "vector", kind_name(other))),
        }
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.nodes[v.0]
            .value
            .scalar()
            .ok_or_else(|| shape_err("tape scalar", "scalar", kind_name(&self.nodes[v.0].value)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.tensor(a)?, self.tensor(b)?);
        if ta.dims() != tb.dims() {
            return Err(shape_err("tape add", ta.dims(), tb.dims()));
        }
        let out = ta.add(tb);
        Ok(self.push(Value::Tensor(out), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.tensor(a)?, self.tensor(b)?);
        if ta.dims() != tb.dims() {
            return Err(shape_err("tape sub", ta.dims(), tb.dims()));
        }
        let out = ta.sub(tb);
        Ok(self.push(Value::Tensor(out), Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.tensor(a)?.map(|v| v * s);
        Ok(self.push(Value::Tensor(out), Op::Scale(a, s)))
    }

    pub fn center_norm(&mut self, x: Var, gamma: Var, beta: Var, alpha: f64) -> Result<Var> {
        let out = center_norm_forward(self.tensor(x)?, self.matrix(gamma)?, self.matrix(beta)?, alpha)?;
        Ok(self.push(
            Value::Tensor(out),
            Op::CenterNorm {
                x,
                gamma,
                beta,
                alpha,
            },
        ))
    }

    pub fn graph_mix(&mut self, x: Var, adj: Arc<Matrix>) -> Result<Var> {
        let out = self.tensor(x)?.graph_mix(&adj)?;
        Ok(self.push(Value::Tensor(out), Op::GraphMix { x, adj }))
    }

    pub fn feature_matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let out = self.tensor(x)?.feature_matmul(self.matrix(w)?)?;
        Ok(self.push(Value::Tensor(out), Op::FeatureMatmul { x, w }))
    }

    pub fn time_matmul(&mut self, m: Var, x: Var) -> Result<Var> {
        let out = self.tensor(x)?.time_matmul(self.matrix(m)?)?;
        Ok(self.push(Value::Tensor(out), Op::TimeMatmul { m, x }))
    }

    pub fn time_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = self.tensor(x)?.add_time_bias(self.vector(bias)?)?;
        Ok(self.push(Value::Tensor(out), Op::TimeBias { x, bias }))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let out = self.tensor(x)?.map(|v| kind.apply(v));
        Ok(self.push(Value::Tensor(out), Op::Activation { x, kind }))
    }

    /// Scalar `mean |pred − target|`; the target is a constant.
    pub fn mean_abs_error(&mut self, pred: Var, target: &Tensor3) -> Result<Var> {
        let p = self.tensor(pred)?;
        if p.dims() != target.dims() {
            return Err(shape_err("mean_abs_error", p.dims(), target.dims()));
        }
        if p.is_empty() {
            return Err(Error::InvalidArgument("mean_abs_error on empty tensor".into()));
        }
        let loss = p.mean_abs_diff(target);
        Ok(self.push(
            Value::Scalar(loss),
            Op::MeanAbsError {
                pred,
                target: target.clone(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.tensor(x)?.as_slice().iter().sum();
        Ok(self.push(Value::Scalar(s), Op::Sum(x)))
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.tensor(x)?.as_slice().iter().map(|v| v * v).sum();
        Ok(self.push(Value::Scalar(s), Op::SumSquares(x)))
    }

    /// Propagates adjoints from the scalar `output` back to every recorded node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.scalar(output)?;
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Value::Scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    let mut neg = g.clone();
                    neg.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, neg);
                }
                Op::Scale(a, s) => {
                    let mut scaled = g.clone();
                    scaled.as_mut_slice().iter_mut().for_each(|v| *v *= s);
                    accumulate(&mut grads, *a, scaled);
                }
                Op::CenterNorm {
                    x,
                    gamma,
                    beta,
                    alpha,
                } => {
                    let go = expect_tensor(&g)?;
                    let (dx, dg, db) =
                        center_norm_backward(self.tensor(*x)?, self.matrix(*gamma)?, *alpha, go);
                    accumulate(&mut grads, *x, Value::Tensor(dx));
                    accumulate(&mut grads, *gamma, Value::Matrix(dg));
                    accumulate(&mut grads, *beta, Value::Matrix(db));
                }
                Op::GraphMix { x, adj } => {
                    let go = expect_tensor(&g)?;
                    let dx = go.graph_mix(&adj.transpose())?;
                    accumulate(&mut grads, *x, Value::Tensor(dx));
                }
                Op::FeatureMatmul { x, w } => {
                    let go = expect_tensor(&g)?;
                    let wm = self.matrix(*w)?;
                    let dx = go.feature_matmul(&wm.transpose())?;
                    let dw = self.tensor(*x)?.feature_outer_sum(go);
                    accumulate(&mut grads, *x, Value::Tensor(dx));
                    accumulate(&mut grads, *w, Value::Matrix(dw));
                }
                Op::TimeMatmul { m, x } => {
                    let go = expect_tensor(&g)?;
                    let mm = self.matrix(*m)?;
                    let dx = go.time_matmul(&mm.transpose())?;
                    let dm = go.time_outer_sum(self.tensor(*x)?);
                    accumulate(&mut grads, *x, Value::Tensor(dx));
                    accumulate(&mut grads, *m, Value::Matrix(dm));
                }
                Op::TimeBias { x, bias } => {
                    let go = expect_tensor(&g)?;
                    accumulate(&mut grads, *bias, Value::Vector(go.frame_sums()));
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::Activation { x, kind } => {
                    let go = expect_tensor(&g)?;
                    let dx = self.tensor(*x)?.zip_map(go, |pre, gv| kind.derivative(pre) * gv);
                    accumulate(&mut grads, *x, Value::Tensor(dx));
                }
                Op::MeanAbsError { pred, target } => {
                    let seed = g.scalar().unwrap_or(0.0);
                    let p = self.tensor(*pred)?;
                    let n = p.len() as f64;
                    let dp = p.zip_map(target, |a, b| seed * sign(a - b) / n);
                    accumulate(&mut grads, *pred, Value::Tensor(dp));
                }
                Op::Sum(x) => {
                    let seed = g.scalar().unwrap_or(0.0);
                    let dx = self.tensor(*x)?.map(|_| seed);
                    accumulate(&mut grads, *x, Value::Tensor(dx));
                }
                Op::SumSquares(x) => {
                    let seed = g.scalar().unwrap_or(0.0);
                    let dx = self.tensor(*x)?.map(|v| 2.0 * v * seed);
                    accumulate(&mut grads, *x, Value::Tensor(dx));
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(grads: &mut [Option<Value>], v: Var, g: Value) {
    match &mut grads[v.0] {
        Some(existing) => existing.accumulate(&g),
        slot @ None => *slot = Some(g),
    }
}

fn expect_tensor(v: &Value) -> Result<&Tensor3> {
    match v {
        Value::Tensor(t) => Ok(t),
        other => Err(shape_err("adjoint", "tensor", kind_name(other))),
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Scalar(_) => "scalar",
        Value::Vector(_) => "vector",
        Value::Matrix(_) => "matrix",
        Value::Tensor(_) => "tensor",
    }
}
