use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, MatRef};
use super::{Gradients, ParamStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    /// `|x|`, with subgradient 0 at the kink.
    Abs,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Abs => x.abs(),
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl FromStr for Activation {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "abs" => Ok(Activation::Abs),
            _ => Err(TensorError::UnknownActivation(s.to_string())),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Abs => "abs",
        };
        f.write_str(s)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: usize, w: usize, b: usize },
    Act { kind: Activation, x: usize },
    ConcatCols { a: usize, b: usize },
    ConcatRows(Vec<usize>),
    SliceRows { x: usize, start: usize },
    SliceCols { x: usize, start: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulColumn { x: usize, col: usize },
    Scale { x: usize, factor: f64 },
    AddScalar { x: usize },
    Reshape { x: usize },
    ReduceSum { x: usize, axis: Option<usize> },
    SoftmaxRows { x: usize },
    Mse { pred: usize, target: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Dynamic record of one forward pass.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
/// A tape is rebuilt for every forward pass and supports a single backward
/// pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
    param_index: HashMap<String, Var>,
    consumed: bool,
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a named parameter from `store`. Repeated requests for the same
    /// name return the same node so its gradient accumulates in one place.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, TensorError> {
        if let Some(&v) = self.param_index.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?
            .clone();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.push((name.to_string(), v.0));
        self.param_index.insert(name.to_string(), v);
        Ok(v)
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize), TensorError> {
        let t = self.value(v);
        match t.shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(TensorError::Shape {
                op,
                detail: format!("expected a matrix, got shape {s:?}"),
            }),
        }
    }

    /// `x W + b`, row-wise.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (batch, inp) = self.matrix_dims(x, "linear")?;
        let (w_in, out) = self.matrix_dims(w, "linear")?;
        let b_shape = self.value(b).shape();
        if w_in != inp || b_shape != [out] {
            return Err(TensorError::Shape {
                op: "linear",
                detail: format!(
                    "x is [{batch}, {inp}], W is [{w_in}, {out}], b is {b_shape:?}"
                ),
            });
        }
        let bias = self.value(b).data();
        let mut data = Vec::with_capacity(batch * out);
        for _ in 0..batch {
            data.extend_from_slice(bias);
        }
        gemm(
            MatRef::new(self.value(x).data(), batch, inp),
            MatRef::new(self.value(w).data(), inp, out),
            1.0,
            &mut data,
        );
        let value = Tensor::new(vec![batch, out], data)?;
        Ok(self.push(value, Op::Linear { x: x.0, w: w.0, b: b.0 }, &[x.0, w.0, b.0]))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let value = self.value(x).map(|v| kind.apply(v));
        self.push(value, Op::Act { kind, x: x.0 }, &[x.0])
    }

    /// Columns of `a` followed by the columns of `b`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ra, ca) = self.matrix_dims(a, "concat")?;
        let (rb, cb) = self.matrix_dims(b, "concat")?;
        if ra != rb {
            return Err(TensorError::Shape {
                op: "concat",
                detail: format!("batch sizes {ra} and {rb} differ"),
            });
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(&da[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&db[i * cb..(i + 1) * cb]);
        }
        let value = Tensor::new(vec![ra, ca + cb], data)?;
        Ok(self.push(value, Op::ConcatCols { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// Stacks tensors along the first axis. Trailing dimensions must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::Shape {
            op: "concat_rows",
            detail: "no inputs".into(),
        })?;
        let tail = self.value(*first).shape().get(1..).unwrap_or(&[]).to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.rank() == 0 || t.shape()[1..] != tail[..] {
                return Err(TensorError::Shape {
                    op: "concat_rows",
                    detail: format!("shape {:?} does not stack with trailing {tail:?}", t.shape()),
                });
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let value = Tensor::new(shape, data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::ConcatRows(idx.clone()), &idx))
    }

    /// Rows `start..start + len` along the first axis.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        if t.rank() == 0 || start + len > t.shape()[0] {
            return Err(TensorError::Shape {
                op: "slice_rows",
                detail: format!("rows {start}..{} of {:?}", start + len, t.shape()),
            });
        }
        let c = t.cols();
        let mut shape = t.shape().to_vec();
        shape[0] = len;
        let value = Tensor::new(shape, t.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(value, Op::SliceRows { x: x.0, start }, &[x.0]))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (r, c) = self.matrix_dims(x, "slice_cols")?;
        if start + len > c {
            return Err(TensorError::Shape {
                op: "slice_cols",
                detail: format!("columns {start}..{} of {c}", start + len),
            });
        }
        let d = self.value(x).data();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&d[i * c + start..i * c + start + len]);
        }
        let value = Tensor::new(vec![r, len], data)?;
        Ok(self.push(value, Op::SliceCols { x: x.0, start }, &[x.0]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::Shape {
                op,
                detail: format!("{sa:?} vs {sb:?}"),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "add")?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "sub")?;
        let value = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "mul")?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    /// Scales row `i` of matrix `x` by `col[i]`.
    pub fn mul_column(&mut self, x: Var, col: Var) -> Result<Var, TensorError> {
        let (r, c) = self.matrix_dims(x, "mul_column")?;
        let cv = self.value(col);
        if cv.len() != r || cv.cols() > 1 {
            return Err(TensorError::Shape {
                op: "mul_column",
                detail: format!("cannot scale [{r}, {c}] rows by {:?}", cv.shape()),
            });
        }
        let s = cv.data();
        let xd = self.value(x).data();
        let data = (0..r * c).map(|k| xd[k] * s[k / c]).collect();
        let value = Tensor::new(vec![r, c], data)?;
        Ok(self.push(value, Op::MulColumn { x: x.0, col: col.0 }, &[x.0, col.0]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale { x: x.0, factor }, &[x.0])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar { x: x.0 }, &[x.0])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape { x: x.0 }, &[x.0]))
    }

    /// Sums along `axis`, or over every element when `axis` is `None`.
    pub fn reduce_sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        let t = self.value(x);
        let value = match axis {
            None => Tensor::scalar(t.sum()),
            Some(ax) => {
                if ax >= t.rank() {
                    return Err(TensorError::Axis {
                        axis: ax,
                        rank: t.rank(),
                    });
                }
                let (outer, n, inner) = split_axis(t.shape(), ax);
                let d = t.data();
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for k in 0..n {
                        let base = (o * n + k) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += d[base + i];
                        }
                    }
                }
                let mut shape = t.shape().to_vec();
                shape.remove(ax);
                Tensor::new(shape, out)?
            }
        };
        Ok(self.push(value, Op::ReduceSum { x: x.0, axis }, &[x.0]))
    }

    /// Row-wise softmax with max-shift. A rank-1 input is one row.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        if t.rank() == 0 || t.is_empty() {
            return Err(TensorError::Shape {
                op: "softmax",
                detail: format!("needs at least one score, got {:?}", t.shape()),
            });
        }
        let c = if t.rank() == 1 { t.len() } else { t.cols() };
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(value, Op::SoftmaxRows { x: x.0 }, &[x.0]))
    }

    /// Mean of squared differences, as a scalar.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.len() != t.len() || p.is_empty() {
            return Err(TensorError::Shape {
                op: "mse_loss",
                detail: format!("lengths {} and {}", p.len(), t.len()),
            });
        }
        let n = p.len() as f64;
        let mse = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let value = Tensor::scalar(mse);
        Ok(self.push(
            value,
            Op::Mse {
                pred: pred.0,
                target: target.0,
            },
            &[pred.0, target.0],
        ))
    }

    /// Propagates adjoints from the scalar `loss` back to every parameter
    /// recorded with [`Tape::param`]. Parameters the loss does not reach get
    /// zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, TensorError> {
        if self.consumed {
            return Err(TensorError::BackwardTwice);
        }
        let root = self.value(loss).shape().to_vec();
        if root.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(root));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(&root, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut out = BTreeMap::new();
        for (name, idx) in &self.params {
            let g = match grads.get_mut(*idx).and_then(Option::take) {
                Some(g) => g,
                None => Tensor::zeros(self.nodes[*idx].value.shape()),
            };
            out.insert(name.clone(), g);
        }
        Ok(Gradients::from_map(out))
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let wants = |i: usize| self.nodes[i].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xt = &self.nodes[*x].value;
                let wt = &self.nodes[*w].value;
                let (batch, inp) = (xt.shape()[0], xt.shape()[1]);
                let out = wt.shape()[1];
                if wants(*x) {
                    let mut dx = vec![0.0; batch * inp];
                    gemm(
                        MatRef::new(g.data(), batch, out),
                        MatRef::t(wt.data(), inp, out),
                        0.0,
                        &mut dx,
                    );
                    accumulate(grads, *x, Tensor::new(vec![batch, inp], dx).unwrap());
                }
                if wants(*w) {
                    let mut dw = vec![0.0; inp * out];
                    gemm(
                        MatRef::t(xt.data(), batch, inp),
                        MatRef::new(g.data(), batch, out),
                        0.0,
                        &mut dw,
                    );
                    accumulate(grads, *w, Tensor::new(vec![inp, out], dw).unwrap());
                }
                if wants(*b) {
                    let mut db = vec![0.0; out];
                    for row in g.data().chunks(out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(grads, *b, Tensor::vector(db));
                }
            }
            Op::Act { kind, x } => {
                let xv = self.nodes[*x].value.data();
                let yv = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(xv.iter().zip(yv))
                    .map(|(gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                    .collect();
                accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data).unwrap());
            }
            Op::ConcatCols { a, b } => {
                let ca = self.nodes[*a].value.shape()[1];
                let cb = self.nodes[*b].value.shape()[1];
                let rows = g.shape()[0];
                let (mut ga, mut gb) = (Vec::with_capacity(rows * ca), Vec::with_capacity(rows * cb));
                for row in g.data().chunks(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                if wants(*a) {
                    accumulate(grads, *a, Tensor::new(vec![rows, ca], ga).unwrap());
                }
                if wants(*b) {
                    accumulate(grads, *b, Tensor::new(vec![rows, cb], gb).unwrap());
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = &self.nodes[p].value;
                    let n = t.len();
                    if wants(p) {
                        let part = Tensor::new(t.shape().to_vec(), g.data()[offset..offset + n].to_vec());
                        accumulate(grads, p, part.unwrap());
                    }
                    offset += n;
                }
            }
            Op::SliceRows { x, start } => {
                let xt = &self.nodes[*x].value;
                let c = xt.cols();
                let mut dx = Tensor::zeros(xt.shape());
                dx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                accumulate(grads, *x, dx);
            }
            Op::SliceCols { x, start } => {
                let xt = &self.nodes[*x].value;
                let (r, c) = (xt.shape()[0], xt.shape()[1]);
                let len = g.shape()[1];
                let mut dx = Tensor::zeros(&[r, c]);
                let d = dx.data_mut();
                for i in 0..r {
                    d[i * c + start..i * c + start + len].copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                }
                accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                if wants(*a) {
                    accumulate(grads, *a, elementwise(g, bv, |x, y| x * y));
                }
                if wants(*b) {
                    accumulate(grads, *b, elementwise(g, av, |x, y| x * y));
                }
            }
            Op::MulColumn { x, col } => {
                let xv = &self.nodes[*x].value;
                let cv = &self.nodes[*col].value;
                let c = xv.shape()[1];
                if wants(*x) {
                    let s = cv.data();
                    let data = g.data().iter().enumerate().map(|(k, v)| v * s[k / c]).collect();
                    accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data).unwrap());
                }
                if wants(*col) {
                    let data = g
                        .data()
                        .chunks(c)
                        .zip(xv.data().chunks(c))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(grads, *col, Tensor::new(cv.shape().to_vec(), data).unwrap());
                }
            }
            Op::Scale { x, factor } => accumulate(grads, *x, g.map(|v| v * factor)),
            Op::AddScalar { x } => accumulate(grads, *x, g.clone()),
            Op::Reshape { x } => {
                let shape = self.nodes[*x].value.shape().to_vec();
                accumulate(grads, *x, g.clone().reshaped(shape).unwrap());
            }
            Op::ReduceSum { x, axis } => {
                let xt = &self.nodes[*x].value;
                let dx = match axis {
                    None => Tensor::filled(xt.shape(), g.data()[0]),
                    Some(ax) => {
                        let (outer, n, inner) = split_axis(xt.shape(), *ax);
                        let mut d = vec![0.0; xt.len()];
                        for o in 0..outer {
                            for k in 0..n {
                                let base = (o * n + k) * inner;
                                d[base..base + inner]
                                    .copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                            }
                        }
                        Tensor::new(xt.shape().to_vec(), d).unwrap()
                    }
                };
                accumulate(grads, *x, dx);
            }
            Op::SoftmaxRows { x } => {
                let y = &node.value;
                let c = if y.rank() == 1 { y.len() } else { y.cols() };
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    d.extend(yr.iter().zip(gr).map(|(yi, gi)| yi * (gi - dot)));
                }
                accumulate(grads, *x, Tensor::new(y.shape().to_vec(), d).unwrap());
            }
            Op::Mse { pred, target } => {
                let (p, t) = (&self.nodes[*pred].value, &self.nodes[*target].value);
                let scale = 2.0 * g.data()[0] / p.len() as f64;
                let diff: Vec<f64> = p.data().iter().zip(t.data()).map(|(a, b)| scale * (a - b)).collect();
                if wants(*target) {
                    let neg = diff.iter().map(|v| -v).collect();
                    accumulate(grads, *target, Tensor::new(t.shape().to_vec(), neg).unwrap());
                }
                if wants(*pred) {
                    accumulate(grads, *pred, Tensor::new(p.shape().to_vec(), diff).unwrap());
                }
            }
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
