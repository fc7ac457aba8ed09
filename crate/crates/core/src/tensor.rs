//! Dense `f64` tensors and a reverse-mode differentiation graph.
//!
//! A [`Graph`] is an append-only arena of nodes. Leaves are inserted with
//! [`Graph::param`] (differentiable) or [`Graph::constant`]; every call to
//! [`Graph::apply`] evaluates one primitive eagerly and records it. Because
//! nodes are only ever appended, node order is a valid topological order and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! Shape rules per primitive:
//!
//! | primitive        | inputs              | output                        |
//! |------------------|---------------------|-------------------------------|
//! | `Add/Sub/Mul`    | two equal shapes    | same shape                    |
//! | `Scale(c)`       | any                 | same shape                    |
//! | `MatMul`         | `[m,k]`, `[k,n]`    | `[m,n]`                       |
//! | `Relu/Exp/Log`   | any                 | same shape                    |
//! | `ClampMin(lo)`   | any                 | same shape                    |
//! | `Sum`            | any                 | `[1]`                         |
//! | `SumAxis(a)`     | rank > a            | extent of axis `a` becomes 1  |
//! | `MaxAxis(a)`     | rank > a, extent ≥ 1| extent of axis `a` becomes 1  |
//! | `Broadcast(s)`   | same rank as `s`, each extent equal or 1 | `s`      |

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(
                "tensor",
                format!("extents must be positive, got {shape:?}"),
            ));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!(
                    "shape {shape:?} needs {expected} elements, got {}",
                    data.len()
                ),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// A rank-1 tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(vec![n, n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows of a rank-2 tensor (1 for vectors).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Number of columns of a rank-2 tensor (the length for vectors).
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor shape is never empty")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Stack equal-length rows into a `[rows, cols]` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::shape("from_rows", "no rows"));
        };
        let cols = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "from_rows",
                    format!("row {i} has {} columns, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    /// Gather rows by index into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= self.rows() {
                return Err(Error::shape(
                    "select_rows",
                    format!("row {i} out of range for {} rows", self.rows()),
                ));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::matrix(indices.len(), c, data)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrimitiveKind {
    Add,
    Sub,
    Mul,
    Scale(f64),
    MatMul,
    Relu,
    Exp,
    Log,
    ClampMin(f64),
    Sum,
    SumAxis(usize),
    MaxAxis(usize),
    Broadcast(Vec<usize>),
}

impl PrimitiveKind {
    fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Add => "add",
            PrimitiveKind::Sub => "sub",
            PrimitiveKind::Mul => "mul",
            PrimitiveKind::Scale(_) => "scale",
            PrimitiveKind::MatMul => "matmul",
            PrimitiveKind::Relu => "relu",
            PrimitiveKind::Exp => "exp",
            PrimitiveKind::Log => "log",
            PrimitiveKind::ClampMin(_) => "clamp_min",
            PrimitiveKind::Sum => "sum",
            PrimitiveKind::SumAxis(_) => "sum_axis",
            PrimitiveKind::MaxAxis(_) => "max_axis",
            PrimitiveKind::Broadcast(_) => "broadcast",
        }
    }

    fn arity(&self) -> usize {
        match self {
            PrimitiveKind::Add | PrimitiveKind::Sub | PrimitiveKind::Mul | PrimitiveKind::MatMul => 2,
            _ => 1,
        }
    }
}

/// Split a shape around `axis` into (outer, extent, inner) counts.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| f(x)).collect(),
    }
}

/// `[m,k] x [k,n]`, optionally transposing either operand in place.
fn matmul_raw(
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    a_t: bool,
    b_t: bool,
) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if a_t { a[p * m + i] } else { a[i * k + p] };
            if av == 0.0 {
                continue;
            }
            if b_t {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * b[j * k + p];
                }
            } else {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

fn broadcast_index_map(src: &[usize], dst: &[usize]) -> Vec<usize> {
    // src strides with zero stride on broadcast axes
    let rank = dst.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for ax in (0..rank).rev() {
        strides[ax] = if src[ax] == 1 { 0 } else { acc };
        acc *= src[ax];
    }
    let total: usize = dst.iter().product();
    let mut idx = vec![0usize; rank];
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        out.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < dst[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

fn argmax_along(t: &Tensor, axis: usize) -> Vec<usize> {
    let (outer, n, inner) = axis_split(&t.shape, axis);
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let mut best = 0;
            let mut best_v = t.data[o * n * inner + i];
            for k in 1..n {
                let v = t.data[(o * n + k) * inner + i];
                // strict comparison keeps the lowest index on ties
                if v > best_v {
                    best_v = v;
                    best = k;
                }
            }
            out.push(best);
        }
    }
    out
}

fn check_inputs(kind: &PrimitiveKind, inputs: &[&Tensor]) -> Result<()> {
    let op = kind.name();
    if inputs.len() != kind.arity() {
        return Err(Error::shape(
            op,
            format!("expected {} inputs, got {}", kind.arity(), inputs.len()),
        ));
    }
    match kind {
        PrimitiveKind::Add | PrimitiveKind::Sub | PrimitiveKind::Mul => {
            if inputs[0].shape != inputs[1].shape {
                return Err(Error::shape(
                    op,
                    format!("{:?} vs {:?}", inputs[0].shape, inputs[1].shape),
                ));
            }
        }
        PrimitiveKind::MatMul => {
            let (a, b) = (&inputs[0].shape, &inputs[1].shape);
            if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
                return Err(Error::shape(
                    op,
                    format!("cannot multiply {a:?} by {b:?}"),
                ));
            }
        }
        PrimitiveKind::SumAxis(axis) | PrimitiveKind::MaxAxis(axis) => {
            if *axis >= inputs[0].shape.len() {
                return Err(Error::shape(
                    op,
                    format!("axis {axis} out of range for {:?}", inputs[0].shape),
                ));
            }
        }
        PrimitiveKind::Broadcast(target) => {
            let src = &inputs[0].shape;
            let ok = src.len() == target.len()
                && src
                    .iter()
                    .zip(target)
                    .all(|(&s, &t)| t > 0 && (s == t || s == 1));
            if !ok {
                return Err(Error::shape(
                    op,
                    format!("cannot broadcast {src:?} to {target:?}"),
                ));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Evaluate one primitive on plain tensors. Inputs are never modified.
pub fn apply(kind: &PrimitiveKind, inputs: &[&Tensor]) -> Result<Tensor> {
    check_inputs(kind, inputs)?;
    let a = inputs[0];
    Ok(match kind {
        PrimitiveKind::Add => zip_map(a, inputs[1], |x, y| x + y),
        PrimitiveKind::Sub => zip_map(a, inputs[1], |x, y| x - y),
        PrimitiveKind::Mul => zip_map(a, inputs[1], |x, y| x * y),
        PrimitiveKind::Scale(c) => map(a, |x| x * c),
        PrimitiveKind::MatMul => {
            let b = inputs[1];
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            Tensor {
                shape: vec![m, n],
                data: matmul_raw(&a.data, &b.data, m, k, n, false, false),
            }
        }
        PrimitiveKind::Relu => map(a, |x| if x > 0.0 { x } else { 0.0 }),
        PrimitiveKind::Exp => map(a, f64::exp),
        PrimitiveKind::Log => map(a, f64::ln),
        PrimitiveKind::ClampMin(lo) => map(a, |x| if x < *lo { *lo } else { x }),
        PrimitiveKind::Sum => Tensor::scalar(a.data.iter().sum()),
        PrimitiveKind::SumAxis(axis) => {
            let (outer, n, inner) = axis_split(&a.shape, *axis);
            let mut data = vec![0.0; outer * inner];
            for o in 0..outer {
                for k in 0..n {
                    let src = &a.data[(o * n + k) * inner..(o * n + k + 1) * inner];
                    for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            let mut shape = a.shape.clone();
            shape[*axis] = 1;
            Tensor { shape, data }
        }
        PrimitiveKind::MaxAxis(axis) => {
            let (_, n, inner) = axis_split(&a.shape, *axis);
            let arg = argmax_along(a, *axis);
            let data = arg
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let (o, i) = (j / inner, j % inner);
                    a.data[(o * n + k) * inner + i]
                })
                .collect();
            let mut shape = a.shape.clone();
            shape[*axis] = 1;
            Tensor { shape, data }
        }
        PrimitiveKind::Broadcast(target) => {
            let map = broadcast_index_map(&a.shape, target);
            Tensor {
                shape: target.clone(),
                data: map.into_iter().map(|i| a.data[i]).collect(),
            }
        }
    })
}

/// Vector-Jacobian product: gradients for each input given the output
/// gradient `g`.
fn vjp(kind: &PrimitiveKind, inputs: &[&Tensor], out: &Tensor, g: &Tensor) -> Vec<Tensor> {
    let a = inputs[0];
    match kind {
        PrimitiveKind::Add => vec![g.clone(), g.clone()],
        PrimitiveKind::Sub => vec![g.clone(), map(g, |x| -x)],
        PrimitiveKind::Mul => vec![zip_map(g, inputs[1], |x, y| x * y), zip_map(g, a, |x, y| x * y)],
        PrimitiveKind::Scale(c) => vec![map(g, |x| x * c)],
        PrimitiveKind::MatMul => {
            let b = inputs[1];
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            let ga = matmul_raw(&g.data, &b.data, m, n, k, false, true);
            let gb = matmul_raw(&a.data, &g.data, k, m, n, true, false);
            vec![
                Tensor { shape: vec![m, k], data: ga },
                Tensor { shape: vec![k, n], data: gb },
            ]
        }
        PrimitiveKind::Relu => vec![zip_map(g, a, |x, v| if v > 0.0 { x } else { 0.0 })],
        PrimitiveKind::Exp => vec![zip_map(g, out, |x, e| x * e)],
        PrimitiveKind::Log => vec![zip_map(g, a, |x, v| x / v)],
        PrimitiveKind::ClampMin(lo) => {
            vec![zip_map(g, a, |x, v| if v < *lo { 0.0 } else { x })]
        }
        PrimitiveKind::Sum => vec![map(a, |_| g.data[0])],
        PrimitiveKind::SumAxis(_) => {
            let map = broadcast_index_map(&g.shape, &a.shape);
            vec![Tensor {
                shape: a.shape.clone(),
                data: map.into_iter().map(|i| g.data[i]).collect(),
            }]
        }
        PrimitiveKind::MaxAxis(axis) => {
            let (_, n, inner) = axis_split(&a.shape, *axis);
            let arg = argmax_along(a, *axis);
            let mut data = vec![0.0; a.data.len()];
            for (j, &k) in arg.iter().enumerate() {
                let (o, i) = (j / inner, j % inner);
                data[(o * n + k) * inner + i] = g.data[j];
            }
            vec![Tensor { shape: a.shape.clone(), data }]
        }
        PrimitiveKind::Broadcast(_) => {
            let map = broadcast_index_map(&a.shape, &g.shape);
            let mut data = vec![0.0; a.data.len()];
            for (gi, si) in map.into_iter().enumerate() {
                data[si] += g.data[gi];
            }
            vec![Tensor { shape: a.shape.clone(), data }]
        }
    }
}

/// Handle to a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Option<(PrimitiveKind, Vec<Var>)>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Option<(PrimitiveKind, Vec<Var>)>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, None)
    }

    /// A leaf treated as constant by [`Graph::backward`].
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, None)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn apply(&mut self, kind: PrimitiveKind, inputs: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = apply(&kind, &vals)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = requires_grad.then(|| (kind, inputs.to_vec()));
        Ok(self.push(out, requires_grad, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(PrimitiveKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(PrimitiveKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(PrimitiveKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(PrimitiveKind::Scale(c), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(PrimitiveKind::MatMul, &[a, b])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(PrimitiveKind::Relu, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(PrimitiveKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(PrimitiveKind::Log, &[a])
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        self.apply(PrimitiveKind::ClampMin(lo), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(PrimitiveKind::Sum, &[a])
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(PrimitiveKind::SumAxis(axis), &[a])
    }

    pub fn max_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(PrimitiveKind::MaxAxis(axis), &[a])
    }

    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if self.value(a).shape() == shape {
            return Ok(a);
        }
        self.apply(PrimitiveKind::Broadcast(shape.to_vec()), &[a])
    }

    /// Mean of all elements.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Gradients of the scalar `root` with respect to every node that
    /// requires a gradient. Nothing is stored on the graph, so calling this
    /// twice yields identical maps.
    pub fn backward(&self, root: Var) -> Result<GradientMap> {
        let root_val = &self.nodes[root.0].value;
        if root_val.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, got shape {:?}", root_val.shape),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        if !self.nodes[root.0].requires_grad {
            return Ok(GradientMap { grads });
        }
        grads[root.0] = Some(Tensor {
            shape: root_val.shape.clone(),
            data: vec![1.0],
        });
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            let Some((kind, inputs)) = &node.op else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = vjp(kind, &vals, &node.value, &g);
            grads[id] = Some(g);
            for (v, ig) in inputs.iter().zip(input_grads) {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => {
                        for (a, b) in acc.data.iter_mut().zip(&ig.data) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(ig),
                }
            }
        }
        Ok(GradientMap { grads })
    }
}

/// Gradients keyed by graph node.
#[derive(Debug, Clone)]
pub struct GradientMap {
    grads: Vec<Option<Tensor>>,
}

impl GradientMap {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like `like` when `v` did not
    /// influence the root.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor {
            shape: like.shape.clone(),
            data: vec![0.0; like.data.len()],
        })
    }
}

/// Central-difference gradient estimate `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let up = f(&probe)?;
        probe.data[i] = orig - h;
        let down = f(&probe)?;
        probe.data[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape.clone(), out)
}

/// Relative error used by the gradient checks: `|a-b| / max(1, |a|, |b|)`
/// taken as a maximum over coordinates.
pub fn max_relative_error(a: &Tensor, b: &Tensor) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
