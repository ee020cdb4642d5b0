//! The gradient tape.
//!
//! Operations are recorded in execution order, which is a valid topological
//! order, and [`Tape::backward`] walks that list once in reverse. Binary
//! elementwise operations broadcast any unit dimension against the other
//! operand; backward sums the gradient back over broadcast dimensions.

use std::cell::RefCell;

use crate::error::{GradError, Result};
use crate::linalg::{condition_1norm, Lu};
use crate::tensor::{gemm, Tensor};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Square(usize),
    Sqrt(usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Clamp(usize, f64, f64),
    ComplexAbs(usize, usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    SumCols(usize),
    SoftmaxRows(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    Mask(usize, Tensor),
    Solve { s: usize, c: usize, lu: Lu },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass. Not shared across threads.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value())
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; zeros when `var` is not on the loss path.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[var.id];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2], what: &str) -> Result<[usize; 2]> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        match (x, y) {
            _ if x == y => Some(x),
            (1, _) => Some(y),
            (_, 1) => Some(x),
            _ => None,
        }
    };
    match (dim(a[0], b[0]), dim(a[1], b[1])) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(GradError::Shape(format!("{what} of {}x{} and {}x{}", a[0], a[1], b[0], b[1]))),
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, shape: [usize; 2], f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == shape && b.shape() == shape {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(shape[0], shape[1], data).expect("shape");
    }
    let [ar, ac] = a.shape();
    let [br, bc] = b.shape();
    Tensor::from_fn(shape[0], shape[1], |r, c| {
        let x = a.get(if ar == 1 { 0 } else { r }, if ac == 1 { 0 } else { c });
        let y = b.get(if br == 1 { 0 } else { r }, if bc == 1 { 0 } else { c });
        f(x, y)
    })
}

/// Sums `g` over the dimensions that were broadcast up from `shape`.
fn reduce_to(g: Tensor, shape: [usize; 2]) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let mut out = Tensor::zeros(shape[0], shape[1]);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let rr = if shape[0] == 1 { 0 } else { r };
            let cc = if shape[1] == 1 { 0 } else { c };
            out.set(rr, cc, out.get(rr, cc) + g.get(r, c));
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A leaf that receives gradients.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn with_value<R>(&self, id: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }

    fn unary(&self, a: usize, f: impl Fn(f64) -> f64, op: Op) -> Var<'_> {
        let value = self.with_value(a, |x| x.map(f));
        self.push(value, op, self.rg(a))
    }

    fn binary(&self, a: usize, b: usize, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var<'_>> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a].value, &nodes[b].value);
            let shape = broadcast_shape(x.shape(), y.shape(), what)?;
            zip_broadcast(x, y, shape, f)
        };
        Ok(self.push(value, op, self.rg(a) || self.rg(b)))
    }

    /// `√(re² + im²)` elementwise; the gradient at zero magnitude is taken as 0.
    pub fn complex_abs<'t>(&'t self, re: Var<'t>, im: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[re.id].value, &nodes[im.id].value);
            if x.shape() != y.shape() {
                return Err(GradError::Shape(format!(
                    "complex magnitude of re {:?} and im {:?}",
                    x.shape(),
                    y.shape()
                )));
            }
            zip_broadcast(x, y, x.shape(), f64::hypot)
        };
        let rg = self.rg(re.id) || self.rg(im.id);
        Ok(self.push(value, Op::ComplexAbs(re.id, im.id), rg))
    }

    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        if parts.is_empty() {
            return Err(GradError::Empty("concat"));
        }
        let value = {
            let nodes = self.nodes.borrow();
            let cols = nodes[parts[0].id].value.cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let v = &nodes[p.id].value;
                if v.cols() != cols {
                    return Err(GradError::Shape(format!("row concat of widths {cols} and {}", v.cols())));
                }
                rows += v.rows();
                data.extend_from_slice(v.data());
            }
            Tensor::from_vec(rows, cols, data)?
        };
        let rg = parts.iter().any(|p| self.rg(p.id));
        Ok(self.push(value, Op::ConcatRows(parts.iter().map(|p| p.id).collect()), rg))
    }

    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        if parts.is_empty() {
            return Err(GradError::Empty("concat"));
        }
        let value = {
            let nodes = self.nodes.borrow();
            let rows = nodes[parts[0].id].value.rows();
            let mut cols = 0;
            for p in parts {
                let v = &nodes[p.id].value;
                if v.rows() != rows {
                    return Err(GradError::Shape(format!("column concat of heights {rows} and {}", v.rows())));
                }
                cols += v.cols();
            }
            let mut out = Tensor::zeros(rows, cols);
            let mut offset = 0;
            for p in parts {
                let v = &nodes[p.id].value;
                for r in 0..rows {
                    for c in 0..v.cols() {
                        out.set(r, offset + c, v.get(r, c));
                    }
                }
                offset += v.cols();
            }
            out
        };
        let rg = parts.iter().any(|p| self.rg(p.id));
        Ok(self.push(value, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), rg))
    }

    /// Solves `S X = C`. Backward uses the adjoint identity: with `Ḡ = S⁻ᵀ X̄`,
    /// `C̄ = Ḡ` and `S̄ = −Ḡ Xᵀ`.
    pub fn solve<'t>(&'t self, s: Var<'t>, c: Var<'t>) -> Result<Var<'t>> {
        let (value, lu) = {
            let nodes = self.nodes.borrow();
            let (sv, cv) = (&nodes[s.id].value, &nodes[c.id].value);
            let lu = match Lu::factor(sv) {
                Ok(lu) => lu,
                Err(GradError::Singular { .. }) => {
                    return Err(GradError::Singular { condition: condition_1norm(sv).max(1.0 / f64::EPSILON) })
                }
                Err(e) => return Err(e),
            };
            (lu.solve(cv)?, lu)
        };
        let rg = self.rg(s.id) || self.rg(c.id);
        Ok(self.push(value, Op::Solve { s: s.id, c: c.id, lu }, rg))
    }

    /// Reverse pass from a `1 x 1` loss.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let [rows, cols] = nodes[loss.id].value.shape();
        if rows != 1 || cols != 1 {
            return Err(GradError::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |i: usize| &nodes[i].value;
            let rg = |i: usize| nodes[i].requires_grad;
            let out = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    if rg(*a) {
                        accumulate(&mut grads, *a, reduce_to(g.clone(), val(*a).shape()));
                    }
                    if rg(*b) {
                        accumulate(&mut grads, *b, reduce_to(g, val(*b).shape()));
                    }
                }
                Op::Sub(a, b) => {
                    if rg(*a) {
                        accumulate(&mut grads, *a, reduce_to(g.clone(), val(*a).shape()));
                    }
                    if rg(*b) {
                        accumulate(&mut grads, *b, reduce_to(g.map(|v| -v), val(*b).shape()));
                    }
                }
                Op::Mul(a, b) => {
                    let shape = g.shape();
                    if rg(*a) {
                        let ga = zip_broadcast(&g, val(*b), shape, |g, y| g * y);
                        accumulate(&mut grads, *a, reduce_to(ga, val(*a).shape()));
                    }
                    if rg(*b) {
                        let gb = zip_broadcast(&g, val(*a), shape, |g, x| g * x);
                        accumulate(&mut grads, *b, reduce_to(gb, val(*b).shape()));
                    }
                }
                Op::Div(a, b) => {
                    let shape = g.shape();
                    if rg(*a) {
                        let ga = zip_broadcast(&g, val(*b), shape, |g, y| g / y);
                        accumulate(&mut grads, *a, reduce_to(ga, val(*a).shape()));
                    }
                    if rg(*b) {
                        // d(x/y)/dy = -(x/y)/y
                        let q = zip_broadcast(&g, out, shape, |g, o| -g * o);
                        let gb = zip_broadcast(&q, val(*b), shape, |q, y| q / y);
                        accumulate(&mut grads, *b, reduce_to(gb, val(*b).shape()));
                    }
                }
                Op::Neg(a) => accumulate(&mut grads, *a, g.map(|v| -v)),
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|v| v * f)),
                Op::Offset(a) => accumulate(&mut grads, *a, g),
                Op::MatMul(a, b) => {
                    if rg(*a) {
                        accumulate(&mut grads, *a, gemm(&g, val(*b), false, true));
                    }
                    if rg(*b) {
                        accumulate(&mut grads, *b, gemm(val(*a), &g, true, false));
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Square(a) => {
                    let ga = zip_broadcast(&g, val(*a), g.shape(), |g, x| 2.0 * g * x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sqrt(a) => {
                    let ga = zip_broadcast(&g, out, g.shape(), |g, o| if o > 0.0 { g / (2.0 * o) } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = zip_broadcast(&g, out, g.shape(), |g, o| g * o);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = zip_broadcast(&g, val(*a), g.shape(), |g, x| g / x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_broadcast(&g, out, g.shape(), |g, s| g * s * (1.0 - s));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_broadcast(&g, out, g.shape(), |g, t| g * (1.0 - t * t));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = zip_broadcast(&g, val(*a), g.shape(), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let ga = zip_broadcast(&g, val(*a), g.shape(), |g, x| if x >= lo && x <= hi { g } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::ComplexAbs(re, im) => {
                    let ratio = |part: &Tensor| {
                        let q = zip_broadcast(part, out, g.shape(), |p, o| if o > 0.0 { p / o } else { 0.0 });
                        zip_broadcast(&g, &q, g.shape(), |g, q| g * q)
                    };
                    if rg(*re) {
                        accumulate(&mut grads, *re, ratio(val(*re)));
                    }
                    if rg(*im) {
                        accumulate(&mut grads, *im, ratio(val(*im)));
                    }
                }
                Op::Sum(a) => {
                    let [r, c] = val(*a).shape();
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let [r, c] = val(*a).shape();
                    let n = (r * c).max(1) as f64;
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.item() / n));
                }
                Op::SumRows(a) | Op::SumCols(a) => {
                    let [r, c] = val(*a).shape();
                    let ga = zip_broadcast(&g, &Tensor::zeros(r, c), [r, c], |g, _| g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let [r, c] = out.shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        let dot: f64 = (0..c).map(|j| g.get(i, j) * out.get(i, j)).sum();
                        for j in 0..c {
                            ga.set(i, j, out.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let [r, c] = val(p).shape();
                        if rg(p) {
                            let slice = g.data()[offset * c..(offset + r) * c].to_vec();
                            accumulate(&mut grads, p, Tensor::from_vec(r, c, slice)?);
                        }
                        offset += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let [r, c] = val(p).shape();
                        if rg(p) {
                            let part = Tensor::from_fn(r, c, |i, j| g.get(i, offset + j));
                            accumulate(&mut grads, p, part);
                        }
                        offset += c;
                    }
                }
                Op::SliceRows(a, start) => {
                    let [r, c] = val(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let [r, c] = val(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            ga.set(i, start + j, g.get(i, j));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mask(a, mask) => {
                    let ga = zip_broadcast(&g, mask, g.shape(), |g, m| g * m);
                    accumulate(&mut grads, *a, reduce_to(ga, val(*a).shape()));
                }
                Op::Solve { s, c, lu } => {
                    let gc = lu.solve_transposed(&g)?;
                    if rg(*s) {
                        let gs = gemm(&gc, out, false, true).map(|v| -v);
                        accumulate(&mut grads, *s, gs);
                    }
                    if rg(*c) {
                        accumulate(&mut grads, *c, gc);
                    }
                }
            }
        }
        Ok(Gradients { grads, shapes: nodes.iter().map(|n| n.value.shape()).collect() })
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.with_value(self.id, Tensor::clone)
    }

    pub fn item(&self) -> f64 {
        self.tape.with_value(self.id, Tensor::item)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.with_value(self.id, Tensor::shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.rg(self.id)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.binary(self.id, other.id, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.binary(self.id, other.id, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.binary(self.id, other.id, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.binary(self.id, other.id, "div", |x, y| x / y, Op::Div(self.id, other.id))
    }

    pub fn neg(self) -> Var<'t> {
        self.tape.unary(self.id, |x| -x, Op::Neg(self.id))
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        self.tape.unary(self.id, |x| x * factor, Op::Scale(self.id, factor))
    }

    /// Adds a constant to every entry.
    pub fn offset(self, shift: f64) -> Var<'t> {
        self.tape.unary(self.id, |x| x + shift, Op::Offset(self.id))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.matmul(&nodes[other.id].value)?
        };
        let rg = self.tape.rg(self.id) || self.tape.rg(other.id);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn t(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, Tensor::transpose);
        self.tape.push(value, Op::Transpose(self.id), self.requires_grad())
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self.id, |x| x * x, Op::Square(self.id))
    }

    /// Square root; the gradient at zero is taken as 0.
    pub fn sqrt(self) -> Var<'t> {
        self.tape.unary(self.id, f64::sqrt, Op::Sqrt(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self.id, f64::exp, Op::Exp(self.id))
    }

    pub fn ln(self) -> Result<Var<'t>> {
        if self.tape.with_value(self.id, Tensor::is_empty) {
            return Err(GradError::Empty("log"));
        }
        Ok(self.tape.unary(self.id, f64::ln, Op::Log(self.id)))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.unary(self.id, sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unary(self.id, f64::tanh, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.tape.unary(self.id, |x| x.max(0.0), Op::Relu(self.id))
    }

    /// Clamps into `[lo, hi]`; no gradient flows from clamped entries.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.tape.unary(self.id, |x| x.clamp(lo, hi), Op::Clamp(self.id, lo, hi))
    }

    pub fn sum(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| Tensor::scalar(v.sum()));
        self.tape.push(value, Op::Sum(self.id), self.requires_grad())
    }

    pub fn mean(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| Tensor::scalar(v.sum() / v.len().max(1) as f64));
        self.tape.push(value, Op::Mean(self.id), self.requires_grad())
    }

    /// Sums over rows, giving a `1 x cols` row.
    pub fn sum_rows(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| {
            let mut out = Tensor::zeros(1, v.cols());
            for r in 0..v.rows() {
                for c in 0..v.cols() {
                    out.set(0, c, out.get(0, c) + v.get(r, c));
                }
            }
            out
        });
        self.tape.push(value, Op::SumRows(self.id), self.requires_grad())
    }

    /// Sums over columns, giving a `rows x 1` column.
    pub fn sum_cols(self) -> Var<'t> {
        let value = self
            .tape
            .with_value(self.id, |v| Tensor::from_fn(v.rows(), 1, |r, _| (0..v.cols()).map(|c| v.get(r, c)).sum()));
        self.tape.push(value, Op::SumCols(self.id), self.requires_grad())
    }

    /// Softmax of each row.
    pub fn softmax_rows(self) -> Result<Var<'t>> {
        let value = self.tape.with_value(self.id, |v| {
            if v.is_empty() {
                return Err(GradError::Empty("softmax"));
            }
            let mut out = v.clone();
            let c = v.cols();
            for row in out.data_mut().chunks_mut(c) {
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
            Ok(out)
        })?;
        Ok(self.tape.push(value, Op::SoftmaxRows(self.id), self.requires_grad()))
    }

    /// Elementwise product with a constant mask (no gradient flows into the mask).
    pub fn mask(self, mask: &Tensor) -> Result<Var<'t>> {
        let value = self.tape.with_value(self.id, |v| {
            let shape = broadcast_shape(v.shape(), mask.shape(), "mask")?;
            if shape != v.shape() {
                return Err(GradError::Shape(format!(
                    "mask {:?} would broadcast the masked tensor {:?}",
                    mask.shape(),
                    v.shape()
                )));
            }
            Ok(zip_broadcast(v, mask, shape, |x, m| x * m))
        })?;
        Ok(self.tape.push(value, Op::Mask(self.id, mask.clone()), self.requires_grad()))
    }

    /// Rows `start..end`.
    pub fn slice_rows(self, start: usize, end: usize) -> Result<Var<'t>> {
        let value = self.tape.with_value(self.id, |v| {
            if start > end || end > v.rows() {
                return Err(GradError::Shape(format!("row slice {start}..{end} of {} rows", v.rows())));
            }
            let c = v.cols();
            Tensor::from_vec(end - start, c, v.data()[start * c..end * c].to_vec())
        })?;
        Ok(self.tape.push(value, Op::SliceRows(self.id, start), self.requires_grad()))
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        let value = self.tape.with_value(self.id, |v| {
            if start > end || end > v.cols() {
                return Err(GradError::Shape(format!("column slice {start}..{end} of {} columns", v.cols())));
            }
            Ok(Tensor::from_fn(v.rows(), end - start, |r, c| v.get(r, start + c)))
        })?;
        Ok(self.tape.push(value, Op::SliceCols(self.id, start), self.requires_grad()))
    }

    /// `X` with `self · X = rhs`.
    pub fn solve(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.solve(self, rhs)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let w = tape.param(Tensor::scalar(3.0));
        let loss = w.square();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w).item(), 6.0);
    }

    #[test]
    fn sum_gives_ones_and_disconnected_gives_zero() {
        let tape = Tape::new();
        let p = tape.param(Tensor::from_fn(2, 3, |r, c| (r + c) as f64));
        let q = tape.param(Tensor::filled(4, 1, 2.0));
        let loss = p.sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(p), Tensor::filled(2, 3, 1.0));
        assert_eq!(g.wrt(q), Tensor::zeros(4, 1));
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::filled(2, 5, 7.5));
        let s = x.softmax_rows().unwrap().value();
        assert!(s.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn empty_softmax_and_log_fail() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(0, 3));
        assert_eq!(x.softmax_rows().unwrap_err(), GradError::Empty("softmax"));
        assert_eq!(x.ln().unwrap_err(), GradError::Empty("log"));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::zeros(2, 1));
        assert!(matches!(tape.backward(x), Err(GradError::NonScalarLoss { rows: 2, cols: 1 })));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let tape = Tape::new();
        let a = tape.param(Tensor::zeros(2, 3));
        let b = tape.param(Tensor::zeros(3, 2));
        assert!(matches!(a.add(b), Err(GradError::Shape(_))));
        assert!(matches!(a.matmul(a), Err(GradError::Shape(_))));
    }

    #[test]
    fn broadcast_gradient_sums() {
        let tape = Tape::new();
        let a = tape.param(Tensor::filled(3, 2, 1.0));
        let bias = tape.param(Tensor::row(vec![0.5, -0.5]));
        let loss = a.add(bias).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(bias), Tensor::row(vec![3.0, 3.0]));
    }

    #[test]
    fn singular_solve_errors() {
        let tape = Tape::new();
        let s = tape.param(Tensor::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap());
        let c = tape.constant(Tensor::column(vec![1.0, 2.0]));
        assert!(matches!(s.solve(c), Err(GradError::Singular { .. })));
    }

    #[test]
    fn complex_abs_subgradient_at_zero() {
        let tape = Tape::new();
        let re = tape.param(Tensor::row(vec![0.0, 3.0]));
        let im = tape.param(Tensor::row(vec![0.0, 4.0]));
        let loss = tape.complex_abs(re, im).unwrap().sum();
        assert_eq!(loss.item(), 5.0);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(re).data(), &[0.0, 0.6]);
        assert_eq!(g.wrt(im).data(), &[0.0, 0.8]);
    }
}
