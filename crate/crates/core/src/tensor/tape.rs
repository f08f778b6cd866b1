use std::collections::BTreeMap;
use std::sync::Arc;

use super::{GradientMap, ParamStore, Scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone)]
enum Op<T> {
    Leaf,
    MatMul { ta: bool, tb: bool },
    Add,
    Sub,
    Mul,
    Scale(T),
    AddRowBias,
    SumRows,
    BroadcastRows,
    SumCols,
    BroadcastCols,
    Relu,
    GatherRows(Arc<[usize]>),
    ScatterRows(Arc<[usize]>),
    ConcatCols(usize),
    SliceCols { start: usize },
    PadCols { start: usize },
    Sum,
    BroadcastTo,
    LogSoftmax,
    Exp,
    Reshape,
}

struct Node<T> {
    op: Op<T>,
    inputs: Vec<Var>,
    value: Arc<Tensor<T>>,
    requires_grad: bool,
}

/// Named parameter handles registered on a tape.
#[derive(Debug, Clone, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var, TensorError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, var: Var) {
        self.vars.insert(name.into(), var);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// Ordered record of evaluated operations. Parents always precede children,
/// so a reverse sweep over node indices is a valid backward order.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<Var>, value: Tensor<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(op, inputs, Arc::new(value), requires_grad)
    }

    fn push_node(
        &mut self,
        op: Op<T>,
        inputs: Vec<Var>,
        value: Arc<Tensor<T>>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (no gradient flows into it).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_node(Op::Leaf, Vec::new(), Arc::new(value), false)
    }

    /// Records an unnamed differentiable leaf.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push_node(Op::Leaf, Vec::new(), Arc::new(value), true)
    }

    /// Records a named differentiable leaf that [`Tape::backward`] reports.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor<T>) -> Var {
        let v = self.variable(value);
        self.params.push((name.into(), v));
        v
    }

    pub fn register_params(&mut self, store: &ParamStore<T>) -> ParamVars {
        let mut vars = ParamVars::default();
        for (name, t) in store.iter() {
            let v = self.param(name, t.clone());
            vars.insert(name, v);
        }
        vars
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.matmul_t(a, false, b, false)
    }

    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var, TensorError> {
        let value = self.value(a).matmul_t(ta, self.value(b), tb)?;
        Ok(self.push(Op::MatMul { ta, tb }, vec![a, b], value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add, vec![a, b], value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub, vec![a, b], value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul, vec![a, b], value))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(c), vec![a], value)
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let value = self.value(x).add_row_bias(self.value(bias))?;
        Ok(self.push(Op::AddRowBias, vec![x, bias], value))
    }

    /// Affine layer `x · w + b` for `x` [P×in], `w` [in×out], `b` [out].
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let xw = self.matmul(x, w)?;
        self.add_row_bias(xw, b)
    }

    pub fn sum_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).sum_rows()?;
        Ok(self.push(Op::SumRows, vec![x], value))
    }

    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var, TensorError> {
        let value = self.value(x).broadcast_rows(rows)?;
        Ok(self.push(Op::BroadcastRows, vec![x], value))
    }

    pub fn sum_cols(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).sum_cols()?;
        Ok(self.push(Op::SumCols, vec![x], value))
    }

    pub fn broadcast_cols(&mut self, x: Var, cols: usize) -> Result<Var, TensorError> {
        let value = self.value(x).broadcast_cols(cols)?;
        Ok(self.push(Op::BroadcastCols, vec![x], value))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).relu();
        self.push(Op::Relu, vec![x], value)
    }

    /// Symmetric max-pool over the point axis. Returns the pooled [F] vector
    /// and the winning row of each feature.
    pub fn max_over_points(&mut self, x: Var) -> Result<(Var, Vec<usize>), TensorError> {
        let (_, argmax) = self.value(x).max_over_points()?;
        let pooled = self.gather_rows(x, argmax.clone().into())?;
        Ok((pooled, argmax))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var, TensorError> {
        let value = self.value(x).gather_rows(&idx)?;
        Ok(self.push(Op::GatherRows(idx), vec![x], value))
    }

    pub fn scatter_rows(&mut self, x: Var, idx: Arc<[usize]>, rows: usize) -> Result<Var, TensorError> {
        let value = self.value(x).scatter_rows(&idx, rows)?;
        Ok(self.push(Op::ScatterRows(idx), vec![x], value))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let left = self.value(a).dims2("concat_cols")?.1;
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(Op::ConcatCols(left), vec![a, b], value))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let value = self.value(x).slice_cols(start, end)?;
        Ok(self.push(Op::SliceCols { start }, vec![x], value))
    }

    pub fn pad_cols(&mut self, x: Var, start: usize, total: usize) -> Result<Var, TensorError> {
        let value = self.value(x).pad_cols(start, total)?;
        Ok(self.push(Op::PadCols { start }, vec![x], value))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = self.value(x).sum();
        self.push(Op::Sum, vec![x], value)
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).broadcast_to(shape)?;
        Ok(self.push(Op::BroadcastTo, vec![x], value))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).log_softmax_rows()?;
        Ok(self.push(Op::LogSoftmax, vec![x], value))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).exp();
        self.push(Op::Exp, vec![x], value)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape, vec![x], value))
    }

    /// Mean over points of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let (p, c) = self.value(logits).dims2("cross_entropy")?;
        let one_hot = one_hot::<T>(labels, p, c)?;
        let log_probs = self.log_softmax(logits)?;
        let mask = self.constant(one_hot);
        let picked = self.mul(log_probs, mask)?;
        let total = self.sum(picked);
        Ok(self.scale(total, -T::one() / T::lit(p as f64)))
    }

    /// Gradients of a scalar `loss` with respect to every registered
    /// parameter. Parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<GradientMap<T>, TensorError> {
        let seed = self.scalar_seed(loss)?;
        let mut backend = Numeric { tape: self };
        let grads = sweep(&mut backend, loss, Arc::new(seed))?;
        let mut out = GradientMap::new();
        for (name, v) in &self.params {
            let g = match &grads[v.0] {
                Some(g) => Tensor::clone(g),
                None => Tensor::zeros(self.value(*v).shape()),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    /// Gradients of `loss` with respect to arbitrary recorded values.
    pub fn gradients(&self, loss: Var, wrt: &[Var]) -> Result<Vec<Tensor<T>>, TensorError> {
        let seed = self.scalar_seed(loss)?;
        let mut backend = Numeric { tape: self };
        let grads = sweep(&mut backend, loss, Arc::new(seed))?;
        Ok(wrt
            .iter()
            .map(|v| match grads.get(v.0).and_then(|g| g.as_ref()) {
                Some(g) => Tensor::clone(g),
                None => Tensor::zeros(self.value(*v).shape()),
            })
            .collect())
    }

    /// Records the backward pass of `loss` on this tape and returns the
    /// gradient of each `wrt` value as a new differentiable node.
    pub fn grad_graph(&mut self, loss: Var, wrt: &[Var]) -> Result<Vec<Var>, TensorError> {
        let seed = self.scalar_seed(loss)?;
        let seed = self.constant(seed);
        let grads = {
            let mut backend = Graph { tape: self };
            sweep(&mut backend, loss, seed)?
        };
        Ok(wrt
            .iter()
            .map(|v| match grads.get(v.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Tensor::zeros(self.value(*v).shape());
                    self.constant(zeros)
                }
            })
            .collect())
    }

    fn scalar_seed(&self, loss: Var) -> Result<Tensor<T>, TensorError> {
        let value = self.value(loss);
        if !value.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: value.shape().to_vec(),
            });
        }
        Ok(Tensor::scalar(T::one()))
    }
}

pub(crate) fn one_hot<T: Scalar>(labels: &[usize], p: usize, c: usize) -> Result<Tensor<T>, TensorError> {
    if labels.len() != p {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            left: vec![p, c],
            right: vec![labels.len()],
        });
    }
    if p == 0 {
        return Err(TensorError::Empty { op: "cross_entropy" });
    }
    let mut data = vec![T::zero(); p * c];
    for (index, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(TensorError::LabelOutOfRange {
                index,
                label,
                classes: c,
            });
        }
        data[index * c + label] = T::one();
    }
    Tensor::new(vec![p, c], data)
}

/// Arithmetic the backward rules are written against. The numeric backend
/// evaluates them directly; the graph backend records them on the tape.
trait Backend<T: Scalar> {
    type H: Clone;

    fn node(&self, i: usize) -> (Op<T>, Vec<Var>);
    fn requires_grad(&self, v: Var) -> bool;
    fn primal(&self, v: Var) -> Arc<Tensor<T>>;
    /// Handle to a recorded value, usable as an operand.
    fn value(&mut self, v: Var) -> Self::H;
    fn constant(&mut self, t: Tensor<T>) -> Self::H;

    fn matmul(&mut self, a: &Self::H, ta: bool, b: &Self::H, tb: bool) -> Result<Self::H, TensorError>;
    fn add(&mut self, a: &Self::H, b: &Self::H) -> Result<Self::H, TensorError>;
    fn sub(&mut self, a: &Self::H, b: &Self::H) -> Result<Self::H, TensorError>;
    fn mul(&mut self, a: &Self::H, b: &Self::H) -> Result<Self::H, TensorError>;
    fn scale(&mut self, a: &Self::H, c: T) -> Self::H;
    fn sum_rows(&mut self, a: &Self::H) -> Result<Self::H, TensorError>;
    fn broadcast_rows(&mut self, a: &Self::H, rows: usize) -> Result<Self::H, TensorError>;
    fn sum_cols(&mut self, a: &Self::H) -> Result<Self::H, TensorError>;
    fn broadcast_cols(&mut self, a: &Self::H, cols: usize) -> Result<Self::H, TensorError>;
    fn gather_rows(&mut self, a: &Self::H, idx: &Arc<[usize]>) -> Result<Self::H, TensorError>;
    fn scatter_rows(&mut self, a: &Self::H, idx: &Arc<[usize]>, rows: usize) -> Result<Self::H, TensorError>;
    fn slice_cols(&mut self, a: &Self::H, start: usize, end: usize) -> Result<Self::H, TensorError>;
    fn pad_cols(&mut self, a: &Self::H, start: usize, total: usize) -> Result<Self::H, TensorError>;
    fn sum(&mut self, a: &Self::H) -> Self::H;
    fn broadcast_to(&mut self, a: &Self::H, shape: &[usize]) -> Result<Self::H, TensorError>;
    fn exp(&mut self, a: &Self::H) -> Self::H;
    fn reshape(&mut self, a: &Self::H, shape: &[usize]) -> Result<Self::H, TensorError>;
}

struct Numeric<'a, T> {
    tape: &'a Tape<T>,
}

impl<T: Scalar> Backend<T> for Numeric<'_, T> {
    type H = Arc<Tensor<T>>;

    fn node(&self, i: usize) -> (Op<T>, Vec<Var>) {
        let n = &self.tape.nodes[i];
        (n.op.clone(), n.inputs.clone())
    }
    fn requires_grad(&self, v: Var) -> bool {
        self.tape.nodes[v.0].requires_grad
    }
    fn primal(&self, v: Var) -> Arc<Tensor<T>> {
        self.tape.nodes[v.0].value.clone()
    }
    fn value(&mut self, v: Var) -> Self::H {
        self.primal(v)
    }
    fn constant(&mut self, t: Tensor<T>) -> Self::H {
        Arc::new(t)
    }
    fn matmul(&mut self, a: &Self::H, ta: bool, b: &Self::H, tb: bool) -> Result<Self::H, TensorError> {
        a.matmul_t(ta, b, tb).map(Arc::new)
    }
    fn add(&mut self, a: &Self::H, b: &Self::H) -> Result<Self::H, TensorError> {
        a.add(b).map(Arc::new)
    }
    fn sub(&mut self, a: &Self::H, b: &Self::H) -> Result<Self::H, TensorError> {
        a.sub(b).map(Arc::new)
    }
    fn mul(&mut self, a: &Self::H, b: &Self::H) -> Result<Self::H, TensorError> {
        a.mul(b).map(Arc::new)
    }
    fn scale(&mut self, a: &Self::H, c: T) -> Self::H {
        Arc::new(a.scale(c))
    }
    fn sum_rows(&mut self, a: &Self::H) -> Result<Self::H, TensorError> {
        a.sum_rows().map(Arc::new)
    }
    fn broadcast_rows(&mut self, a: &Self::H, rows: usize) -> Result<Self::H, TensorError> {
        a.broadcast_rows(rows).map(Arc::new)
    }
    fn sum_cols(&mut self, a: &Self::H) -> Result<Self::H, TensorError> {
        a.sum_cols().map(Arc::new)
    }
    fn broadcast_cols(&mut self, a: &Self::H, cols: usize) -> Result<Self::H, TensorError> {
        a.broadcast_cols(cols).map(Arc::new)
    }
    fn gather_rows(&mut self, a: &Self::H, idx: &Arc<[usize]>) -> Result<Self::H, TensorError> {
        a.gather_rows(idx).map(Arc::new)
    }
    fn scatter_rows(&mut self, a: &Self::H, idx: &Arc<[usize]>, rows: usize) -> Result<Self::H, TensorError> {
        a.scatter_rows(idx, rows).map(Arc::new)
    }
    fn slice_cols(&mut self, a: &Self::H, start: usize, end: usize) -> Result<Self::H, TensorError> {
        a.slice_cols(start, end).map(Arc::new)
    }
    fn pad_cols(&mut self, a: &Self::H, start: usize, total: usize) -> Result<Self::H, TensorError> {
        a.pad_cols(start, total).map(Arc::new)
    }
    fn sum(&mut self, a: &Self::H) -> Self::H {
        Arc::new(a.sum())
    }
    fn broadcast_to(&mut self, a: &Self::H, shape: &[usize]) -> Result<Self::H, TensorError> {
        a.broadcast_to(shape).map(Arc::new)
    }
    fn exp(&mut self, a: &Self::H) -> Self::H {
        Arc::new(a.exp())
    }
    fn reshape(&mut self, a: &Self::H, shape: &[usize]) -> Result<Self::H, TensorError> {
        a.reshape(shape).map(Arc::new)
    }
}

struct Graph<'a, T> {
    tape: &'a mut Tape<T>,
}

impl<T: Scalar> Backend<T> for Graph<'_, T> {
    type H = Var;

    fn node(&self, i: usize) -> (Op<T>, Vec<Var>) {
        let n = &self.tape.nodes[i];
        (n.op.clone(), n.inputs.clone())
    }
    fn requires_grad(&self, v: Var) -> bool {
        self.tape.nodes[v.0].requires_grad
    }
    fn primal(&self, v: Var) -> Arc<Tensor<T>> {
        self.tape.nodes[v.0].value.clone()
    }
    fn value(&mut self, v: Var) -> Var {
        v
    }
    fn constant(&mut self, t: Tensor<T>) -> Var {
        self.tape.constant(t)
    }
    fn matmul(&mut self, a: &Var, ta: bool, b: &Var, tb: bool) -> Result<Var, TensorError> {
        self.tape.matmul_t(*a, ta, *b, tb)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var, TensorError> {
        self.tape.add(*a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var, TensorError> {
        self.tape.sub(*a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var, TensorError> {
        self.tape.mul(*a, *b)
    }
    fn scale(&mut self, a: &Var, c: T) -> Var {
        self.tape.scale(*a, c)
    }
    fn sum_rows(&mut self, a: &Var) -> Result<Var, TensorError> {
        self.tape.sum_rows(*a)
    }
    fn broadcast_rows(&mut self, a: &Var, rows: usize) -> Result<Var, TensorError> {
        self.tape.broadcast_rows(*a, rows)
    }
    fn sum_cols(&mut self, a: &Var) -> Result<Var, TensorError> {
        self.tape.sum_cols(*a)
    }
    fn broadcast_cols(&mut self, a: &Var, cols: usize) -> Result<Var, TensorError> {
        self.tape.broadcast_cols(*a, cols)
    }
    fn gather_rows(&mut self, a: &Var, idx: &Arc<[usize]>) -> Result<Var, TensorError> {
        self.tape.gather_rows(*a, idx.clone())
    }
    fn scatter_rows(&mut self, a: &Var, idx: &Arc<[usize]>, rows: usize) -> Result<Var, TensorError> {
        self.tape.scatter_rows(*a, idx.clone(), rows)
    }
    fn slice_cols(&mut self, a: &Var, start: usize, end: usize) -> Result<Var, TensorError> {
        self.tape.slice_cols(*a, start, end)
    }
    fn pad_cols(&mut self, a: &Var, start: usize, total: usize) -> Result<Var, TensorError> {
        self.tape.pad_cols(*a, start, total)
    }
    fn sum(&mut self, a: &Var) -> Var {
        self.tape.sum(*a)
    }
    fn broadcast_to(&mut self, a: &Var, shape: &[usize]) -> Result<Var, TensorError> {
        self.tape.broadcast_to(*a, shape)
    }
    fn exp(&mut self, a: &Var) -> Var {
        self.tape.exp(*a)
    }
    fn reshape(&mut self, a: &Var, shape: &[usize]) -> Result<Var, TensorError> {
        self.tape.reshape(*a, shape)
    }
}

/// Reverse sweep from `loss` over nodes `0..=loss`. Returns the accumulated
/// gradient of every node that received one.
fn sweep<T: Scalar, B: Backend<T>>(
    b: &mut B,
    loss: Var,
    seed: B::H,
) -> Result<Vec<Option<B::H>>, TensorError> {
    let mut grads: Vec<Option<B::H>> = vec![None; loss.0 + 1];
    if !b.requires_grad(loss) {
        return Ok(grads);
    }
    grads[loss.0] = Some(seed);
    for i in (0..=loss.0).rev() {
        let (op, inputs) = b.node(i);
        if inputs.is_empty() {
            continue;
        }
        let Some(g) = grads[i].clone() else { continue };
        let needs: Vec<bool> = inputs.iter().map(|&v| b.requires_grad(v)).collect();
        let input_grads = vjp(b, &op, &inputs, Var(i), &g, &needs)?;
        for ((v, need), ig) in inputs.iter().zip(&needs).zip(input_grads) {
            let (true, Some(ig)) = (*need, ig) else { continue };
            grads[v.0] = Some(match grads[v.0].take() {
                None => ig,
                Some(prev) => b.add(&prev, &ig)?,
            });
        }
    }
    Ok(grads)
}

fn vjp<T: Scalar, B: Backend<T>>(
    b: &mut B,
    op: &Op<T>,
    inputs: &[Var],
    out: Var,
    g: &B::H,
    needs: &[bool],
) -> Result<Vec<Option<B::H>>, TensorError> {
    let need = |i: usize| needs.get(i).copied().unwrap_or(false);
    let grads = match op {
        Op::Leaf => Vec::new(),
        Op::MatMul { ta, tb } => {
            let x = b.value(inputs[0]);
            let y = b.value(inputs[1]);
            let (ga, gb) = match (ta, tb) {
                (false, false) => (
                    need(0).then(|| b.matmul(g, false, &y, true)).transpose()?,
                    need(1).then(|| b.matmul(&x, true, g, false)).transpose()?,
                ),
                (false, true) => (
                    need(0).then(|| b.matmul(g, false, &y, false)).transpose()?,
                    need(1).then(|| b.matmul(g, true, &x, false)).transpose()?,
                ),
                (true, false) => (
                    need(0).then(|| b.matmul(&y, false, g, true)).transpose()?,
                    need(1).then(|| b.matmul(&x, false, g, false)).transpose()?,
                ),
                (true, true) => (
                    need(0).then(|| b.matmul(&y, true, g, true)).transpose()?,
                    need(1).then(|| b.matmul(g, true, &x, true)).transpose()?,
                ),
            };
            vec![ga, gb]
        }
        Op::Add => vec![Some(g.clone()), Some(g.clone())],
        Op::Sub => vec![
            Some(g.clone()),
            need(1).then(|| b.scale(g, -T::one())),
        ],
        Op::Mul => {
            let ga = if need(0) {
                let y = b.value(inputs[1]);
                Some(b.mul(g, &y)?)
            } else {
                None
            };
            let gb = if need(1) {
                let x = b.value(inputs[0]);
                Some(b.mul(g, &x)?)
            } else {
                None
            };
            vec![ga, gb]
        }
        Op::Scale(c) => vec![Some(b.scale(g, *c))],
        Op::AddRowBias => vec![
            Some(g.clone()),
            need(1).then(|| b.sum_rows(g)).transpose()?,
        ],
        Op::SumRows => {
            let rows = b.primal(inputs[0]).shape()[0];
            vec![Some(b.broadcast_rows(g, rows)?)]
        }
        Op::BroadcastRows => vec![Some(b.sum_rows(g)?)],
        Op::SumCols => {
            let cols = b.primal(inputs[0]).shape()[1];
            vec![Some(b.broadcast_cols(g, cols)?)]
        }
        Op::BroadcastCols => vec![Some(b.sum_cols(g)?)],
        Op::Relu => {
            let mask = b.primal(inputs[0]).relu_mask();
            let mask = b.constant(mask);
            vec![Some(b.mul(g, &mask)?)]
        }
        Op::GatherRows(idx) => {
            let rows = b.primal(inputs[0]).shape()[0];
            vec![Some(b.scatter_rows(g, idx, rows)?)]
        }
        Op::ScatterRows(idx) => vec![Some(b.gather_rows(g, idx)?)],
        Op::ConcatCols(left) => {
            let total = b.primal(out).shape()[1];
            vec![
                need(0).then(|| b.slice_cols(g, 0, *left)).transpose()?,
                need(1).then(|| b.slice_cols(g, *left, total)).transpose()?,
            ]
        }
        Op::SliceCols { start } => {
            let total = b.primal(inputs[0]).shape()[1];
            vec![Some(b.pad_cols(g, *start, total)?)]
        }
        Op::PadCols { start } => {
            let width = b.primal(inputs[0]).shape()[1];
            vec![Some(b.slice_cols(g, *start, start + width)?)]
        }
        Op::Sum => {
            let shape = b.primal(inputs[0]).shape().to_vec();
            vec![Some(b.broadcast_to(g, &shape)?)]
        }
        Op::BroadcastTo => {
            let shape = b.primal(inputs[0]).shape().to_vec();
            let s = b.sum(g);
            vec![Some(b.reshape(&s, &shape)?)]
        }
        Op::LogSoftmax => {
            // dx = g - softmax(x) * rowsum(g); softmax(x) = exp(out)
            let cols = b.primal(out).shape()[1];
            let y = b.value(out);
            let probs = b.exp(&y);
            let row_sums = b.sum_cols(g)?;
            let spread = b.broadcast_cols(&row_sums, cols)?;
            let correction = b.mul(&probs, &spread)?;
            vec![Some(b.sub(g, &correction)?)]
        }
        Op::Exp => {
            let y = b.value(out);
            vec![Some(b.mul(g, &y)?)]
        }
        Op::Reshape => {
            let shape = b.primal(inputs[0]).shape().to_vec();
            vec![Some(b.reshape(g, &shape)?)]
        }
    };
    Ok(grads)
}
