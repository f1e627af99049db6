//! Tape-recorded computation graph with reverse-mode accumulation.
//!
//! Nodes are appended in evaluation order, so the tape is a topological order
//! by construction and backward is a single reverse sweep. Binary element-wise
//! ops broadcast numpy-style (right-aligned, size-1 axes stretch).

use super::array::{self, Array};
use super::NdiffError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Affine,
    MatMul,
    Concat,
    Sum,
    Mean,
    MinIndex,
    Relu,
    Sigmoid,
    Ln,
    Softmax,
    L2Norm,
    Detach,
    Slice,
    Reshape,
    Permute,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    MatMul(Var, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Sum { x: Var, axis: usize },
    Mean { x: Var, axis: usize },
    MinIndex(Var),
    Relu(Var),
    Sigmoid(Var),
    Ln { x: Var, floor: f64 },
    Softmax(Var),
    L2Norm(Var),
    Detach(Var),
    Slice { x: Var, axis: usize, start: usize },
    Reshape(Var),
    Permute { x: Var, axes: Vec<usize> },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Affine { .. } => OpKind::Affine,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Concat { .. } => OpKind::Concat,
            Op::Sum { .. } => OpKind::Sum,
            Op::Mean { .. } => OpKind::Mean,
            Op::MinIndex(_) => OpKind::MinIndex,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Ln { .. } => OpKind::Ln,
            Op::Softmax(_) => OpKind::Softmax,
            Op::L2Norm(_) => OpKind::L2Norm,
            Op::Detach(_) => OpKind::Detach,
            Op::Slice { .. } => OpKind::Slice,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Permute { .. } => OpKind::Permute,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Affine { x, .. }
            | Op::Sum { x, .. }
            | Op::Mean { x, .. }
            | Op::Ln { x, .. }
            | Op::Slice { x, .. }
            | Op::Permute { x, .. } => vec![*x],
            Op::MinIndex(x)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Softmax(x)
            | Op::L2Norm(x)
            | Op::Detach(x)
            | Op::Reshape(x) => vec![*x],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Array,
    requires_grad: bool,
    detached: bool,
}

#[derive(Default, Clone, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Array> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(), NdiffError> {
    if axis >= shape.len() {
        return Err(NdiffError::BadAxis {
            op,
            axis,
            shape: shape.to_vec(),
        });
    }
    Ok(())
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

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    /// Every node in evaluation order.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.nodes.len()).map(Var)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn inputs(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn is_detached(&self, v: Var) -> bool {
        self.nodes[v.0].detached
    }

    fn push(&mut self, op: Op, value: Array) -> Var {
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            detached: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: false,
            detached: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient [`Graph::backward`] reports.
    pub fn parameter(&mut self, value: Array) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: true,
            detached: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let v = array::broadcast_binary("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let v = array::broadcast_binary("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let v = array::broadcast_binary("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x).map(|t| scale * t + shift);
        self.push(Op::Affine { x, scale }, v)
    }

    /// Matrix product over the last two axes.
    ///
    /// Either `b` is a matrix `k×n` shared by every leading index of `a`
    /// (`[..., m, k] · [k, n]`), or both operands carry identical leading
    /// batch axes (`[..., m, k] · [..., k, n]`).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || NdiffError::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let k = sa[sa.len() - 1];
        let m = sa[sa.len() - 2];
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return Err(mismatch());
        }
        let mut out_shape = sa[..sa.len() - 1].to_vec();
        out_shape.push(n);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; out_shape.iter().product()];
        if sb.len() == 2 {
            let rows = av.len() / k.max(1);
            array::gemm(av, bv, &mut out, rows, k, n, false, false);
        } else {
            if sa[..sa.len() - 2] != sb[..sb.len() - 2] {
                return Err(mismatch());
            }
            let batch: usize = sa[..sa.len() - 2].iter().product();
            for i in 0..batch {
                array::gemm(
                    &av[i * m * k..(i + 1) * m * k],
                    &bv[i * k * n..(i + 1) * k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                    false,
                    false,
                );
            }
        }
        let value = array::from_parts(out_shape, out);
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NdiffError> {
        let first = inputs.first().ok_or(NdiffError::Invalid {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        check_axis("concat", &base, axis)?;
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(NdiffError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let n = self.shape(*v)[axis];
                data.extend_from_slice(&self.value(*v).data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let value = array::from_parts(shape, data);
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
        ))
    }

    /// Sum over `axis`, removing it.
    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var, NdiffError> {
        check_axis("sum", self.shape(x), axis)?;
        let v = array::sum_axis(self.value(x), axis);
        Ok(self.push(Op::Sum { x, axis }, v))
    }

    /// Mean over `axis`, removing it.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var, NdiffError> {
        check_axis("mean", self.shape(x), axis)?;
        let n = self.shape(x)[axis];
        if n == 0 {
            return Err(NdiffError::Invalid {
                op: "mean",
                detail: format!("empty axis {axis}"),
            });
        }
        let v = array::sum_axis(self.value(x), axis).map(|t| t / n as f64);
        Ok(self.push(Op::Mean { x, axis }, v))
    }

    /// One-hot indicator of the minimum along `axis` (ties to the lowest
    /// index). The result is piecewise constant and carries no gradient.
    pub fn min_index(&mut self, x: Var, axis: usize) -> Result<Var, NdiffError> {
        check_axis("min_index", self.shape(x), axis)?;
        let xv = self.value(x);
        let (outer, n, inner) = array::split_axis(xv.shape(), axis);
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * n + a) * inner + i;
                let mut best = 0;
                for a in 1..n {
                    if xv.data()[at(a)] < xv.data()[at(best)] {
                        best = a;
                    }
                }
                if n > 0 {
                    out[at(best)] = 1.0;
                }
            }
        }
        let value = array::from_parts(xv.shape().to_vec(), out);
        let v = self.push(Op::MinIndex(x), value);
        self.nodes[v.0].requires_grad = false;
        Ok(v)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|t| t.max(0.0));
        self.push(Op::Relu(x), v)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|t| 1.0 / (1.0 + (-t).exp()));
        self.push(Op::Sigmoid(x), v)
    }

    /// `ln(max(x, floor))`; entries at or below the floor get zero gradient.
    pub fn ln(&mut self, x: Var, floor: f64) -> Var {
        let v = self.value(x).map(|t| t.max(floor).ln());
        self.push(Op::Ln { x, floor }, v)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, NdiffError> {
        self.softmax_impl(x, None)
    }

    /// Softmax over the last axis restricted to entries where `mask` is
    /// nonzero. Masked entries output 0; a fully masked row outputs all 0.
    pub fn masked_softmax(&mut self, x: Var, mask: &Array) -> Result<Var, NdiffError> {
        if mask.shape() != self.shape(x) {
            return Err(NdiffError::ShapeMismatch {
                op: "masked_softmax",
                lhs: self.shape(x).to_vec(),
                rhs: mask.shape().to_vec(),
            });
        }
        self.softmax_impl(x, Some(mask))
    }

    fn softmax_impl(&mut self, x: Var, mask: Option<&Array>) -> Result<Var, NdiffError> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(NdiffError::BadAxis {
                op: "softmax",
                axis: 0,
                shape: Vec::new(),
            });
        }
        let n = xv.shape()[xv.rank() - 1];
        let mut out = vec![0.0; xv.len()];
        for (r, row) in xv.data().chunks(n.max(1)).enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m.data()[r * n + j] != 0.0);
            let max = (0..n)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for j in (0..n).filter(|&j| keep(j)) {
                let e = (row[j] - max).exp();
                out[r * n + j] = e;
                total += e;
            }
            for v in &mut out[r * n..(r + 1) * n] {
                *v /= total;
            }
        }
        let value = array::from_parts(xv.shape().to_vec(), out);
        Ok(self.push(Op::Softmax(x), value))
    }

    /// Euclidean norm over the last axis, removing it. The gradient at a zero
    /// vector is taken as zero.
    pub fn l2_norm(&mut self, x: Var) -> Result<Var, NdiffError> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(NdiffError::BadAxis {
                op: "l2_norm",
                axis: 0,
                shape: Vec::new(),
            });
        }
        let n = xv.shape()[xv.rank() - 1];
        let data = xv
            .data()
            .chunks(n.max(1))
            .map(|c| c.iter().map(|t| t * t).sum::<f64>().sqrt())
            .collect();
        let shape = xv.shape()[..xv.rank() - 1].to_vec();
        let value = array::from_parts(shape, data);
        Ok(self.push(Op::L2Norm(x), value))
    }

    /// Pass the value through while blocking all gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        let v = self.push(Op::Detach(x), value);
        let node = &mut self.nodes[v.0];
        node.requires_grad = false;
        node.detached = true;
        v
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, NdiffError> {
        let shape = self.shape(x).to_vec();
        check_axis("slice", &shape, axis)?;
        if start > end || end > shape[axis] {
            return Err(NdiffError::Invalid {
                op: "slice",
                detail: format!("range {start}..{end} outside axis {axis} of {shape:?}"),
            });
        }
        let (outer, n, inner) = array::split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * n + start) * inner..(o * n + end) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        let value = array::from_parts(out_shape, data);
        Ok(self.push(Op::Slice { x, axis, start }, value))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NdiffError> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), value))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, NdiffError> {
        let rank = self.shape(x).len();
        let mut seen = vec![false; rank];
        let valid = axes.len() == rank
            && axes.iter().all(|&a| a < rank && !std::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(NdiffError::Invalid {
                op: "permute",
                detail: format!("axes {axes:?} do not permute rank {rank}"),
            });
        }
        let value = array::permute(self.value(x), axes);
        Ok(self.push(
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            value,
        ))
    }

    /// Swap two axes.
    pub fn transpose(&mut self, x: Var, a: usize, b: usize) -> Result<Var, NdiffError> {
        let rank = self.shape(x).len();
        check_axis("transpose", self.shape(x), a.max(b))?;
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(a, b);
        self.permute(x, &axes)
    }

    /// Reverse sweep from a single-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients, NdiffError> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(NdiffError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array::full(rv.shape(), 1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (input, contribution) in self.local_grads(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node, g: &Array) -> Vec<(Var, Array)> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let bin = |f: fn(f64, f64) -> f64, a: &Array, b: &Array| {
            array::broadcast_binary("backward", a, b, f).expect("shapes validated in forward")
        };
        match &node.op {
            Op::Leaf | Op::MinIndex(_) | Op::Detach(_) => Vec::new(),
            Op::Add(a, b) => vec![
                (*a, array::reduce_to(g, val(a).shape())),
                (*b, array::reduce_to(g, val(b).shape())),
            ],
            Op::Sub(a, b) => vec![
                (*a, array::reduce_to(g, val(a).shape())),
                (*b, array::reduce_to(g, val(b).shape()).map(|t| -t)),
            ],
            Op::Mul(a, b) => vec![
                (*a, array::reduce_to(&bin(|x, y| x * y, g, val(b)), val(a).shape())),
                (*b, array::reduce_to(&bin(|x, y| x * y, g, val(a)), val(b).shape())),
            ],
            Op::Affine { x, scale } => vec![(*x, g.map(|t| t * scale))],
            Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (sa, sb) = (av.shape(), bv.shape());
                let k = sa[sa.len() - 1];
                let m = sa[sa.len() - 2];
                let n = sb[sb.len() - 1];
                let mut ga = vec![0.0; av.len()];
                let mut gb = vec![0.0; bv.len()];
                if sb.len() == 2 {
                    let rows = av.len() / k.max(1);
                    array::gemm(g.data(), bv.data(), &mut ga, rows, n, k, false, true);
                    array::gemm(av.data(), g.data(), &mut gb, k, rows, n, true, false);
                } else {
                    let batch = av.len() / (m * k).max(1);
                    for i in 0..batch {
                        let gi = &g.data()[i * m * n..(i + 1) * m * n];
                        let ai = &av.data()[i * m * k..(i + 1) * m * k];
                        let bi = &bv.data()[i * k * n..(i + 1) * k * n];
                        array::gemm(gi, bi, &mut ga[i * m * k..(i + 1) * m * k], m, n, k, false, true);
                        array::gemm(ai, gi, &mut gb[i * k * n..(i + 1) * k * n], k, m, n, true, false);
                    }
                }
                vec![
                    (*a, array::from_parts(sa.to_vec(), ga)),
                    (*b, array::from_parts(sb.to_vec(), gb)),
                ]
            }
            Op::Concat { inputs, axis } => {
                let shape = g.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis];
                let mut offset = 0;
                inputs
                    .iter()
                    .map(|v| {
                        let s = val(v).shape();
                        let n = s[*axis];
                        let mut data = Vec::with_capacity(val(v).len());
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            data.extend_from_slice(&g.data()[base..base + n * inner]);
                        }
                        offset += n;
                        (*v, array::from_parts(s.to_vec(), data))
                    })
                    .collect()
            }
            Op::Sum { x, axis } => {
                let n = val(x).shape()[*axis];
                vec![(*x, array::expand_axis(g, *axis, n, 1.0))]
            }
            Op::Mean { x, axis } => {
                let n = val(x).shape()[*axis];
                vec![(*x, array::expand_axis(g, *axis, n, 1.0 / n as f64))]
            }
            Op::Relu(x) => vec![(*x, bin(|gi, xi| if xi > 0.0 { gi } else { 0.0 }, g, val(x)))],
            Op::Sigmoid(x) => vec![(*x, bin(|gi, s| gi * s * (1.0 - s), g, &node.value))],
            Op::Ln { x, floor } => {
                let floor = *floor;
                let data = g
                    .data()
                    .iter()
                    .zip(val(x).data())
                    .map(|(&gi, &xi)| if xi > floor { gi / xi } else { 0.0 })
                    .collect();
                vec![(*x, array::from_parts(g.shape().to_vec(), data))]
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let n = y.shape()[y.rank() - 1].max(1);
                let mut out = vec![0.0; y.len()];
                for ((yr, gr), or) in y.data().chunks(n).zip(g.data().chunks(n)).zip(out.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yi), &gi) in or.iter_mut().zip(yr).zip(gr) {
                        *o = yi * (gi - dot);
                    }
                }
                vec![(*x, array::from_parts(y.shape().to_vec(), out))]
            }
            Op::L2Norm(x) => {
                let xv = val(x);
                let n = xv.shape()[xv.rank() - 1].max(1);
                let mut out = vec![0.0; xv.len()];
                for (r, (xr, or)) in xv.data().chunks(n).zip(out.chunks_mut(n)).enumerate() {
                    let norm = node.value.data()[r];
                    if norm > 0.0 {
                        let s = g.data()[r] / norm;
                        for (o, xi) in or.iter_mut().zip(xr) {
                            *o = s * xi;
                        }
                    }
                }
                vec![(*x, array::from_parts(xv.shape().to_vec(), out))]
            }
            Op::Slice { x, axis, start } => {
                let shape = val(x).shape();
                let (outer, n, inner) = array::split_axis(shape, *axis);
                let len = g.shape()[*axis];
                let mut data = vec![0.0; val(x).len()];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    data[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![(*x, array::from_parts(shape.to_vec(), data))]
            }
            Op::Reshape(x) => vec![(*x, array::from_parts(val(x).shape().to_vec(), g.data().to_vec()))],
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                vec![(*x, array::permute(g, &inverse))]
            }
        }
    }
}
