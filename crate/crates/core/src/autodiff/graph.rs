use super::{AutodiffError, Tensor};

/// Handle to a node in a [`Graph`]. Only meaningful for the graph that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Reduce or index over rows (result has one row).
    Rows,
    /// Reduce or index over columns (result has one column).
    Cols,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Constant,
    Parameter,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    Offset(f64),
    MatMul {
        ta: bool,
        tb: bool,
    },
    Transpose,
    Tanh,
    Relu,
    Exp,
    Log,
    Square,
    Sqrt,
    Clamp {
        lo: f64,
        hi: f64,
    },
    Minimum,
    Sum,
    Mean,
    SumAxis(Axis),
    MinAxis(Axis),
    Broadcast,
    Slice {
        axis: Axis,
        start: usize,
        len: usize,
    },
    Concat(Axis),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Parameter => "parameter",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "divide",
            Op::Neg => "negate",
            Op::Scale(_) => "scale",
            Op::Offset(_) => "offset",
            Op::MatMul { .. } => "matmul",
            Op::Transpose => "transpose",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Clamp { .. } => "clamp",
            Op::Minimum => "minimum",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumAxis(_) => "sum-axis",
            Op::MinAxis(_) => "min-over-axis",
            Op::Broadcast => "broadcast",
            Op::Slice { .. } => "slice",
            Op::Concat(_) => "concat",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub parents: Vec<Var>,
    pub value: Tensor,
    pub requires_grad: bool,
}

/// Append-only computation graph with eager evaluation.
///
/// Every node's value is computed when the node is created, so node ids are a
/// topological order. Nodes are never mutated afterwards; new parameter values
/// go into a fresh graph.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Value of `root`. Values are computed at construction, so this only clones.
    pub fn evaluate(&self, root: Var) -> Tensor {
        self.nodes[root.0].value.clone()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, parents: Vec<Var>, value: Tensor) -> Result<Var, AutodiffError> {
        let requires_grad = match op {
            Op::Parameter => true,
            Op::Constant => false,
            _ => parents.iter().any(|p| self.nodes[p.0].requires_grad),
        };
        let id = self.nodes.len();
        let finite = value.all_finite();
        self.nodes.push(Node {
            op,
            parents,
            value,
            requires_grad,
        });
        if !finite {
            let path = self.path_to_leaf(Var(id));
            let node = self.nodes.pop().expect("just pushed");
            return Err(AutodiffError::NonFinite {
                op: node.op.name(),
                node: id,
                path,
            });
        }
        Ok(Var(id))
    }

    fn path_to_leaf(&self, mut v: Var) -> Vec<String> {
        let mut path = Vec::new();
        loop {
            let n = &self.nodes[v.0];
            path.push(format!("{}#{}", n.op.name(), v.0));
            match n.parents.first() {
                Some(p) if path.len() < 32 => v = *p,
                _ => break,
            }
        }
        path
    }

    /// Leaf that gradients never flow into unless it is listed explicitly in `wrt`.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, Vec::new(), value)
            .unwrap_or_else(|e| panic!("constant leaf: {e}"))
    }

    pub fn try_constant(&mut self, value: Tensor) -> Result<Var, AutodiffError> {
        self.push(Op::Constant, Vec::new(), value)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Trainable leaf.
    pub fn parameter(&mut self, value: Tensor) -> Var {
        self.push(Op::Parameter, Vec::new(), value)
            .unwrap_or_else(|e| panic!("parameter leaf: {e}"))
    }

    /// Constant copy of `x`'s current value; cuts the gradient path.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.nodes[x.0].value.clone();
        self.constant(v)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                shapes: vec![sa, sb],
            });
        }
        Ok(())
    }

    fn binary(
        &mut self,
        op: Op,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, AutodiffError> {
        self.same_shape(op.name(), a, b)?;
        let value = self.value(a).zip_map(self.value(b), f);
        self.push(op, vec![a, b], value)
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(f);
        self.push(op, vec![a], value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Op::Mul, a, b, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Op::Div, a, b, |x, y| x / y)
    }

    /// Element-wise minimum; ties resolve to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(Op::Minimum, a, b, |x, y| if x <= y { x } else { y })
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(Op::Neg, a, |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary(Op::Scale(c), a, |x| c * x)
    }

    /// `a + c` for a constant scalar `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary(Op::Offset(c), a, |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(Op::Relu, a, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(Op::Exp, a, f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(Op::Log, a, f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(Op::Square, a, |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(Op::Sqrt, a, f64::sqrt)
    }

    /// Clamp to `[lo, hi]`; gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        self.unary(Op::Clamp { lo, hi }, a, |x| x.clamp(lo, hi))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) · op(b)` where `ta`/`tb` select a transpose of the operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if Tensor::matmul_shape(sa, sb, ta, tb).is_none() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                shapes: vec![sa, sb],
            });
        }
        let value = self.value(a).matmul_t(self.value(b), ta, tb);
        self.push(Op::MatMul { ta, tb }, vec![a, b], value)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).transpose();
        self.push(Op::Transpose, vec![a], value)
    }

    /// Sum of all entries, `[1, 1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum, vec![a], value)
    }

    /// Mean of all entries, `[1, 1]`.
    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(Op::Mean, vec![a], value)
    }

    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        let [r, c] = t.shape();
        let value = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(t.row_slice(i)) {
                        *o += v;
                    }
                }
                Tensor::row(out)
            }
            Axis::Cols => Tensor::column((0..r).map(|i| t.row_slice(i).iter().sum()).collect()),
        };
        self.push(Op::SumAxis(axis), vec![a], value)
    }

    /// Minimum along `axis`. Ties go to the lowest index, which also receives
    /// the full gradient.
    pub fn min_axis(&mut self, a: Var, axis: Axis) -> Result<Var, AutodiffError> {
        let value = {
            let (_, vals) = argmin_axis(self.value(a), axis);
            match axis {
                Axis::Rows => Tensor::row(vals),
                Axis::Cols => Tensor::column(vals),
            }
        };
        self.push(Op::MinAxis(axis), vec![a], value)
    }

    /// Repeat a `[1,1]`, `[1,n]` or `[m,1]` tensor up to `shape`.
    pub fn broadcast(&mut self, a: Var, shape: [usize; 2]) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        let s = t.shape();
        let ok = (s[0] == shape[0] || s[0] == 1) && (s[1] == shape[1] || s[1] == 1);
        if !ok {
            return Err(AutodiffError::ShapeMismatch {
                op: "broadcast",
                shapes: vec![s, shape],
            });
        }
        if s == shape {
            return Ok(a);
        }
        let mut data = Vec::with_capacity(shape[0] * shape[1]);
        for i in 0..shape[0] {
            let si = if s[0] == 1 { 0 } else { i };
            for j in 0..shape[1] {
                let sj = if s[1] == 1 { 0 } else { j };
                data.push(t.get(si, sj));
            }
        }
        let value = Tensor::new(shape, data)?;
        self.push(Op::Broadcast, vec![a], value)
    }

    /// Contiguous block of `len` rows or columns starting at `start`.
    pub fn slice(
        &mut self,
        a: Var,
        axis: Axis,
        start: usize,
        len: usize,
    ) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        let [r, c] = t.shape();
        let extent = match axis {
            Axis::Rows => r,
            Axis::Cols => c,
        };
        if len == 0 || start + len > extent {
            return Err(AutodiffError::InvalidSlice {
                shape: [r, c],
                start,
                len,
            });
        }
        let value = match axis {
            Axis::Rows => Tensor::new([len, c], t.data()[start * c..(start + len) * c].to_vec())?,
            Axis::Cols => {
                let mut data = Vec::with_capacity(r * len);
                for i in 0..r {
                    data.extend_from_slice(&t.row_slice(i)[start..start + len]);
                }
                Tensor::new([r, len], data)?
            }
        };
        self.push(Op::Slice { axis, start, len }, vec![a], value)
    }

    /// Join along `axis`: `Rows` stacks vertically, `Cols` side by side.
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat",
                shapes: vec![],
            });
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let shapes: Vec<[usize; 2]> = parts.iter().map(|&p| self.shape(p)).collect();
        let (keep, _) = match axis {
            Axis::Rows => (1, 0),
            Axis::Cols => (0, 1),
        };
        if shapes.iter().any(|s| s[keep] != shapes[0][keep]) {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat",
                shapes,
            });
        }
        let value = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                let rows = shapes.iter().map(|s| s[0]).sum();
                Tensor::new([rows, shapes[0][1]], data)?
            }
            Axis::Cols => {
                let rows = shapes[0][0];
                let cols: usize = shapes.iter().map(|s| s[1]).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(i));
                    }
                }
                Tensor::new([rows, cols], data)?
            }
        };
        self.push(Op::Concat(axis), parts.to_vec(), value)
    }

    /// Row-wise dot product of two `[m, n]` tensors, `[m, 1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let p = self.mul(a, b)?;
        self.sum_axis(p, Axis::Cols)
    }
}

/// Index and value of the minimum along `axis`, lowest index on ties.
pub(crate) fn argmin_axis(t: &Tensor, axis: Axis) -> (Vec<usize>, Vec<f64>) {
    let [r, c] = t.shape();
    match axis {
        Axis::Cols => (0..r)
            .map(|i| {
                let row = t.row_slice(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v < row[best] {
                        best = j;
                    }
                }
                (best, row[best])
            })
            .unzip(),
        Axis::Rows => (0..c)
            .map(|j| {
                let mut best = 0;
                for i in 1..r {
                    if t.get(i, j) < t.get(best, j) {
                        best = i;
                    }
                }
                (best, t.get(best, j))
            })
            .unzip(),
    }
}
