use std::collections::BTreeMap;
use std::ops::Index;

use super::graph::{argmin_axis, Axis, Graph, Op, Var};
use super::{AutodiffError, Tensor};

/// Gradients keyed by the node they differentiate. The gradients are nodes of
/// the same graph, so they can be differentiated again.
#[derive(Clone, Debug, Default)]
pub struct GradMap {
    entries: BTreeMap<Var, Var>,
}

impl GradMap {
    pub fn get(&self, v: Var) -> Option<Var> {
        self.entries.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, Var)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }
}

impl Index<Var> for GradMap {
    type Output = Var;

    fn index(&self, v: Var) -> &Var {
        &self.entries[&v]
    }
}

impl Graph {
    /// Reverse-mode gradient of the scalar `output` with respect to each node in
    /// `wrt`. Nodes in `wrt` that `output` does not depend on get a zero constant.
    pub fn gradient(&mut self, output: Var, wrt: &[Var]) -> Result<GradMap, AutodiffError> {
        let out_shape = self.shape(output);
        if out_shape != [1, 1] {
            return Err(AutodiffError::NonScalarOutput { shape: out_shape });
        }
        let end = output.0 + 1;

        // Nodes on some path from a wrt node to the output.
        let mut depends = vec![false; end];
        for &w in wrt {
            if w.0 < end {
                depends[w.0] = true;
            }
        }
        let first = wrt.iter().map(|w| w.0).min().unwrap_or(end);
        for i in first..end {
            if !depends[i] && self.node(Var(i)).parents.iter().any(|p| depends[p.0]) {
                depends[i] = true;
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        if depends[output.0] {
            grads[output.0] = Some(self.constant(Tensor::scalar(1.0)));
        }
        for i in (first..end).rev() {
            if !depends[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let node = Var(i);
            let op = self.node(node).op.clone();
            let parents = self.node(node).parents.clone();
            if parents.is_empty() {
                continue;
            }
            let contributions = self.vjp(&op, node, &parents, g)?;
            for (p, c) in parents.iter().zip(contributions) {
                let Some(c) = c else { continue };
                if !depends[p.0] {
                    continue;
                }
                grads[p.0] = Some(match grads[p.0] {
                    Some(prev) => self.add(prev, c)?,
                    None => c,
                });
            }
        }

        let mut entries = BTreeMap::new();
        for &w in wrt {
            let g = match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let z = Tensor::zeros(self.shape(w));
                    self.constant(z)
                }
            };
            entries.insert(w, g);
        }
        Ok(GradMap { entries })
    }

    /// Differentiates `reduce(∇_inner output)` with respect to `outer`, where
    /// `reduce` maps the inner gradient node to a scalar node.
    pub fn second_gradient_with(
        &mut self,
        output: Var,
        inner_wrt: Var,
        outer_wrt: &[Var],
        reduce: impl FnOnce(&mut Graph, Var) -> Result<Var, AutodiffError>,
    ) -> Result<GradMap, AutodiffError> {
        let inner = self.gradient(output, &[inner_wrt])?[inner_wrt];
        let scalar = reduce(self, inner)?;
        self.gradient(scalar, outer_wrt)
    }

    /// Second-order gradient with the inner gradient reduced by summation. For a
    /// scalar `inner_wrt` this is the plain second derivative.
    pub fn second_gradient(
        &mut self,
        output: Var,
        inner_wrt: Var,
        outer_wrt: &[Var],
    ) -> Result<GradMap, AutodiffError> {
        self.second_gradient_with(output, inner_wrt, outer_wrt, |g, v| g.sum(v))
    }

    /// Mask constant with ones where `keep` holds.
    fn mask(&mut self, shape: [usize; 2], keep: impl Fn(usize) -> bool) -> Var {
        let data = (0..shape[0] * shape[1])
            .map(|i| if keep(i) { 1.0 } else { 0.0 })
            .collect();
        self.constant(Tensor::new(shape, data).expect("mask shape"))
    }

    /// Sum `g` down to `shape` (inverse of broadcast).
    fn reduce_to(&mut self, g: Var, shape: [usize; 2]) -> Result<Var, AutodiffError> {
        let gs = self.shape(g);
        if gs == shape {
            return Ok(g);
        }
        match (shape[0] == 1 && gs[0] != 1, shape[1] == 1 && gs[1] != 1) {
            (true, true) => self.sum(g),
            (true, false) => self.sum_axis(g, Axis::Rows),
            (false, true) => self.sum_axis(g, Axis::Cols),
            (false, false) => Err(AutodiffError::ShapeMismatch {
                op: "broadcast",
                shapes: vec![gs, shape],
            }),
        }
    }

    /// Vector-Jacobian products of `node` for each parent, built from graph ops.
    fn vjp(
        &mut self,
        op: &Op,
        node: Var,
        parents: &[Var],
        g: Var,
    ) -> Result<Vec<Option<Var>>, AutodiffError> {
        let one = |v| Ok(vec![Some(v)]);
        match *op {
            Op::Constant | Op::Parameter => Ok(vec![]),
            Op::Add => Ok(vec![Some(g), Some(g)]),
            Op::Sub => {
                let n = self.neg(g)?;
                Ok(vec![Some(g), Some(n)])
            }
            Op::Mul => {
                let (a, b) = (parents[0], parents[1]);
                let ga = self.mul(g, b)?;
                let gb = self.mul(g, a)?;
                Ok(vec![Some(ga), Some(gb)])
            }
            Op::Div => {
                let b = parents[1];
                let ga = self.div(g, b)?;
                // d(a/b)/db = -(a/b)/b
                let gy = self.mul(g, node)?;
                let q = self.div(gy, b)?;
                let gb = self.neg(q)?;
                Ok(vec![Some(ga), Some(gb)])
            }
            Op::Minimum => {
                let (a, b) = (parents[0], parents[1]);
                let shape = self.shape(a);
                let (va, vb) = (self.value(a).data().to_vec(), self.value(b).data().to_vec());
                let ma = self.mask(shape, |i| va[i] <= vb[i]);
                let mb = self.mask(shape, |i| va[i] > vb[i]);
                let ga = self.mul(g, ma)?;
                let gb = self.mul(g, mb)?;
                Ok(vec![Some(ga), Some(gb)])
            }
            Op::Neg => one(self.neg(g)?),
            Op::Scale(c) => one(self.scale(g, c)?),
            Op::Offset(_) => one(g),
            Op::MatMul { ta, tb } => {
                let (a, b) = (parents[0], parents[1]);
                let ga = if ta {
                    self.matmul_t(b, g, tb, true)?
                } else {
                    self.matmul_t(g, b, false, !tb)?
                };
                let gb = if tb {
                    self.matmul_t(g, a, true, ta)?
                } else {
                    self.matmul_t(a, g, !ta, false)?
                };
                Ok(vec![Some(ga), Some(gb)])
            }
            Op::Transpose => one(self.transpose(g)?),
            Op::Tanh => {
                // 1 - tanh²
                let sq = self.square(node)?;
                let neg = self.neg(sq)?;
                let d = self.offset(neg, 1.0)?;
                one(self.mul(g, d)?)
            }
            Op::Relu => {
                let x = parents[0];
                let shape = self.shape(x);
                let xv = self.value(x).data().to_vec();
                let m = self.mask(shape, |i| xv[i] > 0.0);
                one(self.mul(g, m)?)
            }
            Op::Clamp { lo, hi } => {
                let x = parents[0];
                let shape = self.shape(x);
                let xv = self.value(x).data().to_vec();
                let m = self.mask(shape, |i| xv[i] >= lo && xv[i] <= hi);
                one(self.mul(g, m)?)
            }
            Op::Exp => one(self.mul(g, node)?),
            Op::Log => one(self.div(g, parents[0])?),
            Op::Square => {
                let two_x = self.scale(parents[0], 2.0)?;
                one(self.mul(g, two_x)?)
            }
            Op::Sqrt => {
                let half = self.scale(g, 0.5)?;
                one(self.div(half, node)?)
            }
            Op::Sum => {
                let shape = self.shape(parents[0]);
                one(self.broadcast(g, shape)?)
            }
            Op::Mean => {
                let shape = self.shape(parents[0]);
                let n = (shape[0] * shape[1]) as f64;
                let s = self.scale(g, 1.0 / n)?;
                one(self.broadcast(s, shape)?)
            }
            Op::SumAxis(_) | Op::Broadcast => {
                let shape = self.shape(parents[0]);
                if matches!(op, Op::Broadcast) {
                    one(self.reduce_to(g, shape)?)
                } else {
                    one(self.broadcast(g, shape)?)
                }
            }
            Op::MinAxis(axis) => {
                let x = parents[0];
                let shape = self.shape(x);
                let (idx, _) = argmin_axis(self.value(x), axis);
                let cols = shape[1];
                let m = match axis {
                    Axis::Cols => self.mask(shape, |i| idx[i / cols] == i % cols),
                    Axis::Rows => self.mask(shape, |i| idx[i % cols] == i / cols),
                };
                let gb = self.broadcast(g, shape)?;
                one(self.mul(gb, m)?)
            }
            Op::Slice { axis, start, len } => {
                let shape = self.shape(parents[0]);
                let extent = match axis {
                    Axis::Rows => shape[0],
                    Axis::Cols => shape[1],
                };
                let block = |n: usize| match axis {
                    Axis::Rows => [n, shape[1]],
                    Axis::Cols => [shape[0], n],
                };
                let mut parts = Vec::with_capacity(3);
                if start > 0 {
                    parts.push(self.constant(Tensor::zeros(block(start))));
                }
                parts.push(g);
                let after = extent - start - len;
                if after > 0 {
                    parts.push(self.constant(Tensor::zeros(block(after))));
                }
                one(self.concat(&parts, axis)?)
            }
            Op::Concat(axis) => {
                let mut out = Vec::with_capacity(parents.len());
                let mut start = 0;
                for &p in parents {
                    let s = self.shape(p);
                    let len = match axis {
                        Axis::Rows => s[0],
                        Axis::Cols => s[1],
                    };
                    out.push(Some(self.slice(g, axis, start, len)?));
                    start += len;
                }
                Ok(out)
            }
        }
    }
}
