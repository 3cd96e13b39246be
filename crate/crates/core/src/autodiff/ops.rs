use super::{
    accumulate, broadcast_offsets, broadcast_shape, lstm_backward, split_axis, Binary, Graph, Op,
    Unary, Var,
};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{invert_dense, matmul_into, matmul_nt_into, matmul_tn_into, Tensor};

/// The primitive operations, for callers that dispatch on an op tag.
#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOp {
    Add,
    Mul,
    MatMul,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Transpose,
    Sum,
    Mean,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    SoftmaxWithTemperature(f64),
    Conv1d,
}

fn expect_arity(op: &'static str, inputs: &[Var], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(shape_err(op, format!("expected {n} inputs, got {}", inputs.len())));
    }
    Ok(())
}

impl Graph<'_> {
    /// Applies a tagged primitive to `inputs`.
    pub fn apply(&mut self, op: &ForwardOp, inputs: &[Var]) -> Result<Var> {
        use ForwardOp::*;
        match *op {
            Add => {
                expect_arity("add", inputs, 2)?;
                self.add(inputs[0], inputs[1])
            }
            Mul => {
                expect_arity("mul", inputs, 2)?;
                self.mul(inputs[0], inputs[1])
            }
            MatMul => {
                expect_arity("matmul", inputs, 2)?;
                self.matmul(inputs[0], inputs[1])
            }
            Concat { axis } => self.concat(inputs, axis),
            Slice { axis, start, len } => {
                expect_arity("slice", inputs, 1)?;
                self.slice(inputs[0], axis, start, len)
            }
            Transpose => {
                expect_arity("transpose", inputs, 1)?;
                self.transpose(inputs[0])
            }
            Sum => {
                expect_arity("sum", inputs, 1)?;
                Ok(self.sum(inputs[0]))
            }
            Mean => {
                expect_arity("mean", inputs, 1)?;
                Ok(self.mean(inputs[0]))
            }
            Exp => {
                expect_arity("exp", inputs, 1)?;
                Ok(self.exp(inputs[0]))
            }
            Log => {
                expect_arity("log", inputs, 1)?;
                Ok(self.log(inputs[0]))
            }
            Tanh => {
                expect_arity("tanh", inputs, 1)?;
                Ok(self.tanh(inputs[0]))
            }
            Sigmoid => {
                expect_arity("sigmoid", inputs, 1)?;
                Ok(self.sigmoid(inputs[0]))
            }
            SoftmaxWithTemperature(t) => {
                expect_arity("softmax", inputs, 1)?;
                self.softmax(inputs[0], t)
            }
            Conv1d => {
                expect_arity("conv1d", inputs, 2)?;
                self.conv1d(inputs[0], inputs[1])
            }
        }
    }

    // ---- elementwise ----

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let x = self.value(a);
        let value = match kind {
            Unary::Neg => x.map(|v| -v),
            Unary::Scale(s) => x.map(|v| v * s),
            Unary::AddScalar(s) => x.map(|v| v + s),
            Unary::Exp => x.map(f64::exp),
            Unary::Log => x.map(f64::ln),
            Unary::Tanh => x.map(f64::tanh),
            Unary::Sigmoid => x.map(sigmoid),
            Unary::Square => x.map(|v| v * v),
            Unary::ClampMin(f) => x.map(|v| v.max(f)),
        };
        self.push(value, Op::Unary(kind, a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::Scale(s), a)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(Unary::AddScalar(s), a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    /// `max(a, floor)` elementwise; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(Unary::ClampMin(floor), a)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (xa, xb) = (self.value(a), self.value(b));
        let f = match kind {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
            Binary::Div => |x: f64, y: f64| x / y,
        };
        let value = if xa.shape() == xb.shape() {
            let data = xa.data().iter().zip(xb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(xa.shape().to_vec(), data)?
        } else {
            let name = match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
                Binary::Div => "div",
            };
            let out = broadcast_shape(xa.shape(), xb.shape()).ok_or_else(|| {
                shape_err(name, format!("cannot broadcast {:?} with {:?}", xa.shape(), xb.shape()))
            })?;
            let oa = broadcast_offsets(&out, xa.shape());
            let ob = broadcast_offsets(&out, xb.shape());
            let (da, db) = (xa.data(), xb.data());
            let data = oa.iter().zip(&ob).map(|(&i, &j)| f(da[i], db[j])).collect();
            Tensor::new(out, data)?
        };
        Ok(self.push(value, Op::Binary(kind, a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    // ---- reductions ----

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        let (outer, n, inner) = split_axis("sum_axis", x.shape(), axis)?;
        let mut out = vec![0.0; outer * inner];
        let d = x.data();
        for o in 0..outer {
            for k in 0..n {
                let src = &d[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (dst, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::SumAxis { input: a, axis }))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = *self
            .shape(a)
            .get(axis)
            .ok_or_else(|| shape_err("mean_axis", "axis out of range"))? as f64;
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(s, 1.0 / n))
    }

    // ---- structure ----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Reorders axes so that output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let rank = x.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err("permute", format!("{perm:?} is not a permutation of rank {rank}")));
        }
        let value = permute_tensor(x, perm);
        Ok(self.push(
            value,
            Op::Permute {
                input: a,
                perm: perm.to_vec(),
            },
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let rank = self.value(a).rank();
        if rank < 2 {
            return Err(shape_err("transpose", format!("rank {rank} < 2")));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 1, rank - 2);
        self.permute(a, &perm)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(shape_err(
                    "concat",
                    format!("{s:?} incompatible with {base:?} along axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let n = self.shape(p)[axis];
                let d = self.value(p).data();
                out.extend_from_slice(&d[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (outer, n, inner) = split_axis("slice", x.shape(), axis)?;
        if len == 0 || start + len > n {
            return Err(shape_err(
                "slice",
                format!("range {start}..{} out of bounds for axis {axis} of {:?}", start + len, x.shape()),
            ));
        }
        let d = x.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&d[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Slice { input: a, axis, start }))
    }

    /// Gathers rows (entries of axis 0); repeats are allowed.
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let n = x.shape()[0];
        if rows.is_empty() || rows.iter().any(|&r| r >= n) {
            return Err(shape_err("select_rows", format!("indices {rows:?} for {n} rows")));
        }
        let inner = x.len() / n;
        let mut out = Vec::with_capacity(rows.len() * inner);
        for &r in rows {
            out.extend_from_slice(&x.data()[r * inner..(r + 1) * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[0] = rows.len();
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::SelectRows {
                input: a,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Gathers elements by flat index into a vector.
    pub fn pick(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if index.is_empty() || index.iter().any(|&i| i >= x.len()) {
            return Err(shape_err("pick", format!("indices {index:?} for {} elements", x.len())));
        }
        let value = Tensor::vector(index.iter().map(|&i| x.data()[i]).collect());
        Ok(self.push(
            value,
            Op::Pick {
                input: a,
                index: index.to_vec(),
            },
        ))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Batched product of `B×m×k` and `B×k×n`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (xa, xb) = (self.value(a), self.value(b));
        let (bs, m, k, n) = match (xa.shape(), xb.shape()) {
            (&[b1, m, k], &[b2, k2, n]) if b1 == b2 && k == k2 => (b1, m, k, n),
            (sa, sb) => return Err(shape_err("batch_matmul", format!("{sa:?} x {sb:?}"))),
        };
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            matmul_into(
                &xa.data()[i * m * k..(i + 1) * m * k],
                &xb.data()[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let value = Tensor::new(vec![bs, m, n], out)?;
        Ok(self.push(value, Op::BatchMatMul(a, b)))
    }

    /// Inverts every trailing n×n matrix by elimination with partial pivoting.
    pub fn inverse(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let shape = x.shape();
        let r = shape.len();
        if r < 2 || shape[r - 1] != shape[r - 2] {
            return Err(shape_err("inverse", format!("expected trailing square dims, got {shape:?}")));
        }
        let n = shape[r - 1];
        let batches = x.len() / (n * n);
        let mut out = Vec::with_capacity(x.len());
        for i in 0..batches {
            let inv = invert_dense(&x.data()[i * n * n..(i + 1) * n * n], n)
                .ok_or(Error::Singular { index: i })?;
            out.extend(inv);
        }
        let value = Tensor::new(shape.to_vec(), out)?;
        Ok(self.push(value, Op::Inverse(a)))
    }

    /// Diagonals of the trailing n×n matrices.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let shape = x.shape();
        let r = shape.len();
        if r < 2 || shape[r - 1] != shape[r - 2] {
            return Err(shape_err("diag", format!("expected trailing square dims, got {shape:?}")));
        }
        let n = shape[r - 1];
        let batches = x.len() / (n * n);
        let mut out = Vec::with_capacity(batches * n);
        for b in 0..batches {
            for i in 0..n {
                out.push(x.data()[b * n * n + i * n + i]);
            }
        }
        let value = Tensor::new(shape[..r - 1].to_vec(), out)?;
        Ok(self.push(value, Op::Diag(a)))
    }

    // ---- neural primitives ----

    /// `softmax(temperature · a)` along the last axis.
    pub fn softmax(&mut self, a: Var, temperature: f64) -> Result<Var> {
        let x = self.value(a);
        let n = *x.shape().last().ok_or_else(|| shape_err("softmax", "scalar input"))?;
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            let m = row.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(temperature * v));
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (temperature * *v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Softmax { input: a, temperature }))
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let n = *x.shape().last().ok_or_else(|| shape_err("log_softmax", "scalar input"))?;
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(n) {
            let lse = log_sum_exp(row);
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LogSoftmax(a)))
    }

    /// Centered, zero-padded 1-D convolution of a length-L signal with
    /// `filters` (D×W), producing L×D.
    pub fn conv1d(&mut self, a: Var, filters: Var) -> Result<Var> {
        let (x, k) = (self.value(a), self.value(filters));
        if x.rank() != 1 {
            return Err(shape_err("conv1d", format!("input must be rank 1, got {:?}", x.shape())));
        }
        let (d, w) = k.dims2()?;
        let l = x.len();
        let half = w / 2;
        let mut out = vec![0.0; l * d];
        for t in 0..l {
            for j in 0..w {
                let src = t + j;
                if src < half || src - half >= l {
                    continue;
                }
                let xv = x.data()[src - half];
                for f in 0..d {
                    out[t * d + f] += k.data()[f * w + j] * xv;
                }
            }
        }
        let value = Tensor::new(vec![l, d], out)?;
        Ok(self.push(value, Op::Conv1d { input: a, filters }))
    }

    pub(crate) fn backprop_node(
        &self,
        id: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Unary(kind, a) => {
                let x = self.value(*a);
                let gd = g.data();
                let xd = x.data();
                let yd = out.data();
                let data: Vec<f64> = match *kind {
                    Unary::Neg => gd.iter().map(|v| -v).collect(),
                    Unary::Scale(s) => gd.iter().map(|v| v * s).collect(),
                    Unary::AddScalar(_) => gd.to_vec(),
                    Unary::Exp => gd.iter().zip(yd).map(|(g, y)| g * y).collect(),
                    Unary::Log => gd.iter().zip(xd).map(|(g, x)| g / x).collect(),
                    Unary::Tanh => gd.iter().zip(yd).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    Unary::Sigmoid => gd.iter().zip(yd).map(|(g, y)| g * y * (1.0 - y)).collect(),
                    Unary::Square => gd.iter().zip(xd).map(|(g, x)| 2.0 * g * x).collect(),
                    Unary::ClampMin(f) => gd
                        .iter()
                        .zip(xd)
                        .map(|(g, &x)| if x > f { *g } else { 0.0 })
                        .collect(),
                };
                accumulate(grads, *a, Tensor::new(x.shape().to_vec(), data)?);
            }
            Op::Binary(kind, a, b) => {
                let (xa, xb) = (self.value(*a), self.value(*b));
                let oa = broadcast_offsets(out.shape(), xa.shape());
                let ob = broadcast_offsets(out.shape(), xb.shape());
                let mut ga = vec![0.0; xa.len()];
                let mut gb = vec![0.0; xb.len()];
                let (da, db) = (xa.data(), xb.data());
                for (i, &gv) in g.data().iter().enumerate() {
                    let (ia, ib) = (oa[i], ob[i]);
                    match kind {
                        Binary::Add => {
                            ga[ia] += gv;
                            gb[ib] += gv;
                        }
                        Binary::Sub => {
                            ga[ia] += gv;
                            gb[ib] -= gv;
                        }
                        Binary::Mul => {
                            ga[ia] += gv * db[ib];
                            gb[ib] += gv * da[ia];
                        }
                        Binary::Div => {
                            ga[ia] += gv / db[ib];
                            gb[ib] -= gv * da[ia] / (db[ib] * db[ib]);
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(xa.shape().to_vec(), ga)?);
                accumulate(grads, *b, Tensor::new(xb.shape().to_vec(), gb)?);
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                accumulate(grads, *a, Tensor::full(x.shape(), g.item()));
            }
            Op::SumAxis { input, axis } => {
                let x = self.value(*input);
                let (outer, n, inner) = split_axis("sum_axis", x.shape(), *axis)?;
                let mut gx = vec![0.0; x.len()];
                for o in 0..outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for k in 0..n {
                        gx[(o * n + k) * inner..(o * n + k + 1) * inner].copy_from_slice(src);
                    }
                }
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), gx)?);
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                accumulate(grads, *a, g.clone().reshape(&shape)?);
            }
            Op::Permute { input, perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                accumulate(grads, *input, permute_tensor(g, &inv));
            }
            Op::Concat { parts, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis];
                let mut offset = 0;
                for &p in parts {
                    let ps = self.shape(p).to_vec();
                    let n = ps[*axis];
                    let mut gp = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        gp.extend_from_slice(&g.data()[base..base + n * inner]);
                    }
                    accumulate(grads, p, Tensor::new(ps, gp)?);
                    offset += n;
                }
            }
            Op::Slice { input, axis, start } => {
                let x = self.value(*input);
                let (outer, n, inner) = split_axis("slice", x.shape(), *axis)?;
                let len = out.shape()[*axis];
                let mut gx = vec![0.0; x.len()];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    gx[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), gx)?);
            }
            Op::SelectRows { input, rows } => {
                let x = self.value(*input);
                let inner = x.len() / x.shape()[0];
                let mut gx = vec![0.0; x.len()];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..inner {
                        gx[r * inner + j] += g.data()[i * inner + j];
                    }
                }
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), gx)?);
            }
            Op::Pick { input, index } => {
                let x = self.value(*input);
                let mut gx = vec![0.0; x.len()];
                for (i, &j) in index.iter().enumerate() {
                    gx[j] += g.data()[i];
                }
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), gx)?);
            }
            Op::MatMul(a, b) => {
                let (xa, xb) = (self.value(*a), self.value(*b));
                let (m, k) = xa.dims2()?;
                let n = xb.shape()[1];
                let mut ga = vec![0.0; m * k];
                matmul_nt_into(g.data(), xb.data(), &mut ga, m, n, k);
                let mut gb = vec![0.0; k * n];
                matmul_tn_into(xa.data(), g.data(), &mut gb, m, k, n);
                accumulate(grads, *a, Tensor::new(vec![m, k], ga)?);
                accumulate(grads, *b, Tensor::new(vec![k, n], gb)?);
            }
            Op::BatchMatMul(a, b) => {
                let (xa, xb) = (self.value(*a), self.value(*b));
                let (bs, m, k) = (xa.shape()[0], xa.shape()[1], xa.shape()[2]);
                let n = xb.shape()[2];
                let mut ga = vec![0.0; bs * m * k];
                let mut gb = vec![0.0; bs * k * n];
                for i in 0..bs {
                    let gi = &g.data()[i * m * n..(i + 1) * m * n];
                    matmul_nt_into(gi, &xb.data()[i * k * n..(i + 1) * k * n], &mut ga[i * m * k..(i + 1) * m * k], m, n, k);
                    matmul_tn_into(&xa.data()[i * m * k..(i + 1) * m * k], gi, &mut gb[i * k * n..(i + 1) * k * n], m, k, n);
                }
                accumulate(grads, *a, Tensor::new(xa.shape().to_vec(), ga)?);
                accumulate(grads, *b, Tensor::new(xb.shape().to_vec(), gb)?);
            }
            Op::Inverse(a) => {
                // d(A^{-1}) = -A^{-1} dA A^{-1}  =>  gA = -Bᵀ gB Bᵀ
                let shape = out.shape();
                let n = shape[shape.len() - 1];
                let batches = out.len() / (n * n);
                let mut ga = vec![0.0; out.len()];
                for i in 0..batches {
                    let bi = &out.data()[i * n * n..(i + 1) * n * n];
                    let gi = &g.data()[i * n * n..(i + 1) * n * n];
                    let mut tmp = vec![0.0; n * n];
                    matmul_tn_into(bi, gi, &mut tmp, n, n, n);
                    let mut res = vec![0.0; n * n];
                    matmul_nt_into(&tmp, bi, &mut res, n, n, n);
                    for (dst, v) in ga[i * n * n..(i + 1) * n * n].iter_mut().zip(res) {
                        *dst = -v;
                    }
                }
                accumulate(grads, *a, Tensor::new(shape.to_vec(), ga)?);
            }
            Op::Diag(a) => {
                let x = self.value(*a);
                let n = x.shape()[x.rank() - 1];
                let batches = x.len() / (n * n);
                let mut gx = vec![0.0; x.len()];
                for b in 0..batches {
                    for i in 0..n {
                        gx[b * n * n + i * n + i] = g.data()[b * n + i];
                    }
                }
                accumulate(grads, *a, Tensor::new(x.shape().to_vec(), gx)?);
            }
            Op::Softmax { input, temperature } => {
                let n = *out.shape().last().unwrap();
                let mut gx = vec![0.0; out.len()];
                for ((gr, yr), dst) in g
                    .data()
                    .chunks(n)
                    .zip(out.data().chunks(n))
                    .zip(gx.chunks_mut(n))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, gv), yv) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = temperature * yv * (gv - dot);
                    }
                }
                accumulate(grads, *input, Tensor::new(out.shape().to_vec(), gx)?);
            }
            Op::LogSoftmax(a) => {
                let n = *out.shape().last().unwrap();
                let mut gx = vec![0.0; out.len()];
                for ((gr, yr), dst) in g
                    .data()
                    .chunks(n)
                    .zip(out.data().chunks(n))
                    .zip(gx.chunks_mut(n))
                {
                    let total: f64 = gr.iter().sum();
                    for ((d, gv), yv) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = gv - yv.exp() * total;
                    }
                }
                accumulate(grads, *a, Tensor::new(out.shape().to_vec(), gx)?);
            }
            Op::Conv1d { input, filters } => {
                let (x, k) = (self.value(*input), self.value(*filters));
                let (d, w) = k.dims2()?;
                let l = x.len();
                let half = w / 2;
                let mut gx = vec![0.0; l];
                let mut gk = vec![0.0; d * w];
                for t in 0..l {
                    for j in 0..w {
                        let src = t + j;
                        if src < half || src - half >= l {
                            continue;
                        }
                        let s = src - half;
                        for f in 0..d {
                            let gv = g.data()[t * d + f];
                            gx[s] += gv * k.data()[f * w + j];
                            gk[f * w + j] += gv * x.data()[s];
                        }
                    }
                }
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), gx)?);
                accumulate(grads, *filters, Tensor::new(k.shape().to_vec(), gk)?);
            }
            Op::Lstm { inputs, cache } => {
                let [x, w, u, b] = *inputs;
                let (gx, gw, gu, gb) = lstm_backward(
                    cache,
                    g,
                    self.value(x),
                    self.value(w),
                    self.value(u),
                )?;
                accumulate(grads, x, gx);
                accumulate(grads, w, gw);
                accumulate(grads, u, gu);
                accumulate(grads, b, gb);
            }
            Op::Ctc { input, grad } => {
                let mut gx = grad.clone();
                gx.scale_in_place(g.item());
                accumulate(grads, *input, gx);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn permute_tensor(x: &Tensor, perm: &[usize]) -> Tensor {
    let shape = x.shape();
    let rank = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(x.data()[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Tensor::new(out_shape, out).expect("permutation preserves element count")
}
