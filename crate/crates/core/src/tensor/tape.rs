use super::{Result, Tensor, TensorError, NORM_EPS};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Relu,
    Sigmoid,
    Scale(f64),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary {
        kind: Binary,
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Unary(Unary, Var),
    Reduce {
        kind: Reduction,
        a: Var,
        outer: usize,
        extent: usize,
        inner: usize,
    },
    SafeNorm(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        smoothing: f64,
    },
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        widths: Vec<usize>,
    },
    GatherRows {
        a: Var,
        rows: Vec<usize>,
    },
    ScatterAddRows {
        a: Var,
        rows: Vec<usize>,
    },
    MulConst {
        a: Var,
        factors: Vec<f64>,
    },
    ChannelMix {
        v: Var,
        w: Var,
    },
    ScaleChannels {
        v: Var,
        g: Var,
    },
    LayerNorm {
        a: Var,
        inv_std: Vec<f64>,
    },
    VectorNorm {
        a: Var,
        denom: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Linear record of executed operations.
///
/// A tape and its values belong to one worker; build a fresh tape per
/// forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded operations, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every operation recorded after the first `len`. Handles to
    /// surviving entries stay valid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.grads.clear();
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a tensor; it takes part in differentiation iff `requires_grad` is set.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if numel(&shape) != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, p, q) = (sa[0], sa[1], sb[1]);
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * q];
        for i in 0..m {
            let row = &mut out[i * q..(i + 1) * q];
            for k in 0..p {
                let x = av[i * p + k];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[k * q..(k + 1) * q];
                for (o, &y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, q], out, Op::MatMul(a, b), rg))
    }

    /// Element-wise operation. Binary kinds require `b` with either the same
    /// shape as `a` or the shape of `a`'s trailing axis.
    pub fn elementwise(&mut self, op: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let binary = match op {
            Elementwise::Add => Some(Binary::Add),
            Elementwise::Sub => Some(Binary::Sub),
            Elementwise::Mul => Some(Binary::Mul),
            _ => None,
        };
        match (binary, b) {
            (Some(kind), Some(b)) => self.binary(kind, a, b),
            (Some(_), None) => Err(TensorError::InvalidArgument(format!(
                "{op:?} needs a second operand"
            ))),
            (None, _) => {
                let kind = match op {
                    Elementwise::Relu => Unary::Relu,
                    Elementwise::Sigmoid => Unary::Sigmoid,
                    Elementwise::Scale(c) => Unary::Scale(c),
                    _ => unreachable!(),
                };
                Ok(self.unary(kind, a))
            }
        }
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

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(Unary::Scale(c), a)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let broadcast = if sa == sb {
            false
        } else if sb.len() == 1 && sa.last() == Some(&sb[0]) {
            true
        } else {
            return Err(TensorError::ShapeMismatch {
                op: "elementwise",
                lhs: sa,
                rhs: sb,
            });
        };
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let w = bv.len().max(1);
        let out: Vec<f64> = av
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = if broadcast { bv[i % w] } else { bv[i] };
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            sa,
            out,
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            },
            rg,
        ))
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let out = av
            .iter()
            .map(|&x| match kind {
                Unary::Relu => x.max(0.0),
                Unary::Sigmoid => sigmoid(x),
                Unary::Scale(c) => c * x,
            })
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(shape, out, Op::Unary(kind, a), rg)
    }

    /// Sum or mean over `axis`, removing that extent.
    pub fn reduce(&mut self, kind: Reduction, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: shape.len(),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let extent = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let src = &av[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        if kind == Reduction::Mean && extent > 0 {
            let f = 1.0 / extent as f64;
            out.iter_mut().for_each(|x| *x *= f);
        }
        let mut new_shape = shape.clone();
        new_shape.remove(axis);
        let rg = self.rg(a);
        Ok(self.push(
            new_shape,
            out,
            Op::Reduce {
                kind,
                a,
                outer,
                extent,
                inner,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduction::Sum, a, axis)
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduction::Mean, a, axis)
    }

    /// Sum of every element as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        let flat = self.reshape(a, vec![n])?;
        self.sum(flat, 0)
    }

    /// Euclidean norm over a trailing axis of extent 3, `sqrt(|v|^2 + 1e-8)`.
    pub fn safe_norm(&mut self, v: Var) -> Result<Var> {
        let shape = self.shape(v).to_vec();
        if shape.last() != Some(&3) {
            return Err(TensorError::InvalidArgument(format!(
                "safe_norm expects a trailing axis of 3, got {shape:?}"
            )));
        }
        let out = self.nodes[v.0]
            .value
            .chunks_exact(3)
            .map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + NORM_EPS).sqrt())
            .collect();
        let rg = self.rg(v);
        Ok(self.push(shape[..shape.len() - 1].to_vec(), out, Op::SafeNorm(v), rg))
    }

    /// Mean label-smoothed cross-entropy of `logits [n, c]` against `targets`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        smoothing: f64,
    ) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() || shape[0] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: shape,
                rhs: vec![targets.len()],
            });
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(TensorError::InvalidArgument(format!(
                "label smoothing must lie in [0, 1), got {smoothing}"
            )));
        }
        let (n, c) = (shape[0], shape[1]);
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(TensorError::InvalidTarget {
                target: t,
                classes: c,
            });
        }
        let lv = &self.nodes[logits.0].value;
        let mut total = 0.0;
        for (row, &t) in lv.chunks_exact(c).zip(targets) {
            let lse = log_sum_exp(row);
            for (j, &z) in row.iter().enumerate() {
                let q = smoothing / c as f64 + if j == t { 1.0 - smoothing } else { 0.0 };
                total -= q * (z - lse);
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(
            vec![],
            vec![total / n as f64],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                smoothing,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let old = self.shape(a);
        if numel(old) != numel(&shape) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: old.to_vec(),
                rhs: shape,
            });
        }
        let value = self.nodes[a.0].value.clone();
        let rg = self.rg(a);
        Ok(self.push(shape, value, Op::Reshape(a), rg))
    }

    /// Concatenation along `axis`; every other extent must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*inputs.first().ok_or_else(|| {
                TensorError::InvalidArgument("concat of zero tensors".into())
            })?)
            .to_vec();
        if axis >= first.len() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: first.len(),
            });
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut total = 0;
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            let same = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !same {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
            widths.push(s[axis] * inner);
        }
        let row: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * row);
        for o in 0..outer {
            for (&v, &w) in inputs.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[v.0].value[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                widths,
            },
            rg,
        ))
    }

    /// Selects rows (first-axis slices) by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let n = *shape.first().ok_or(TensorError::AxisOutOfRange { axis: 0, rank: 0 })?;
        let w = if n == 0 { 0 } else { numel(&shape) / n };
        let av = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            if r >= n {
                return Err(TensorError::IndexOutOfRange { index: r, rows: n });
            }
            out.extend_from_slice(&av[r * w..(r + 1) * w]);
        }
        let mut new_shape = shape;
        new_shape[0] = rows.len();
        let rg = self.rg(a);
        Ok(self.push(
            new_shape,
            out,
            Op::GatherRows {
                a,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// `out[rows[e]] += a[e]` into a zero tensor with `out_rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, rows: &[usize], out_rows: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.first() != Some(&rows.len()) {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: shape,
                rhs: vec![rows.len()],
            });
        }
        let w = if rows.is_empty() { numel(&shape[1..]) } else { numel(&shape) / rows.len() };
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; out_rows * w];
        for (e, &r) in rows.iter().enumerate() {
            if r >= out_rows {
                return Err(TensorError::IndexOutOfRange {
                    index: r,
                    rows: out_rows,
                });
            }
            for (d, s) in out[r * w..(r + 1) * w].iter_mut().zip(&av[e * w..(e + 1) * w]) {
                *d += s;
            }
        }
        let mut new_shape = shape;
        new_shape[0] = out_rows;
        let rg = self.rg(a);
        Ok(self.push(
            new_shape,
            out,
            Op::ScatterAddRows {
                a,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Multiplies by fixed factors (masks, dropout). `factors` either matches
    /// `a` element-for-element or has one entry per row, broadcast over the
    /// rest of that row.
    pub fn mul_const(&mut self, a: Var, factors: &[f64]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let n = numel(&shape);
        let factors = if factors.len() == n {
            factors.to_vec()
        } else if !shape.is_empty() && factors.len() == shape[0] && shape[0] > 0 {
            let w = n / shape[0];
            factors
                .iter()
                .flat_map(|&f| std::iter::repeat_n(f, w))
                .collect()
        } else {
            return Err(TensorError::ShapeMismatch {
                op: "mul_const",
                lhs: shape,
                rhs: vec![factors.len()],
            });
        };
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&factors)
            .map(|(x, f)| x * f)
            .collect();
        let rg = self.rg(a);
        Ok(self.push(shape, out, Op::MulConst { a, factors }, rg))
    }

    /// Linear mixing of vector channels: `v [r, c, 3]`, `w [c, h]` -> `[r, h, 3]`.
    /// Acts on the channel axis only, so it commutes with rotations.
    pub fn channel_mix(&mut self, v: Var, w: Var) -> Result<Var> {
        let (sv, sw) = (self.shape(v).to_vec(), self.shape(w).to_vec());
        if sv.len() != 3 || sv[2] != 3 || sw.len() != 2 || sw[0] != sv[1] {
            return Err(TensorError::ShapeMismatch {
                op: "channel_mix",
                lhs: sv,
                rhs: sw,
            });
        }
        let (r, c, h) = (sv[0], sv[1], sw[1]);
        let vv = &self.nodes[v.0].value;
        let wv = &self.nodes[w.0].value;
        let mut out = vec![0.0; r * h * 3];
        for row in 0..r {
            let vin = &vv[row * c * 3..(row + 1) * c * 3];
            let vout = &mut out[row * h * 3..(row + 1) * h * 3];
            for ci in 0..c {
                let (x, y, z) = (vin[ci * 3], vin[ci * 3 + 1], vin[ci * 3 + 2]);
                for hi in 0..h {
                    let wt = wv[ci * h + hi];
                    vout[hi * 3] += wt * x;
                    vout[hi * 3 + 1] += wt * y;
                    vout[hi * 3 + 2] += wt * z;
                }
            }
        }
        let rg = self.rg(v) || self.rg(w);
        Ok(self.push(vec![r, h, 3], out, Op::ChannelMix { v, w }, rg))
    }

    /// Scales each vector channel by a scalar: `v [r, h, 3]`, `g [r, h]`.
    pub fn scale_channels(&mut self, v: Var, g: Var) -> Result<Var> {
        let (sv, sg) = (self.shape(v).to_vec(), self.shape(g).to_vec());
        if sv.len() != 3 || sv[2] != 3 || sg.len() != 2 || sg[0] != sv[0] || sg[1] != sv[1] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_channels",
                lhs: sv,
                rhs: sg,
            });
        }
        let gv = &self.nodes[g.0].value;
        let out = self.nodes[v.0]
            .value
            .chunks_exact(3)
            .zip(gv)
            .flat_map(|(c, &s)| [c[0] * s, c[1] * s, c[2] * s])
            .collect();
        let rg = self.rg(v) || self.rg(g);
        Ok(self.push(sv, out, Op::ScaleChannels { v, g }, rg))
    }

    /// Normalizes each row over the trailing axis to zero mean, unit variance.
    pub fn layer_norm(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let f = *shape.last().ok_or(TensorError::AxisOutOfRange { axis: 0, rank: 0 })?;
        let mut out = Vec::with_capacity(numel(&shape));
        let mut inv_std = Vec::new();
        if f > 0 {
            for row in self.nodes[a.0].value.chunks_exact(f) {
                let mu = row.iter().sum::<f64>() / f as f64;
                let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / f as f64;
                let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                out.extend(row.iter().map(|x| (x - mu) * is));
                inv_std.push(is);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(shape, out, Op::LayerNorm { a, inv_std }, rg))
    }

    /// Rescales vector channels `[r, c, 3]` so each row has unit RMS channel norm.
    pub fn vector_norm(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 3 || shape[2] != 3 {
            return Err(TensorError::InvalidArgument(format!(
                "vector_norm expects [rows, channels, 3], got {shape:?}"
            )));
        }
        let c = shape[1];
        let mut out = Vec::with_capacity(numel(&shape));
        let mut denom = Vec::with_capacity(shape[0]);
        if c > 0 {
            for row in self.nodes[a.0].value.chunks_exact(c * 3) {
                let sq = row.iter().map(|x| x * x).sum::<f64>() / c as f64;
                let d = (sq + NORM_EPS).sqrt();
                out.extend(row.iter().map(|x| x / d));
                denom.push(d);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(shape, out, Op::VectorNorm { a, denom }, rg))
    }

    /// Reverse-mode sweep from a scalar `loss`. Returns the number of
    /// recorded operations visited, which equals [`Tape::len`].
    pub fn backward(&mut self, loss: Var) -> Result<usize> {
        if numel(self.shape(loss)) != 1 || !self.shape(loss).is_empty() && self.shape(loss) != [1]
        {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        let mut visited = 0;
        for i in (0..self.nodes.len()).rev() {
            visited += 1;
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(visited)
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, p) = (self.shape(*a)[0], self.shape(*a)[1]);
                let q = self.shape(*b)[1];
                let av = self.value(*a);
                let bv = self.value(*b);
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..m {
                        let grow = &g[r * q..(r + 1) * q];
                        for k in 0..p {
                            let brow = &bv[k * q..(k + 1) * q];
                            ga[r * p + k] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for r in 0..m {
                        let grow = &g[r * q..(r + 1) * q];
                        for k in 0..p {
                            let x = av[r * p + k];
                            if x == 0.0 {
                                continue;
                            }
                            for (d, &y) in gb[k * q..(k + 1) * q].iter_mut().zip(grow) {
                                *d += x * y;
                            }
                        }
                    }
                }
            }
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let w = bv.len().max(1);
                let bi = |j: usize| if *broadcast { j % w } else { j };
                if let Some(ga) = self.acc(grads, *a) {
                    for (j, d) in ga.iter_mut().enumerate() {
                        *d += match kind {
                            Binary::Add | Binary::Sub => g[j],
                            Binary::Mul => g[j] * bv[bi(j)],
                        };
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for j in 0..g.len() {
                        gb[bi(j)] += match kind {
                            Binary::Add => g[j],
                            Binary::Sub => -g[j],
                            Binary::Mul => g[j] * av[j],
                        };
                    }
                }
            }
            Op::Unary(kind, a) => {
                let av = self.value(*a);
                let out = &node.value;
                if let Some(ga) = self.acc(grads, *a) {
                    for j in 0..g.len() {
                        ga[j] += match kind {
                            Unary::Relu => {
                                if av[j] > 0.0 {
                                    g[j]
                                } else {
                                    0.0
                                }
                            }
                            Unary::Sigmoid => g[j] * out[j] * (1.0 - out[j]),
                            Unary::Scale(c) => g[j] * c,
                        };
                    }
                }
            }
            Op::Reduce {
                kind,
                a,
                outer,
                extent,
                inner,
            } => {
                let f = match kind {
                    Reduction::Sum => 1.0,
                    Reduction::Mean => 1.0 / (*extent).max(1) as f64,
                };
                if let Some(ga) = self.acc(grads, *a) {
                    for o in 0..*outer {
                        let gs = &g[o * inner..(o + 1) * inner];
                        for e in 0..*extent {
                            let base = (o * extent + e) * inner;
                            for (d, s) in ga[base..base + inner].iter_mut().zip(gs) {
                                *d += f * s;
                            }
                        }
                    }
                }
            }
            Op::SafeNorm(v) => {
                let vv = self.value(*v);
                let out = &node.value;
                if let Some(gv) = self.acc(grads, *v) {
                    for (j, (&gj, &nj)) in g.iter().zip(out).enumerate() {
                        for x in 0..3 {
                            gv[j * 3 + x] += gj * vv[j * 3 + x] / nj;
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                smoothing,
            } => {
                let c = self.shape(*logits)[1];
                let n = targets.len() as f64;
                let lv = self.value(*logits);
                if let Some(gl) = self.acc(grads, *logits) {
                    for (r, (row, &t)) in lv.chunks_exact(c).zip(targets).enumerate() {
                        let lse = log_sum_exp(row);
                        for (j, &z) in row.iter().enumerate() {
                            let q = smoothing / c as f64 + if j == t { 1.0 - smoothing } else { 0.0 };
                            gl[r * c + j] += g[0] * ((z - lse).exp() - q) / n;
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (d, s) in ga.iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::Concat {
                inputs,
                outer,
                widths,
            } => {
                let row: usize = widths.iter().sum();
                let mut offset = 0;
                for (&v, &w) in inputs.iter().zip(widths) {
                    if let Some(gv) = self.acc(grads, v) {
                        for o in 0..*outer {
                            let src = &g[o * row + offset..o * row + offset + w];
                            for (d, s) in gv[o * w..(o + 1) * w].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::GatherRows { a, rows } => {
                let w = if rows.is_empty() { 0 } else { g.len() / rows.len() };
                if let Some(ga) = self.acc(grads, *a) {
                    for (e, &r) in rows.iter().enumerate() {
                        for (d, s) in ga[r * w..(r + 1) * w].iter_mut().zip(&g[e * w..(e + 1) * w]) {
                            *d += s;
                        }
                    }
                }
            }
            Op::ScatterAddRows { a, rows } => {
                let n = self.value(*a).len();
                let w = if rows.is_empty() { 0 } else { n / rows.len() };
                if let Some(ga) = self.acc(grads, *a) {
                    for (e, &r) in rows.iter().enumerate() {
                        for (d, s) in ga[e * w..(e + 1) * w].iter_mut().zip(&g[r * w..(r + 1) * w]) {
                            *d += s;
                        }
                    }
                }
            }
            Op::MulConst { a, factors } => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, s), f) in ga.iter_mut().zip(g).zip(factors) {
                        *d += s * f;
                    }
                }
            }
            Op::ChannelMix { v, w } => {
                let (r, c) = (self.shape(*v)[0], self.shape(*v)[1]);
                let h = self.shape(*w)[1];
                let vv = self.value(*v);
                let wv = self.value(*w);
                if let Some(gv) = self.acc(grads, *v) {
                    for row in 0..r {
                        let go = &g[row * h * 3..(row + 1) * h * 3];
                        for ci in 0..c {
                            let mut acc = [0.0; 3];
                            for hi in 0..h {
                                let wt = wv[ci * h + hi];
                                acc[0] += wt * go[hi * 3];
                                acc[1] += wt * go[hi * 3 + 1];
                                acc[2] += wt * go[hi * 3 + 2];
                            }
                            let base = (row * c + ci) * 3;
                            gv[base] += acc[0];
                            gv[base + 1] += acc[1];
                            gv[base + 2] += acc[2];
                        }
                    }
                }
                if let Some(gw) = self.acc(grads, *w) {
                    for row in 0..r {
                        let go = &g[row * h * 3..(row + 1) * h * 3];
                        let vin = &vv[row * c * 3..(row + 1) * c * 3];
                        for ci in 0..c {
                            let (x, y, z) = (vin[ci * 3], vin[ci * 3 + 1], vin[ci * 3 + 2]);
                            for hi in 0..h {
                                gw[ci * h + hi] += x * go[hi * 3] + y * go[hi * 3 + 1] + z * go[hi * 3 + 2];
                            }
                        }
                    }
                }
            }
            Op::ScaleChannels { v, g: gate } => {
                let vv = self.value(*v);
                let gvals = self.value(*gate);
                if let Some(gv) = self.acc(grads, *v) {
                    for (j, s) in gvals.iter().enumerate() {
                        for x in 0..3 {
                            gv[j * 3 + x] += g[j * 3 + x] * s;
                        }
                    }
                }
                if let Some(gg) = self.acc(grads, *gate) {
                    for (j, d) in gg.iter_mut().enumerate() {
                        *d += (0..3).map(|x| g[j * 3 + x] * vv[j * 3 + x]).sum::<f64>();
                    }
                }
            }
            Op::LayerNorm { a, inv_std } => {
                let f = *node.shape.last().unwrap_or(&0);
                let y = &node.value;
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, &is) in inv_std.iter().enumerate() {
                        let gy = &g[r * f..(r + 1) * f];
                        let yr = &y[r * f..(r + 1) * f];
                        let mean_g = gy.iter().sum::<f64>() / f as f64;
                        let mean_gy = gy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / f as f64;
                        for j in 0..f {
                            ga[r * f + j] += is * (gy[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                }
            }
            Op::VectorNorm { a, denom } => {
                let c = node.shape[1];
                let w = c * 3;
                let av = self.value(*a);
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, &d) in denom.iter().enumerate() {
                        let gy = &g[r * w..(r + 1) * w];
                        let vr = &av[r * w..(r + 1) * w];
                        let dot = gy.iter().zip(vr).map(|(a, b)| a * b).sum::<f64>();
                        let k = dot / (c as f64 * d * d * d);
                        for j in 0..w {
                            ga[r * w + j] += gy[j] / d - vr[j] * k;
                        }
                    }
                }
            }
        }
    }
}

/// Numerically stable `ln(sum(exp(row)))`.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}
