//! Operation catalog: forward kernels and their vector-Jacobian products.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub(crate) enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    AddScalar,
    MatMul,
    Transpose,
    Reshape,
    Sum,
    SumAxis { axis: usize },
    Relu,
    Sigmoid,
    Exp,
    Log,
    Sqrt,
    Clamp { min: f64, max: f64 },
    Softmax,
    LogSoftmax,
    Entmax15,
    StraightThrough,
    Concat { axis: usize },
    Slice { axis: usize, start: usize },
    Gather { ids: Vec<usize> },
    Conv2d { stride: usize, pad: usize },
    MaxPool2d { argmax: Vec<usize> },
    AvgPool2d { k: usize },
}

type Grads = Vec<Option<Vec<f64>>>;

// ---------------------------------------------------------------------------
// helpers

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let dim = |s: &[usize], i: usize| {
        if i + s.len() >= n {
            s[i + s.len() - n]
        } else {
            1
        }
    };
    (0..n)
        .map(|i| {
            let (da, db) = (dim(a, i), dim(b, i));
            if da == db || db == 1 {
                Ok(da)
            } else if da == 1 {
                Ok(db)
            } else {
                Err(Error::dim(op, format!("cannot broadcast {a:?} with {b:?}")))
            }
        })
        .collect()
}

/// For every flat index of `out`, the flat index into a tensor of shape
/// `src` broadcast against it. `None` when the shapes are identical.
fn index_map(src: &[usize], out: &[usize]) -> Option<Vec<usize>> {
    if src == out {
        return None;
    }
    let n = out.len();
    let off = n - src.len();
    let mut stride = vec![0usize; n];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        stride[i + off] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let total: usize = out.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..n).rev() {
            idx[d] += 1;
            cur += stride[d];
            if idx[d] < out[d] {
                break;
            }
            cur -= stride[d] * out[d];
            idx[d] = 0;
        }
    }
    Some(map)
}

#[inline]
fn at(map: &Option<Vec<usize>>, i: usize) -> usize {
    match map {
        Some(m) => m[i],
        None => i,
    }
}

/// C[m,n] = A[m,k] · B[k,n] + beta·C. `ta`/`tb` mean the operand is
/// stored transposed (A as [k,m], B as [n,k]).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe in-bounds row-major
    // (or transposed row-major) layouts of exactly those extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_axis(op: &'static str, t: &Tensor) -> Result<usize> {
    match t.shape().last() {
        Some(&d) if d > 0 => Ok(d),
        _ => Err(Error::dim(op, format!("needs a non-empty last axis, got {:?}", t.shape()))),
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

/// Exact 1.5-entmax of one row via the sorted-threshold algorithm.
pub(crate) fn entmax15_row(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x: Vec<f64> = z.iter().map(|v| (v - max) / 2.0).collect();
    let mut sorted = x.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (mut cs, mut cs2) = (0.0, 0.0);
    let mut tau_star = sorted[0] - 1.0;
    for (i, &s) in sorted.iter().enumerate() {
        let k = (i + 1) as f64;
        cs += s;
        cs2 += s * s;
        let mean = cs / k;
        let ss = k * (cs2 / k - mean * mean);
        let delta = ((1.0 - ss) / k).max(0.0);
        let tau = mean - delta.sqrt();
        if tau <= s {
            tau_star = tau;
        } else {
            break;
        }
    }
    for (o, v) in out.iter_mut().zip(&x) {
        let t = (v - tau_star).max(0.0);
        *o = t * t;
    }
}

fn im2col(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (ho, wo): (usize, usize),
    col: &mut [f64],
) {
    let hw = ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(
    col: &[f64],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (ho, wo): (usize, usize),
    dx: &mut [f64],
) {
    let hw = ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &col[row * hw..(row + 1) * hw];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dx[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

// ---------------------------------------------------------------------------
// forward API

impl Tensor {
    fn binary(&self, other: &Tensor, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let shape = broadcast_shape(name, self.shape(), other.shape())?;
        let ma = index_map(self.shape(), &shape);
        let mb = index_map(other.shape(), &shape);
        let n: usize = shape.iter().product();
        let data = {
            let (a, b) = (self.data(), other.data());
            (0..n).map(|i| f(a[at(&ma, i)], b[at(&mb, i)])).collect()
        };
        Ok(Tensor::from_op(data, shape, op, vec![self.clone(), other.clone()]))
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data().iter().map(|&v| f(v)).collect();
        Tensor::from_op(data, self.shape().to_vec(), op, vec![self.clone()])
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Add, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Sub, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Mul, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Div, "div", |a, b| a / b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.unary(Op::Scale(s), |v| v * s)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        self.unary(Op::AddScalar, |v| v + s)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn square(&self) -> Tensor {
        self.mul(self).expect("same shape")
    }

    /// `[m,k]·[k,n]`, batched `[b,m,k]·[b,k,n]`, or `[b,m,k]·[k,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        let bad = || Error::dim("matmul", format!("incompatible shapes {sa:?} and {sb:?}"));
        let (batch, m, k, n, shared_b) = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => (1, sa[0], sa[1], sb[1], true),
            (3, 2) if sa[2] == sb[0] => (1, sa[0] * sa[1], sa[2], sb[1], true),
            (3, 3) if sa[0] == sb[0] && sa[2] == sb[1] => (sa[0], sa[1], sa[2], sb[2], false),
            _ => return Err(bad()),
        };
        let mut out = vec![0.0; batch * m * n];
        {
            let (a, b) = (self.data(), other.data());
            for bi in 0..batch {
                let bb = if shared_b { &b[..] } else { &b[bi * k * n..(bi + 1) * k * n] };
                gemm(
                    m,
                    k,
                    n,
                    &a[bi * m * k..(bi + 1) * m * k],
                    false,
                    bb,
                    false,
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    0.0,
                );
            }
        }
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        Ok(Tensor::from_op(out, shape, Op::MatMul, vec![self.clone(), other.clone()]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() < 2 {
            return Err(Error::dim("transpose", format!("needs ≥2 dims, got {s:?}")));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let batch = self.numel() / (r * c).max(1);
        let d = self.data();
        let mut out = vec![0.0; d.len()];
        for b in 0..batch {
            let (src, dst) = (&d[b * r * c..], &mut out[b * r * c..(b + 1) * r * c]);
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
        drop(d);
        let mut shape = s.to_vec();
        let l = shape.len();
        shape.swap(l - 2, l - 1);
        Ok(Tensor::from_op(out, shape, Op::Transpose, vec![self.clone()]))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::dim(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape()),
            ));
        }
        Ok(Tensor::from_op(self.to_vec(), shape.to_vec(), Op::Reshape, vec![self.clone()]))
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(vec![s], vec![], Op::Sum, vec![self.clone()])
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums out `axis` (the axis is removed from the shape).
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.ndim() {
            return Err(Error::dim("sum_axis", format!("axis {axis} out of range for {:?}", self.shape())));
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let d = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &d[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (acc, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        drop(d);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_op(out, shape, Op::SumAxis { axis }, vec![self.clone()]))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::dim("mean_axis", format!("axis {axis} out of range for {:?}", self.shape())))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / len.max(1) as f64))
    }

    pub fn relu(&self) -> Tensor {
        self.unary(Op::Relu, |v| v.max(0.0))
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(Op::Sigmoid, sigmoid)
    }

    pub fn exp(&self) -> Tensor {
        self.unary(Op::Exp, f64::exp)
    }

    pub fn log(&self) -> Tensor {
        self.unary(Op::Log, f64::ln)
    }

    pub fn sqrt(&self) -> Tensor {
        self.unary(Op::Sqrt, f64::sqrt)
    }

    pub fn clamp(&self, min: f64, max: f64) -> Tensor {
        self.unary(Op::Clamp { min, max }, |v| v.clamp(min, max))
    }

    fn rowwise(&self, name: &'static str, op: Op, f: impl Fn(&[f64], &mut [f64])) -> Result<Tensor> {
        let d = last_axis(name, self)?;
        let data = self.data();
        let mut out = vec![0.0; data.len()];
        for (src, dst) in data.chunks(d).zip(out.chunks_mut(d)) {
            f(src, dst);
        }
        drop(data);
        Ok(Tensor::from_op(out, self.shape().to_vec(), op, vec![self.clone()]))
    }

    /// Softmax along the last axis.
    pub fn softmax(&self) -> Result<Tensor> {
        self.rowwise("softmax", Op::Softmax, |z, y| {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (o, v) in y.iter_mut().zip(z) {
                *o = (v - m).exp();
                s += *o;
            }
            y.iter_mut().for_each(|o| *o /= s);
        })
    }

    pub fn log_softmax(&self) -> Result<Tensor> {
        self.rowwise("log_softmax", Op::LogSoftmax, |z, y| {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for (o, v) in y.iter_mut().zip(z) {
                *o = v - lse;
            }
        })
    }

    /// 1.5-entmax along the last axis, solved exactly.
    pub fn entmax15(&self) -> Result<Tensor> {
        self.rowwise("entmax15", Op::Entmax15, entmax15_row)
    }

    /// Hard 0/1 forward (strictly above `threshold` after clamping to
    /// [0,1]); identity backward.
    pub fn straight_through(&self, threshold: f64) -> Tensor {
        self.unary(Op::StraightThrough, |v| if v.clamp(0.0, 1.0) > threshold { 1.0 } else { 0.0 })
    }

    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat", "no inputs"))?;
        let nd = first.ndim();
        if axis >= nd {
            return Err(Error::dim("concat", format!("axis {axis} out of range for {:?}", first.shape())));
        }
        for p in parts {
            let ok = p.ndim() == nd
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::dim(
                    "concat",
                    format!("shape {:?} does not match {:?} off axis {axis}", p.shape(), first.shape()),
                ));
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let total_len: usize = parts.iter().map(|p| p.shape()[axis]).sum();
        let mut out = Vec::with_capacity(outer * total_len * inner);
        let guards: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for o in 0..outer {
            for (p, g) in parts.iter().zip(&guards) {
                let chunk = p.shape()[axis] * inner;
                out.extend_from_slice(&g[o * chunk..(o + 1) * chunk]);
            }
        }
        drop(guards);
        let mut shape = first.shape().to_vec();
        shape[axis] = total_len;
        Ok(Tensor::from_op(out, shape, Op::Concat { axis }, parts.to_vec()))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        if axis >= self.ndim() || start > end || end > self.shape()[axis] {
            return Err(Error::dim(
                "slice",
                format!("range {start}..{end} on axis {axis} invalid for {:?}", self.shape()),
            ));
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let d = self.data();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            out.extend_from_slice(&d[(o * len + start) * inner..(o * len + end) * inner]);
        }
        drop(d);
        let mut shape = self.shape().to_vec();
        shape[axis] = end - start;
        Ok(Tensor::from_op(out, shape, Op::Slice { axis, start }, vec![self.clone()]))
    }

    /// Row lookup into a `[rows, dim]` table.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor> {
        if self.ndim() != 2 {
            return Err(Error::dim("gather_rows", format!("table must be 2-D, got {:?}", self.shape())));
        }
        let (rows, dim) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::dim("gather_rows", format!("row {bad} out of range for {rows} rows")));
        }
        let d = self.data();
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            out.extend_from_slice(&d[i * dim..(i + 1) * dim]);
        }
        drop(d);
        Ok(Tensor::from_op(out, vec![ids.len(), dim], Op::Gather { ids: ids.to_vec() }, vec![self.clone()]))
    }

    /// 2-D convolution: input `N×C×H×W`, kernel `Co×C×k×k`, bias `Co`.
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || stride == 0 {
            return Err(Error::dim(
                "conv2d",
                format!("input {xs:?} and kernel {ws:?} (stride {stride}) are incompatible"),
            ));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (co, k) = (ws[0], ws[2]);
        if bias.shape() != [co] {
            return Err(Error::dim("conv2d", format!("bias {:?} should be [{co}]", bias.shape())));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::dim("conv2d", format!("kernel {k} larger than padded input {xs:?}")));
        }
        let (ho, wo) = (conv_out(h, k, stride, pad), conv_out(w, k, stride, pad));
        let (ckk, hw) = (c * k * k, ho * wo);
        let mut out = vec![0.0; n * co * hw];
        let mut col = vec![0.0; ckk * hw];
        {
            let (x, wt, b) = (self.data(), weight.data(), bias.data());
            for i in 0..n {
                im2col(&x[i * c * h * w..(i + 1) * c * h * w], (c, h, w), k, stride, pad, (ho, wo), &mut col);
                let y = &mut out[i * co * hw..(i + 1) * co * hw];
                for (o, &bv) in b.iter().enumerate() {
                    y[o * hw..(o + 1) * hw].fill(bv);
                }
                gemm(co, ckk, hw, &wt, false, &col, false, y, 1.0);
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![n, co, ho, wo],
            Op::Conv2d { stride, pad },
            vec![self.clone(), weight.clone(), bias.clone()],
        ))
    }

    fn pool_dims(&self, name: &'static str, k: usize) -> Result<(usize, usize, usize, usize, usize, usize)> {
        let s = self.shape();
        if s.len() != 4 || k == 0 || s[2] < k || s[3] < k {
            return Err(Error::dim(name, format!("window {k} invalid for input {s:?}")));
        }
        Ok((s[0] * s[1], s[2], s[3], s[2] / k, s[3] / k, k))
    }

    /// Non-overlapping k×k max pooling over `N×C×H×W`.
    pub fn max_pool2d(&self, k: usize) -> Result<Tensor> {
        let (planes, h, w, ho, wo, k) = self.pool_dims("max_pool2d", k)?;
        let d = self.data();
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut argmax = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * k * w + ox * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let idx = base + (oy * k + ky) * w + ox * k + kx;
                            if d[idx] > d[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(d[best]);
                    argmax.push(best);
                }
            }
        }
        drop(d);
        let s = self.shape();
        Ok(Tensor::from_op(out, vec![s[0], s[1], ho, wo], Op::MaxPool2d { argmax }, vec![self.clone()]))
    }

    pub fn avg_pool2d(&self, k: usize) -> Result<Tensor> {
        let (planes, h, w, ho, wo, k) = self.pool_dims("avg_pool2d", k)?;
        let d = self.data();
        let norm = 1.0 / (k * k) as f64;
        let mut out = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for ky in 0..k {
                        let row = base + (oy * k + ky) * w + ox * k;
                        s += d[row..row + k].iter().sum::<f64>();
                    }
                    out.push(s * norm);
                }
            }
        }
        drop(d);
        let s = self.shape();
        Ok(Tensor::from_op(out, vec![s[0], s[1], ho, wo], Op::AvgPool2d { k }, vec![self.clone()]))
    }
}

// ---------------------------------------------------------------------------
// backward

impl Op {
    pub(crate) fn backward(&self, parents: &[Tensor], out: &Tensor, g: &[f64]) -> Result<Grads> {
        let need = |i: usize| parents[i].requires_grad();
        let grads = match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                let (a, b) = (&parents[0], &parents[1]);
                let shape = out.shape();
                let ma = index_map(a.shape(), shape);
                let mb = index_map(b.shape(), shape);
                let (ad, bd) = (a.data(), b.data());
                let mut ga = need(0).then(|| vec![0.0; ad.len()]);
                let mut gb = need(1).then(|| vec![0.0; bd.len()]);
                for (i, &gi) in g.iter().enumerate() {
                    let (ia, ib) = (at(&ma, i), at(&mb, i));
                    let (da, db) = match self {
                        Op::Add => (gi, gi),
                        Op::Sub => (gi, -gi),
                        Op::Mul => (gi * bd[ib], gi * ad[ia]),
                        _ => (gi / bd[ib], -gi * ad[ia] / (bd[ib] * bd[ib])),
                    };
                    if let Some(ga) = ga.as_mut() {
                        ga[ia] += da;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[ib] += db;
                    }
                }
                vec![ga, gb]
            }
            Op::Scale(s) => vec![Some(g.iter().map(|v| v * s).collect())],
            Op::AddScalar | Op::Reshape | Op::StraightThrough => vec![Some(g.to_vec())],
            Op::MatMul => {
                let (a, b) = (&parents[0], &parents[1]);
                let (sa, sb) = (a.shape(), b.shape());
                let (batch, m, k, n, shared_b) = match (sa.len(), sb.len()) {
                    (2, 2) => (1, sa[0], sa[1], sb[1], true),
                    (3, 2) => (1, sa[0] * sa[1], sa[2], sb[1], true),
                    _ => (sa[0], sa[1], sa[2], sb[2], false),
                };
                let (ad, bd) = (a.data(), b.data());
                let mut ga = need(0).then(|| vec![0.0; ad.len()]);
                let mut gb = need(1).then(|| vec![0.0; bd.len()]);
                for bi in 0..batch {
                    let gc = &g[bi * m * n..(bi + 1) * m * n];
                    let a_i = &ad[bi * m * k..(bi + 1) * m * k];
                    let b_off = if shared_b { 0 } else { bi * k * n };
                    if let Some(ga) = ga.as_mut() {
                        gemm(m, n, k, gc, false, &bd[b_off..b_off + k * n], true, &mut ga[bi * m * k..(bi + 1) * m * k], 0.0);
                    }
                    if let Some(gb) = gb.as_mut() {
                        gemm(k, m, n, a_i, true, gc, false, &mut gb[b_off..b_off + k * n], 1.0);
                    }
                }
                vec![ga, gb]
            }
            Op::Transpose => {
                let s = out.shape();
                let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                let mut gx = vec![0.0; g.len()];
                for b in 0..g.len() / (r * c).max(1) {
                    for i in 0..r {
                        for j in 0..c {
                            gx[b * r * c + j * r + i] = g[b * r * c + i * c + j];
                        }
                    }
                }
                vec![Some(gx)]
            }
            Op::Sum => vec![Some(vec![g[0]; parents[0].numel()])],
            Op::SumAxis { axis } => {
                let (outer, len, inner) = split_axis(parents[0].shape(), *axis);
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        gx[(o * len + l) * inner..(o * len + l + 1) * inner].copy_from_slice(src);
                    }
                }
                vec![Some(gx)]
            }
            Op::Relu => {
                let x = parents[0].data();
                vec![Some(g.iter().zip(x.iter()).map(|(gi, &v)| if v > 0.0 { *gi } else { 0.0 }).collect())]
            }
            Op::Sigmoid => {
                let y = out.data();
                vec![Some(g.iter().zip(y.iter()).map(|(gi, s)| gi * s * (1.0 - s)).collect())]
            }
            Op::Exp => {
                let y = out.data();
                vec![Some(g.iter().zip(y.iter()).map(|(gi, e)| gi * e).collect())]
            }
            Op::Log => {
                let x = parents[0].data();
                vec![Some(g.iter().zip(x.iter()).map(|(gi, v)| gi / v).collect())]
            }
            Op::Sqrt => {
                let y = out.data();
                vec![Some(g.iter().zip(y.iter()).map(|(gi, r)| gi / (2.0 * r)).collect())]
            }
            Op::Clamp { min, max } => {
                let x = parents[0].data();
                vec![Some(
                    g.iter()
                        .zip(x.iter())
                        .map(|(gi, v)| if v >= min && v <= max { *gi } else { 0.0 })
                        .collect(),
                )]
            }
            Op::Softmax | Op::LogSoftmax | Op::Entmax15 => {
                let d = *out.shape().last().expect("row op has an axis");
                let y = out.data();
                let mut gx = vec![0.0; g.len()];
                for ((gr, yr), dst) in g.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)) {
                    match self {
                        Op::Softmax => {
                            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for ((o, gi), yi) in dst.iter_mut().zip(gr).zip(yr) {
                                *o = yi * (gi - dot);
                            }
                        }
                        Op::LogSoftmax => {
                            let gs: f64 = gr.iter().sum();
                            for ((o, gi), yi) in dst.iter_mut().zip(gr).zip(yr) {
                                *o = gi - yi.exp() * gs;
                            }
                        }
                        _ => {
                            // Jacobian of 1.5-entmax: diag(√p) − √p√pᵀ / Σ√p
                            let mut num = 0.0;
                            let mut den = 0.0;
                            for ((o, gi), yi) in dst.iter_mut().zip(gr).zip(yr) {
                                let s = yi.sqrt();
                                *o = gi * s;
                                num += *o;
                                den += s;
                            }
                            let q = num / den;
                            for (o, yi) in dst.iter_mut().zip(yr) {
                                *o -= q * yi.sqrt();
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }
            Op::Concat { axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                let mut grads = Vec::with_capacity(parents.len());
                for p in parents {
                    let len = p.shape()[*axis];
                    if p.requires_grad() {
                        let mut gp = Vec::with_capacity(p.numel());
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            gp.extend_from_slice(&g[start..start + len * inner]);
                        }
                        grads.push(Some(gp));
                    } else {
                        grads.push(None);
                    }
                    offset += len;
                }
                grads
            }
            Op::Slice { axis, start } => {
                let (outer, len, inner) = split_axis(parents[0].shape(), *axis);
                let width = out.shape()[*axis];
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    let dst = (o * len + start) * inner;
                    gx[dst..dst + width * inner].copy_from_slice(&g[o * width * inner..(o + 1) * width * inner]);
                }
                vec![Some(gx)]
            }
            Op::Gather { ids } => {
                let dim = parents[0].shape()[1];
                let mut gt = vec![0.0; parents[0].numel()];
                for (r, &i) in ids.iter().enumerate() {
                    for (acc, v) in gt[i * dim..(i + 1) * dim].iter_mut().zip(&g[r * dim..(r + 1) * dim]) {
                        *acc += v;
                    }
                }
                vec![Some(gt)]
            }
            Op::Conv2d { stride, pad } => {
                let (x, w) = (&parents[0], &parents[1]);
                let (xs, ws) = (x.shape(), w.shape());
                let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (co, k) = (ws[0], ws[2]);
                let (ho, wo) = (out.shape()[2], out.shape()[3]);
                let (ckk, hw) = (c * k * k, ho * wo);
                let (xd, wt) = (x.data(), w.data());
                let mut gx = need(0).then(|| vec![0.0; xd.len()]);
                let mut gw = need(1).then(|| vec![0.0; wt.len()]);
                let mut gb = need(2).then(|| vec![0.0; co]);
                let mut col = vec![0.0; ckk * hw];
                for i in 0..n {
                    let gy = &g[i * co * hw..(i + 1) * co * hw];
                    if let Some(gb) = gb.as_mut() {
                        for (o, acc) in gb.iter_mut().enumerate() {
                            *acc += gy[o * hw..(o + 1) * hw].iter().sum::<f64>();
                        }
                    }
                    if let Some(gw) = gw.as_mut() {
                        im2col(&xd[i * c * h * wd..(i + 1) * c * h * wd], (c, h, wd), k, *stride, *pad, (ho, wo), &mut col);
                        gemm(co, hw, ckk, gy, false, &col, true, gw, 1.0);
                    }
                    if let Some(gx) = gx.as_mut() {
                        gemm(ckk, co, hw, &wt, true, gy, false, &mut col, 0.0);
                        col2im(&col, (c, h, wd), k, *stride, *pad, (ho, wo), &mut gx[i * c * h * wd..(i + 1) * c * h * wd]);
                    }
                }
                vec![gx, gw, gb]
            }
            Op::MaxPool2d { argmax, .. } => {
                let mut gx = vec![0.0; parents[0].numel()];
                for (&src, gi) in argmax.iter().zip(g) {
                    gx[src] += gi;
                }
                vec![Some(gx)]
            }
            Op::AvgPool2d { k } => {
                let s = parents[0].shape();
                let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
                let (ho, wo) = (h / k, w / k);
                let norm = 1.0 / (k * k) as f64;
                let mut gx = vec![0.0; parents[0].numel()];
                for p in 0..planes {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let gi = g[(p * ho + oy) * wo + ox] * norm;
                            for ky in 0..*k {
                                let row = p * h * w + (oy * k + ky) * w + ox * k;
                                gx[row..row + k].iter_mut().for_each(|v| *v += gi);
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }
        };
        Ok(grads)
    }
}
