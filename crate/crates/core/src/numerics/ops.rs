//! Differentiable primitives. Each returns a new [`Var`] on the same tape.

use super::tape::{FnBackward, Tape, Var};
use super::tensor::{axis_split, Tensor};
use crate::error::{Error, Result};

/// `c = a·b (+ c)` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    c_strides: (usize, usize),
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, a_strides) < a.len(), "gemm: lhs out of bounds");
        assert!(last(k, n, b_strides) < b.len(), "gemm: rhs out of bounds");
    }
    assert!(last(m, n, c_strides) < c.len(), "gemm: output out of bounds");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: every index touched by dgemm is bounded by the asserts above,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

fn same_shape(op: &'static str, a: &Var, b: &Var) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip_data(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn tensor_like(t: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(t.shape(), data).expect("same element count")
}

const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

pub fn selu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("add", a, b)?;
        let out = tensor_like(a.value(), zip_data(a.data(), b.data(), |x, y| x + y));
        self.record(
            out,
            &[a, b],
            FnBackward::new("add", |_, _, g| vec![Some(g.clone()), Some(g.clone())]),
        )
    }

    pub fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("sub", a, b)?;
        let out = tensor_like(a.value(), zip_data(a.data(), b.data(), |x, y| x - y));
        self.record(
            out,
            &[a, b],
            FnBackward::new("sub", |_, _, g| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        )
    }

    pub fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("mul", a, b)?;
        let out = tensor_like(a.value(), zip_data(a.data(), b.data(), |x, y| x * y));
        self.record(
            out,
            &[a, b],
            FnBackward::new("mul", |inputs, _, g| {
                let (a, b) = (&inputs[0], &inputs[1]);
                let ga = a
                    .requires_grad()
                    .then(|| tensor_like(g, zip_data(g.data(), b.data(), |g, y| g * y)));
                let gb = b
                    .requires_grad()
                    .then(|| tensor_like(g, zip_data(g.data(), a.data(), |g, x| g * x)));
                vec![ga, gb]
            }),
        )
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("maximum", a, b)?;
        let out = tensor_like(a.value(), zip_data(a.data(), b.data(), f64::max));
        self.record(
            out,
            &[a, b],
            FnBackward::new("maximum", |inputs, _, g| {
                let (a, b) = (inputs[0].data(), inputs[1].data());
                let mut ga = vec![0.0; g.len()];
                let mut gb = vec![0.0; g.len()];
                for i in 0..g.len() {
                    if a[i] >= b[i] {
                        ga[i] = g.data()[i];
                    } else {
                        gb[i] = g.data()[i];
                    }
                }
                vec![Some(tensor_like(g, ga)), Some(tensor_like(g, gb))]
            }),
        )
    }

    pub fn scale(&self, x: &Var, c: f64) -> Result<Var> {
        let out = x.value().map(|v| v * c);
        self.record(
            out,
            &[x],
            FnBackward::new("scale", move |_, _, g| vec![Some(g.map(|v| v * c))]),
        )
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self, x: &Var) -> Result<Var> {
        let s: f64 = x.data().iter().sum();
        self.record(
            Tensor::scalar(s),
            &[x],
            FnBackward::new("sum", |inputs, _, g| {
                vec![Some(Tensor::full(inputs[0].shape(), g.data()[0]))]
            }),
        )
    }

    pub fn mean(&self, x: &Var) -> Result<Var> {
        let n = x.value().len() as f64;
        let s = self.sum(x)?;
        self.scale(&s, 1.0 / n)
    }

    fn unary(
        &self,
        x: &Var,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        // derivative given (input, output)
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let out = x.value().map(f);
        self.record(
            out,
            &[x],
            FnBackward::new(name, move |inputs, y, g| {
                let x = inputs[0].data();
                let data = (0..g.len()).map(|i| g.data()[i] * df(x[i], y.data()[i])).collect();
                vec![Some(tensor_like(g, data))]
            }),
        )
    }

    pub fn tanh(&self, x: &Var) -> Result<Var> {
        self.unary(x, "tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self, x: &Var) -> Result<Var> {
        self.unary(x, "sigmoid", sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    pub fn selu(&self, x: &Var) -> Result<Var> {
        self.unary(x, "selu", selu_scalar, |x, y| {
            if x > 0.0 {
                SELU_LAMBDA
            } else {
                y + SELU_LAMBDA * SELU_ALPHA
            }
        })
    }

    pub fn abs(&self, x: &Var) -> Result<Var> {
        self.unary(x, "abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn sin(&self, x: &Var) -> Result<Var> {
        self.unary(x, "sin", f64::sin, |x, _| x.cos())
    }

    pub fn reshape(&self, x: &Var, shape: &[usize]) -> Result<Var> {
        let out = x.value().clone().reshape(shape)?;
        self.record(
            out,
            &[x],
            FnBackward::new("reshape", |inputs, _, g| {
                vec![Some(g.clone().reshape(inputs[0].shape()).expect("same size"))]
            }),
        )
    }

    /// Broadcasts `x` to `shape`. Dimensions are aligned from the right;
    /// each source extent must equal the target or be 1.
    pub fn expand(&self, x: &Var, shape: &[usize]) -> Result<Var> {
        let src = x.shape();
        if src.len() > shape.len() {
            return Err(Error::shape("expand", format!("{src:?} -> {shape:?}")));
        }
        let offset = shape.len() - src.len();
        let mut padded = vec![1usize; shape.len()];
        padded[offset..].copy_from_slice(src);
        for (s, t) in padded.iter().zip(shape) {
            if s != t && *s != 1 {
                return Err(Error::shape("expand", format!("{src:?} -> {shape:?}")));
            }
        }
        // source strides, zero along broadcast dimensions
        let mut strides = vec![0usize; shape.len()];
        let mut acc = 1;
        for d in (0..shape.len()).rev() {
            if padded[d] != 1 {
                strides[d] = acc;
            }
            acc *= padded[d];
        }
        let total: usize = shape.iter().product();
        let index: Vec<usize> = broadcast_index(shape, &strides, total);
        let data = index.iter().map(|&i| x.data()[i]).collect();
        let out = Tensor::new(shape, data)?;
        self.record(
            out,
            &[x],
            FnBackward::new("expand", move |inputs, _, g| {
                let mut gx = Tensor::zeros(inputs[0].shape());
                for (o, &i) in index.iter().enumerate() {
                    gx.data_mut()[i] += g.data()[o];
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self, x: &Var) -> Result<Var> {
        let shape = x.shape();
        if shape.len() < 2 {
            return Err(Error::shape("transpose", format!("{shape:?}")));
        }
        let (r, c) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let batch = x.value().len() / (r * c);
        let mut out_shape = shape.to_vec();
        out_shape.swap(shape.len() - 2, shape.len() - 1);
        let out = Tensor::new(&out_shape, transpose_blocks(x.data(), batch, r, c))?;
        self.record(
            out,
            &[x],
            FnBackward::new("transpose", move |inputs, _, g| {
                let data = transpose_blocks(g.data(), batch, c, r);
                vec![Some(Tensor::new(inputs[0].shape(), data).expect("same size"))]
            }),
        )
    }

    /// Matrix product over the last two axes. `a` is `[.., m, k]`; `b` is
    /// either `[.., k, n]` with the same leading axes or a shared `[k, n]`.
    pub fn matmul(&self, a: &Var, b: &Var) -> Result<Var> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let shared = sb.len() == 2 && sa.len() > 2;
        if k != kb || (!shared && sa[..sa.len() - 2] != sb[..sb.len() - 2]) {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let batch = a.value().len() / (m * k);
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            let boff = if shared { 0 } else { bi * k * n };
            gemm(
                m,
                k,
                n,
                &a.data()[bi * m * k..],
                (k, 1),
                &b.data()[boff..],
                (n, 1),
                &mut out[bi * m * n..],
                (n, 1),
                false,
            );
        }
        let out = Tensor::new(&out_shape, out)?;
        self.record(
            out,
            &[a, b],
            FnBackward::new("matmul", move |inputs, _, g| {
                let (a, b) = (&inputs[0], &inputs[1]);
                let ga = a.requires_grad().then(|| {
                    // dA = G·Bᵀ
                    let mut ga = vec![0.0; batch * m * k];
                    for bi in 0..batch {
                        let boff = if shared { 0 } else { bi * k * n };
                        gemm(
                            m,
                            n,
                            k,
                            &g.data()[bi * m * n..],
                            (n, 1),
                            &b.data()[boff..],
                            (1, n),
                            &mut ga[bi * m * k..],
                            (k, 1),
                            false,
                        );
                    }
                    Tensor::new(a.shape(), ga).expect("shape")
                });
                let gb = b.requires_grad().then(|| {
                    // dB = Aᵀ·G, summed over the batch when B is shared
                    let mut gb = vec![0.0; b.value().len()];
                    for bi in 0..batch {
                        let boff = if shared { 0 } else { bi * k * n };
                        gemm(
                            k,
                            m,
                            n,
                            &a.data()[bi * m * k..],
                            (1, k),
                            &g.data()[bi * m * n..],
                            (n, 1),
                            &mut gb[boff..],
                            (n, 1),
                            shared,
                        );
                    }
                    Tensor::new(b.shape(), gb).expect("shape")
                });
                vec![ga, gb]
            }),
        )
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&self, parts: &[&Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let ndim = first.shape().len();
        let mut extents = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            let compatible = s.len() == ndim
                && axis < ndim
                && (0..ndim).all(|d| d == axis || s[d] == first.shape()[d]);
            if !compatible {
                return Err(Error::shape("concat", format!("{:?} vs {s:?} on axis {axis}", first.shape())));
            }
            extents.push(s[axis]);
        }
        let (outer, _, inner) = axis_split(first.shape(), axis)?;
        let total: usize = extents.iter().sum();
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&extents) {
                out.extend_from_slice(&p.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let out = Tensor::new(&out_shape, out)?;
        self.record(
            out,
            parts,
            FnBackward::new("concat", move |inputs, _, g| {
                let mut grads: Vec<Vec<f64>> =
                    extents.iter().map(|e| Vec::with_capacity(outer * e * inner)).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (gi, &e) in grads.iter_mut().zip(&extents) {
                        gi.extend_from_slice(&g.data()[pos..pos + e * inner]);
                        pos += e * inner;
                    }
                }
                inputs
                    .iter()
                    .zip(grads)
                    .map(|(x, gx)| Some(Tensor::new(x.shape(), gx).expect("shape")))
                    .collect()
            }),
        )
    }

    /// The slice `start..start + len` along `axis`.
    pub fn narrow(&self, x: &Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (outer, n, inner) = axis_split(x.shape(), axis)?;
        if len == 0 || start + len > n {
            return Err(Error::shape(
                "narrow",
                format!("{start}..{} of extent {n}", start + len),
            ));
        }
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let out = Tensor::new(&out_shape, out)?;
        self.record(
            out,
            &[x],
            FnBackward::new("narrow", move |inputs, _, g| {
                let mut gx = Tensor::zeros(inputs[0].shape());
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    gx.data_mut()[base..base + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Picks rows of a `[batch, n, d]` tensor: `out[b, r] = x[b, rows[b][r]]`.
    /// Every batch entry must select the same number of rows.
    pub fn gather_rows(&self, x: &Var, rows: Vec<Vec<usize>>) -> Result<Var> {
        let s = x.shape();
        if s.len() != 3 || rows.len() != s[0] {
            return Err(Error::shape("gather_rows", format!("{s:?} with {} index lists", rows.len())));
        }
        let (n, d) = (s[1], s[2]);
        let k = rows[0].len();
        if k == 0 || rows.iter().any(|r| r.len() != k || r.iter().any(|&i| i >= n)) {
            return Err(Error::invalid("gather_rows: ragged or out-of-range indices"));
        }
        let mut out = Vec::with_capacity(s[0] * k * d);
        for (b, idx) in rows.iter().enumerate() {
            for &i in idx {
                let base = (b * n + i) * d;
                out.extend_from_slice(&x.data()[base..base + d]);
            }
        }
        let out = Tensor::new(&[s[0], k, d], out)?;
        self.record(
            out,
            &[x],
            FnBackward::new("gather_rows", move |inputs, _, g| {
                let mut gx = Tensor::zeros(inputs[0].shape());
                for (b, idx) in rows.iter().enumerate() {
                    for (r, &i) in idx.iter().enumerate() {
                        let src = (b * k + r) * d;
                        let dst = (b * n + i) * d;
                        for j in 0..d {
                            gx.data_mut()[dst + j] += g.data()[src + j];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Maximum along `axis`, which is removed from the shape. Ties pick the
    /// lowest index.
    pub fn max_axis(&self, x: &Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = axis_split(x.shape(), axis)?;
        let mut out_shape = x.shape().to_vec();
        out_shape.remove(axis);
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                for i in 0..inner {
                    let src = (o * n + k) * inner + i;
                    let dst = o * inner + i;
                    if x.data()[src] > out[dst] {
                        out[dst] = x.data()[src];
                        arg[dst] = src;
                    }
                }
            }
        }
        let out = Tensor::new(&out_shape, out)?;
        self.record(
            out,
            &[x],
            FnBackward::new("max_axis", move |inputs, _, g| {
                let mut gx = Tensor::zeros(inputs[0].shape());
                for (o, &src) in arg.iter().enumerate() {
                    gx.data_mut()[src] += g.data()[o];
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Mean along `axis`, which is removed from the shape.
    pub fn mean_axis(&self, x: &Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = axis_split(x.shape(), axis)?;
        let mut out_shape = x.shape().to_vec();
        out_shape.remove(axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                for i in 0..inner {
                    out[o * inner + i] += x.data()[(o * n + k) * inner + i];
                }
            }
        }
        for v in &mut out {
            *v /= n as f64;
        }
        let out = Tensor::new(&out_shape, out)?;
        self.record(
            out,
            &[x],
            FnBackward::new("mean_axis", move |inputs, _, g| {
                let mut gx = Tensor::zeros(inputs[0].shape());
                for o in 0..outer {
                    for k in 0..n {
                        for i in 0..inner {
                            gx.data_mut()[(o * n + k) * inner + i] = g.data()[o * inner + i] / n as f64;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// `out[b, i, j, :] = h[b, i, :] ⊙ h[b, j, :]` for `h` of shape `[b, n, d]`.
    pub fn pairwise_mul(&self, h: &Var) -> Result<Var> {
        let s = h.shape();
        if s.len() != 3 {
            return Err(Error::shape("pairwise_mul", format!("{s:?}")));
        }
        let (bsz, n, d) = (s[0], s[1], s[2]);
        let x = h.data();
        let mut out = vec![0.0; bsz * n * n * d];
        for b in 0..bsz {
            for i in 0..n {
                let hi = &x[(b * n + i) * d..(b * n + i + 1) * d];
                for j in 0..n {
                    let hj = &x[(b * n + j) * d..(b * n + j + 1) * d];
                    let o = ((b * n + i) * n + j) * d;
                    for c in 0..d {
                        out[o + c] = hi[c] * hj[c];
                    }
                }
            }
        }
        let out = Tensor::new(&[bsz, n, n, d], out)?;
        self.record(
            out,
            &[h],
            FnBackward::new("pairwise_mul", move |inputs, _, g| {
                let x = inputs[0].data();
                let g = g.data();
                let mut gx = vec![0.0; bsz * n * d];
                for b in 0..bsz {
                    for i in 0..n {
                        for j in 0..n {
                            let o = ((b * n + i) * n + j) * d;
                            let (ri, rj) = ((b * n + i) * d, (b * n + j) * d);
                            for c in 0..d {
                                gx[ri + c] += g[o + c] * x[rj + c];
                                gx[rj + c] += g[o + c] * x[ri + c];
                            }
                        }
                    }
                }
                vec![Some(Tensor::new(inputs[0].shape(), gx).expect("shape"))]
            }),
        )
    }

    /// Temperature softmax along `axis`, `softmax(x / t)`.
    pub fn softmax(&self, x: &Var, axis: usize, temperature: f64) -> Result<Var> {
        let out = x.value().softmax_t(axis, temperature)?;
        let (outer, n, inner) = axis_split(x.shape(), axis)?;
        self.record(
            out,
            &[x],
            FnBackward::new("softmax", move |_, y, g| {
                let (y, gd) = (y.data(), g.data());
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * n + k) * inner + i;
                        let dot: f64 = (0..n).map(|k| gd[at(k)] * y[at(k)]).sum();
                        for k in 0..n {
                            gx[at(k)] = y[at(k)] * (gd[at(k)] - dot) / temperature;
                        }
                    }
                }
                vec![Some(tensor_like(g, gx))]
            }),
        )
    }
}

fn transpose_blocks(x: &[f64], batch: usize, r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        let base = b * r * c;
        for i in 0..r {
            for j in 0..c {
                out[base + j * r + i] = x[base + i * c + j];
            }
        }
    }
    out
}

fn broadcast_index(shape: &[usize], strides: &[usize], total: usize) -> Vec<usize> {
    let mut index = Vec::with_capacity(total);
    let mut counter = vec![0usize; shape.len()];
    let mut src = 0usize;
    for _ in 0..total {
        index.push(src);
        for d in (0..shape.len()).rev() {
            counter[d] += 1;
            src += strides[d];
            if counter[d] < shape[d] {
                break;
            }
            src -= strides[d] * shape[d];
            counter[d] = 0;
        }
    }
    index
}
