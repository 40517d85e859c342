//! Layer primitives built on the tape: PReLU, batch normalization, dropout,
//! 2-D convolution, max pooling and the classification loss.

use rand::Rng;

use super::init::kaiming_init;
use super::ops::gemm;
use super::params::{Ctx, ParamId, ParamStore};
use super::tape::{FnBackward, Tape, Var};
use super::tensor::{axis_split, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// `max(0, x) + a·min(0, x)` with one slope per entry of the last axis.
pub fn prelu(tape: &Tape, x: &Var, a: &Var) -> Result<Var> {
    let d = *x.shape().last().ok_or_else(|| Error::shape("prelu", "scalar input"))?;
    if a.shape() != [d] {
        return Err(Error::shape("prelu", format!("slopes {:?} for input {:?}", a.shape(), x.shape())));
    }
    let slopes = a.data();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if v > 0.0 { v } else { slopes[i % d] * v })
        .collect();
    let out = Tensor::new(x.shape(), data)?;
    tape.record(
        out,
        &[x, a],
        FnBackward::new("prelu", move |inputs, _, g| {
            let (x, a) = (inputs[0].data(), inputs[1].data());
            let mut gx = vec![0.0; x.len()];
            let mut ga = vec![0.0; d];
            for i in 0..x.len() {
                if x[i] > 0.0 {
                    gx[i] = g.data()[i];
                } else {
                    gx[i] = a[i % d] * g.data()[i];
                    ga[i % d] += x[i] * g.data()[i];
                }
            }
            vec![
                Some(Tensor::new(inputs[0].shape(), gx).expect("shape")),
                Some(Tensor::new(&[d], ga).expect("shape")),
            ]
        }),
    )
}

/// Running statistics produced by a training-mode normalization.
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

/// Batch normalization with statistics per index of `axis`, pooled over all
/// other axes. Training mode normalizes with the (biased) batch statistics and
/// returns updated running statistics (unbiased variance, momentum 0.1); eval
/// mode uses the running statistics.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm(
    tape: &Tape,
    x: &Var,
    gamma: &Var,
    beta: &Var,
    running: (&Tensor, &Tensor),
    axis: usize,
    training: bool,
) -> Result<(Var, Option<RunningStats>)> {
    let (outer, c, inner) = axis_split(x.shape(), axis)?;
    for p in [gamma.shape(), beta.shape(), running.0.shape(), running.1.shape()] {
        if p != [c] {
            return Err(Error::shape("batch_norm", format!("parameter {p:?} for {c} features")));
        }
    }
    let count = outer * inner;
    if count == 0 {
        return Err(Error::invalid("batch_norm on an empty batch"));
    }
    let xd = x.data();
    let at = move |o: usize, ch: usize, i: usize| (o * c + ch) * inner + i;

    let (mean, var, stats) = if training {
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for o in 0..outer {
                for i in 0..inner {
                    s += xd[at(o, ch, i)];
                }
            }
            mean[ch] = s / count as f64;
            let mut s2 = 0.0;
            for o in 0..outer {
                for i in 0..inner {
                    let dlt = xd[at(o, ch, i)] - mean[ch];
                    s2 += dlt * dlt;
                }
            }
            var[ch] = s2 / count as f64;
        }
        let unbias = if count > 1 {
            count as f64 / (count as f64 - 1.0)
        } else {
            1.0
        };
        let new_mean = (0..c)
            .map(|ch| (1.0 - BN_MOMENTUM) * running.0.data()[ch] + BN_MOMENTUM * mean[ch])
            .collect();
        let new_var = (0..c)
            .map(|ch| (1.0 - BN_MOMENTUM) * running.1.data()[ch] + BN_MOMENTUM * var[ch] * unbias)
            .collect();
        let stats = RunningStats {
            mean: Tensor::new(&[c], new_mean)?,
            var: Tensor::new(&[c], new_var)?,
        };
        (mean, var, Some(stats))
    } else {
        (running.0.data().to_vec(), running.1.data().to_vec(), None)
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; xd.len()];
    let mut out = vec![0.0; xd.len()];
    for o in 0..outer {
        for ch in 0..c {
            let (gm, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in 0..inner {
                let k = at(o, ch, i);
                xhat[k] = (xd[k] - mean[ch]) * inv_std[ch];
                out[k] = gm * xhat[k] + bt;
            }
        }
    }
    let out = Tensor::new(x.shape(), out)?;
    let var_out = tape.record(
        out,
        &[x, gamma, beta],
        FnBackward::new("batch_norm", move |inputs, _, g| {
            let gd = g.data();
            let gamma = inputs[1].data();
            let mut gx = vec![0.0; gd.len()];
            let mut ggamma = vec![0.0; c];
            let mut gbeta = vec![0.0; c];
            for ch in 0..c {
                let (mut sg, mut sgx) = (0.0, 0.0);
                for o in 0..outer {
                    for i in 0..inner {
                        let k = at(o, ch, i);
                        sg += gd[k];
                        sgx += gd[k] * xhat[k];
                    }
                }
                gbeta[ch] = sg;
                ggamma[ch] = sgx;
                let scale = gamma[ch] * inv_std[ch];
                if training {
                    let (mg, mgx) = (sg / count as f64, sgx / count as f64);
                    for o in 0..outer {
                        for i in 0..inner {
                            let k = at(o, ch, i);
                            gx[k] = scale * (gd[k] - mg - xhat[k] * mgx);
                        }
                    }
                } else {
                    for o in 0..outer {
                        for i in 0..inner {
                            let k = at(o, ch, i);
                            gx[k] = scale * gd[k];
                        }
                    }
                }
            }
            vec![
                Some(Tensor::new(inputs[0].shape(), gx).expect("shape")),
                Some(Tensor::new(&[c], ggamma).expect("shape")),
                Some(Tensor::new(&[c], gbeta).expect("shape")),
            ]
        }),
    )?;
    Ok((var_out, stats))
}

/// Inverted dropout: in training each element is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 - p)`; identity otherwise.
pub fn dropout(tape: &Tape, x: &Var, p: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout probability must be in [0, 1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.value().len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mask = tape.constant(Tensor::new(x.shape(), mask)?);
    tape.mul(x, &mask)
}

/// Stride-1 2-D convolution with "same" zero padding and odd kernels.
/// `x` is `[batch, c_in, h, w]`, `weight` is `[c_out, c_in, kh, kw]`.
pub fn conv2d(tape: &Tape, x: &Var, weight: &Var, bias: &Var) -> Result<Var> {
    let (xs, ws) = (x.shape(), weight.shape());
    if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || bias.shape() != [ws[0]] {
        return Err(Error::shape(
            "conv2d",
            format!("input {xs:?}, weight {ws:?}, bias {:?}", bias.shape()),
        ));
    }
    if ws[2] % 2 == 0 || ws[3] % 2 == 0 {
        return Err(Error::invalid("conv2d kernels must have odd extents"));
    }
    let geom = ConvGeom {
        batch: xs[0],
        c_in: xs[1],
        h: xs[2],
        w: xs[3],
        c_out: ws[0],
        kh: ws[2],
        kw: ws[3],
    };
    let out = geom.forward(x.data(), weight.data(), bias.data());
    let out = Tensor::new(&[geom.batch, geom.c_out, geom.h, geom.w], out)?;
    tape.record(
        out,
        &[x, weight, bias],
        FnBackward::new("conv2d", move |inputs, _, g| {
            let (x, w, b) = (&inputs[0], &inputs[1], &inputs[2]);
            let gx = x
                .requires_grad()
                .then(|| Tensor::new(x.shape(), geom.grad_input(g.data(), w.data())).expect("shape"));
            let gw = w
                .requires_grad()
                .then(|| Tensor::new(w.shape(), geom.grad_weight(g.data(), x.data())).expect("shape"));
            let gb = b.requires_grad().then(|| {
                let plane = geom.h * geom.w;
                let mut gb = vec![0.0; geom.c_out];
                for bi in 0..geom.batch {
                    for (co, acc) in gb.iter_mut().enumerate() {
                        let base = (bi * geom.c_out + co) * plane;
                        *acc += g.data()[base..base + plane].iter().sum::<f64>();
                    }
                }
                Tensor::new(&[geom.c_out], gb).expect("shape")
            });
            vec![gx, gw, gb]
        }),
    )
}

#[derive(Clone, Copy)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
}

impl ConvGeom {
    /// Patch matrix of one input row: `[(c_in, kw), w]`, zero-padded.
    fn row_patch(&self, x: &[f64], b: usize, r: usize, patch: &mut [f64]) {
        let pw = self.kw / 2;
        for ci in 0..self.c_in {
            let src = &x[((b * self.c_in + ci) * self.h + r) * self.w..][..self.w];
            for dk in 0..self.kw {
                let dst = &mut patch[(ci * self.kw + dk) * self.w..][..self.w];
                for (col, d) in dst.iter_mut().enumerate() {
                    let s = col as isize + dk as isize - pw as isize;
                    *d = if s >= 0 && (s as usize) < self.w {
                        src[s as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    /// Weights regrouped per kernel row as `[c_out, (c_in, kw)]` matrices.
    fn weight_rows(&self, w: &[f64]) -> Vec<Vec<f64>> {
        (0..self.kh)
            .map(|r| {
                let mut m = vec![0.0; self.c_out * self.c_in * self.kw];
                for co in 0..self.c_out {
                    for ci in 0..self.c_in {
                        for dk in 0..self.kw {
                            m[(co * self.c_in + ci) * self.kw + dk] =
                                w[((co * self.c_in + ci) * self.kh + r) * self.kw + dk];
                        }
                    }
                }
                m
            })
            .collect()
    }

    /// Output rows that read input row `r` through kernel row `k`.
    fn out_row(&self, r: usize, k: usize) -> Option<usize> {
        let y = r as isize - k as isize + (self.kh / 2) as isize;
        (y >= 0 && (y as usize) < self.h).then_some(y as usize)
    }

    fn forward(&self, x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
        let plane = self.h * self.w;
        let ck = self.c_in * self.kw;
        let mut out = vec![0.0; self.batch * self.c_out * plane];
        for b in 0..self.batch {
            for co in 0..self.c_out {
                out[(b * self.c_out + co) * plane..][..plane].fill(bias[co]);
            }
        }
        let wr = self.weight_rows(w);
        let mut patch = vec![0.0; ck * self.w];
        for b in 0..self.batch {
            for r in 0..self.h {
                self.row_patch(x, b, r, &mut patch);
                for (k, wk) in wr.iter().enumerate() {
                    let Some(y) = self.out_row(r, k) else { continue };
                    let base = b * self.c_out * plane + y * self.w;
                    gemm(
                        self.c_out,
                        ck,
                        self.w,
                        wk,
                        (ck, 1),
                        &patch,
                        (self.w, 1),
                        &mut out[base..],
                        (plane, 1),
                        true,
                    );
                }
            }
        }
        out
    }

    fn grad_weight(&self, g: &[f64], x: &[f64]) -> Vec<f64> {
        let plane = self.h * self.w;
        let ck = self.c_in * self.kw;
        let mut gw_rows = vec![vec![0.0; self.c_out * ck]; self.kh];
        let mut patch = vec![0.0; ck * self.w];
        for b in 0..self.batch {
            for r in 0..self.h {
                self.row_patch(x, b, r, &mut patch);
                for (k, gwk) in gw_rows.iter_mut().enumerate() {
                    let Some(y) = self.out_row(r, k) else { continue };
                    let base = b * self.c_out * plane + y * self.w;
                    // dW_k += G_y · patchᵀ
                    gemm(
                        self.c_out,
                        self.w,
                        ck,
                        &g[base..],
                        (plane, 1),
                        &patch,
                        (1, self.w),
                        gwk,
                        (ck, 1),
                        true,
                    );
                }
            }
        }
        let mut gw = vec![0.0; self.c_out * self.c_in * self.kh * self.kw];
        for (k, gwk) in gw_rows.iter().enumerate() {
            for co in 0..self.c_out {
                for ci in 0..self.c_in {
                    for dk in 0..self.kw {
                        gw[((co * self.c_in + ci) * self.kh + k) * self.kw + dk] =
                            gwk[(co * self.c_in + ci) * self.kw + dk];
                    }
                }
            }
        }
        gw
    }

    fn grad_input(&self, g: &[f64], w: &[f64]) -> Vec<f64> {
        let plane = self.h * self.w;
        let ck = self.c_in * self.kw;
        let pw = self.kw / 2;
        let wr = self.weight_rows(w);
        let mut gx = vec![0.0; self.batch * self.c_in * plane];
        let mut dpatch = vec![0.0; ck * self.w];
        for b in 0..self.batch {
            for r in 0..self.h {
                dpatch.fill(0.0);
                for (k, wk) in wr.iter().enumerate() {
                    let Some(y) = self.out_row(r, k) else { continue };
                    let base = b * self.c_out * plane + y * self.w;
                    // dpatch += W_kᵀ · G_y
                    gemm(
                        ck,
                        self.c_out,
                        self.w,
                        wk,
                        (1, ck),
                        &g[base..],
                        (plane, 1),
                        &mut dpatch,
                        (self.w, 1),
                        true,
                    );
                }
                for ci in 0..self.c_in {
                    let dst = &mut gx[((b * self.c_in + ci) * self.h + r) * self.w..][..self.w];
                    for dk in 0..self.kw {
                        let src = &dpatch[(ci * self.kw + dk) * self.w..][..self.w];
                        for (col, &v) in src.iter().enumerate() {
                            let s = col as isize + dk as isize - pw as isize;
                            if s >= 0 && (s as usize) < self.w {
                                dst[s as usize] += v;
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

/// Non-overlapping max pooling over the last two axes of `[.., h, w]`
/// with window `(ph, pw)`; trailing remainders are dropped.
pub fn max_pool2d(tape: &Tape, x: &Var, window: (usize, usize)) -> Result<Var> {
    let s = x.shape();
    let (ph, pw) = window;
    if s.len() < 2 || ph == 0 || pw == 0 {
        return Err(Error::shape("max_pool2d", format!("{s:?} with window {window:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let (oh, ow) = (h / ph, w / pw);
    if oh == 0 {
        return Err(Error::InputTooSmall { axis: "pool height", got: h, min: ph });
    }
    if ow == 0 {
        return Err(Error::InputTooSmall { axis: "pool width", got: w, min: pw });
    }
    let planes = x.value().len() / (h * w);
    let mut out = vec![0.0; planes * oh * ow];
    let mut arg = vec![0usize; out.len()];
    let xd = x.data();
    for p in 0..planes {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0;
                for di in 0..ph {
                    for dj in 0..pw {
                        let k = (p * h + i * ph + di) * w + j * pw + dj;
                        if xd[k] > best {
                            best = xd[k];
                            best_at = k;
                        }
                    }
                }
                let o = (p * oh + i) * ow + j;
                out[o] = best;
                arg[o] = best_at;
            }
        }
    }
    let mut out_shape = s.to_vec();
    let n = out_shape.len();
    out_shape[n - 2] = oh;
    out_shape[n - 1] = ow;
    let out = Tensor::new(&out_shape, out)?;
    tape.record(
        out,
        &[x],
        FnBackward::new("max_pool2d", move |inputs, _, g| {
            let mut gx = Tensor::zeros(inputs[0].shape());
            for (o, &k) in arg.iter().enumerate() {
                gx.data_mut()[k] += g.data()[o];
            }
            vec![Some(gx)]
        }),
    )
}

/// Mean over the batch of `w[y]·(-log softmax(z)[y])` for logits `[batch, classes]`.
pub fn cross_entropy(tape: &Tape, logits: &Var, labels: &[usize], class_weights: &[f64]) -> Result<Var> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() || s[1] != class_weights.len() {
        return Err(Error::shape(
            "cross_entropy",
            format!("logits {s:?}, {} labels, {} weights", labels.len(), class_weights.len()),
        ));
    }
    let (bsz, nc) = (s[0], s[1]);
    if let Some(&bad) = labels.iter().find(|&&y| y >= nc) {
        return Err(Error::invalid(format!("label {bad} out of range for {nc} classes")));
    }
    let probs = logits.value().softmax_t(1, 1.0)?;
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        // log-sum-exp form keeps confident predictions exact
        let row = &logits.data()[b * nc..(b + 1) * nc];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += class_weights[y] * (lse - row[y]);
    }
    loss /= bsz as f64;
    let labels = labels.to_vec();
    let weights = class_weights.to_vec();
    tape.record(
        Tensor::scalar(loss),
        &[logits],
        FnBackward::new("cross_entropy", move |inputs, _, g| {
            let scale = g.data()[0] / bsz as f64;
            let mut gz = probs.data().to_vec();
            for (b, &y) in labels.iter().enumerate() {
                gz[b * nc + y] -= 1.0;
                for c in 0..nc {
                    gz[b * nc + c] *= weights[y] * scale;
                }
            }
            vec![Some(Tensor::new(inputs[0].shape(), gz).expect("shape"))]
        }),
    )
}

/// Batch normalization layer with learnable affine parameters and running
/// statistics kept as buffers.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    axis: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, features: usize, axis: usize) -> Self {
        BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(&[features])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[features])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[features])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::ones(&[features])),
            axis,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: &Var) -> Result<Var> {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        let training = ctx.training();
        let (out, stats) = batch_norm(
            &ctx.tape,
            x,
            &gamma,
            &beta,
            (ctx.buffer(self.running_mean), ctx.buffer(self.running_var)),
            self.axis,
            training,
        )?;
        if let Some(stats) = stats {
            ctx.push_buffer_update(self.running_mean, stats.mean);
            ctx.push_buffer_update(self.running_var, stats.var);
        }
        Ok(out)
    }
}

/// Same-padded 2-D convolution layer with bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = c_in * kernel.0 * kernel.1;
        let weight = kaiming_init(&[c_out, c_in, kernel.0, kernel.1], fan_in, rng)?;
        Ok(Conv2d {
            weight: store.add(format!("{name}.weight"), weight),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[c_out])),
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: &Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        conv2d(&ctx.tape, x, &w, &b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn prelu_examples() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[3], &[-2.0, 3.0, 0.0]));
        let a = tape.leaf(Tensor::full(&[3], 0.25));
        let y = prelu(&tape, &x, &a).unwrap();
        assert_eq!(y.data(), &[-0.5, 3.0, 0.0]);
    }

    #[test]
    fn selu_zero() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[1], &[0.0]));
        assert_eq!(tape.selu(&x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn batch_norm_training_two_samples() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[2, 1], &[1.0, 3.0]));
        let (g, b) = (tape.leaf(Tensor::ones(&[1])), tape.leaf(Tensor::zeros(&[1])));
        let (rm, rv) = (Tensor::zeros(&[1]), Tensor::ones(&[1]));
        let (y, stats) = batch_norm(&tape, &x, &g, &b, (&rm, &rv), 1, true).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-4);
        assert!((y.data()[1] - 1.0).abs() < 1e-4);
        let stats = stats.unwrap();
        assert!((stats.mean.data()[0] - 0.2).abs() < 1e-12);
        // unbiased batch variance 2 blended with 1 at momentum 0.1
        assert!((stats.var.data()[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_standardized_input_is_identity() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[4, 1], &[-1.0, 1.0, -1.0, 1.0]));
        let (g, b) = (tape.leaf(Tensor::ones(&[1])), tape.leaf(Tensor::zeros(&[1])));
        let (rm, rv) = (Tensor::zeros(&[1]), Tensor::ones(&[1]));
        let (y, _) = batch_norm(&tape, &x, &g, &b, (&rm, &rv), 1, true).unwrap();
        assert!(y.value().max_abs_diff(x.value()) < 1e-5);
        let (y, stats) = batch_norm(&tape, &x, &g, &b, (&rm, &rv), 1, false).unwrap();
        assert!(stats.is_none());
        assert!(y.value().max_abs_diff(x.value()) < 1e-5);
    }

    #[test]
    fn dropout_modes() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = tape.leaf(Tensor::ones(&[100]));
        let y = dropout(&tape, &x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
        let y = dropout(&tape, &x, 0.5, false, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(dropout(&tape, &x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let tape = Tape::no_grad();
        for (p, seed) in [(0.2, 11), (0.5, 12)] {
            let x = tape.leaf(Tensor::ones(&[100_000]));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = dropout(&tape, &x, p, true, &mut rng).unwrap();
            let mean = y.data().iter().sum::<f64>() / 1e5;
            assert!((mean - 1.0).abs() < 0.01, "p={p}: mean {mean}");
            let again = dropout(&tape, &x, p, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(y.data(), again.data());
        }
    }

    #[test]
    fn conv_zero_weights_zero_output() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 2, 3, 4], 1.5));
        let w = tape.leaf(Tensor::zeros(&[3, 2, 3, 3]));
        let b = tape.leaf(Tensor::zeros(&[3]));
        let y = conv2d(&tape, &x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = crate::numerics::init::normal_init(&[2, 2, 4, 5], 1.0, &mut rng).unwrap();
        let ws = crate::numerics::init::normal_init(&[3, 2, 3, 3], 1.0, &mut rng).unwrap();
        let bs = crate::numerics::init::normal_init(&[3], 1.0, &mut rng).unwrap();
        let tape = Tape::no_grad();
        let y = conv2d(&tape, &tape.leaf(xs.clone()), &tape.leaf(ws.clone()), &tape.leaf(bs.clone())).unwrap();
        let (h, w) = (4isize, 5isize);
        for b in 0..2 {
            for co in 0..3 {
                for i in 0..h {
                    for j in 0..w {
                        let mut s = bs.data()[co];
                        for ci in 0..2 {
                            for di in 0..3isize {
                                for dj in 0..3isize {
                                    let (r, c) = (i + di - 1, j + dj - 1);
                                    if r < 0 || r >= h || c < 0 || c >= w {
                                        continue;
                                    }
                                    let xv = xs.data()[(((b * 2 + ci) as isize * h + r) * w + c) as usize];
                                    let wv = ws.data()[(((co * 2 + ci) * 3) as isize + di) as usize * 3 + dj as usize];
                                    s += xv * wv;
                                }
                            }
                        }
                        let got = y.data()[(((b * 3 + co) as isize * h + i) * w + j) as usize];
                        assert!((got - s).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn max_pool_shapes_and_values() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[1, 2, 5], &[1.0, 5.0, 2.0, 0.0, 9.0, 3.0, 4.0, 7.0, 1.0, 8.0]));
        let y = max_pool2d(&tape, &x, (1, 2)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[5.0, 2.0, 4.0, 7.0]);
        assert!(matches!(
            max_pool2d(&tape, &x, (1, 6)),
            Err(Error::InputTooSmall { .. })
        ));
    }

    #[test]
    fn cross_entropy_examples() {
        let tape = Tape::new();
        let z = tape.leaf(t(&[1, 2], &[0.0, 0.0]));
        let l = cross_entropy(&tape, &z, &[0], &[1.0, 1.0]).unwrap();
        assert!((l.data()[0] - 2f64.ln()).abs() < 1e-12);
        let l = cross_entropy(&tape, &z, &[0], &[0.9, 0.1]).unwrap();
        assert!((l.data()[0] - 0.9 * 2f64.ln()).abs() < 1e-12);
        let z = tape.leaf(t(&[1, 2], &[20.0, -20.0]));
        let l = cross_entropy(&tape, &z, &[0], &[1.0, 1.0]).unwrap();
        assert!(l.data()[0] < 1e-8);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let tape = Tape::new();
        let z = tape.leaf(t(&[2, 2], &[0.3, -1.2, 2.0, 0.5]));
        let w = [0.7, 0.3];
        let l = cross_entropy(&tape, &z, &[0, 1], &w).unwrap();
        let g = tape.backward(&l).unwrap();
        let p = z.value().softmax_t(1, 1.0).unwrap();
        let gz = g.get(&z).unwrap().data();
        let expect = [
            w[0] * (p.data()[0] - 1.0) / 2.0,
            w[0] * p.data()[1] / 2.0,
            w[1] * p.data()[2] / 2.0,
            w[1] * (p.data()[3] - 1.0) / 2.0,
        ];
        for (a, b) in gz.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
