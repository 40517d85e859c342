use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{build_grid, Basis, SplineGrid};
use crate::error::{Error, Result};
use crate::numerics::init::{kaiming_init, normal_init};
use crate::numerics::{Ctx, FnBackward, ParamId, ParamStore, Tape, Tensor, Var};

/// Shape of the spline grid and initialization of a KAN layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KanConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_size: usize,
    pub degree: usize,
    pub prelu_init: f64,
    pub coeff_std: f64,
}

impl Default for KanConfig {
    fn default() -> Self {
        KanConfig {
            grid_min: -1.0,
            grid_max: 1.0,
            grid_size: 16,
            degree: 4,
            prelu_init: 0.25,
            coeff_std: 0.1,
        }
    }
}

impl KanConfig {
    pub fn grid(&self) -> Result<SplineGrid> {
        build_grid(self.grid_min, self.grid_max, self.grid_size, self.degree)
    }
}

/// Parameters of one edge function.
#[derive(Clone, Copy, Debug)]
pub struct EdgeParams<'a> {
    pub w_base: f64,
    pub w_spline: f64,
    pub slope: f64,
    pub coeffs: &'a [f64],
}

fn prelu_scalar(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// `w_b·PReLU(x) + w_s·Σ c_i B_i(x)`.
pub fn phi_edge(x: f64, edge: EdgeParams<'_>, basis: &dyn Basis) -> f64 {
    let mut values = vec![0.0; basis.max_active()];
    let mut derivs = vec![0.0; basis.max_active()];
    let range = basis.eval_active(x, &mut values, &mut derivs);
    let spline: f64 = range
        .enumerate()
        .map(|(slot, i)| edge.coeffs[i] * values[slot])
        .sum();
    edge.w_base * prelu_scalar(x, edge.slope) + edge.w_spline * spline
}

/// Applies a KAN layer to the last axis of `x` (`[.., n_in]` → `[.., n_out]`).
/// `coeffs` is `[n_out, n_in, basis]`, `w_base`/`w_spline` are
/// `[n_out, n_in]` and `slopes` is `[n_in]`.
pub fn kan_forward<B>(
    tape: &Tape,
    x: &Var,
    coeffs: &Var,
    w_base: &Var,
    w_spline: &Var,
    slopes: &Var,
    basis: B,
) -> Result<Var>
where
    B: Basis + 'static,
{
    let n_in = *x.shape().last().ok_or_else(|| Error::shape("kan", "scalar input"))?;
    let n_out = w_base.shape().first().copied().unwrap_or(0);
    let nb = basis.num_functions();
    if w_base.shape() != [n_out, n_in]
        || w_spline.shape() != [n_out, n_in]
        || coeffs.shape() != [n_out, n_in, nb]
        || slopes.shape() != [n_in]
    {
        return Err(Error::shape(
            "kan",
            format!(
                "input {:?}, coeffs {:?}, w_base {:?}, w_spline {:?}, slopes {:?}",
                x.shape(),
                coeffs.shape(),
                w_base.shape(),
                w_spline.shape(),
                slopes.shape()
            ),
        ));
    }
    let rows = x.value().len() / n_in;
    let ma = basis.max_active();
    let (xd, cd, wb, ws, sl) = (x.data(), coeffs.data(), w_base.data(), w_spline.data(), slopes.data());
    let mut out = vec![0.0; rows * n_out];
    let mut values = vec![0.0; ma];
    let mut derivs = vec![0.0; ma];
    for r in 0..rows {
        let orow = &mut out[r * n_out..(r + 1) * n_out];
        for p in 0..n_in {
            let v = xd[r * n_in + p];
            let base = prelu_scalar(v, sl[p]);
            let range = basis.eval_active(v, &mut values, &mut derivs);
            let active = &values[..range.len()];
            for (q, o) in orow.iter_mut().enumerate() {
                let e = q * n_in + p;
                let c = &cd[e * nb + range.start..e * nb + range.end];
                let spline: f64 = c.iter().zip(active).map(|(a, b)| a * b).sum();
                *o += wb[e] * base + ws[e] * spline;
            }
        }
    }
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().expect("nonempty") = n_out;
    let out = Tensor::new(&out_shape, out)?;
    tape.record(
        out,
        &[x, coeffs, w_base, w_spline, slopes],
        FnBackward::new("kan", move |inputs, _, g| {
            let (xd, cd, wb, ws, sl) = (
                inputs[0].data(),
                inputs[1].data(),
                inputs[2].data(),
                inputs[3].data(),
                inputs[4].data(),
            );
            let gd = g.data();
            let mut gx = vec![0.0; xd.len()];
            let mut gc = vec![0.0; cd.len()];
            let mut gwb = vec![0.0; wb.len()];
            let mut gws = vec![0.0; ws.len()];
            let mut ga = vec![0.0; sl.len()];
            let mut values = vec![0.0; ma];
            let mut derivs = vec![0.0; ma];
            for r in 0..rows {
                let grow = &gd[r * n_out..(r + 1) * n_out];
                for p in 0..n_in {
                    let v = xd[r * n_in + p];
                    let base = prelu_scalar(v, sl[p]);
                    let dbase = if v > 0.0 { 1.0 } else { sl[p] };
                    let neg = v.min(0.0);
                    let range = basis.eval_active(v, &mut values, &mut derivs);
                    let n_act = range.len();
                    let mut dx = 0.0;
                    for (q, &gq) in grow.iter().enumerate() {
                        if gq == 0.0 {
                            continue;
                        }
                        let e = q * n_in + p;
                        let cbase = e * nb + range.start;
                        let c = &cd[cbase..cbase + n_act];
                        let mut spline = 0.0;
                        let mut dspline = 0.0;
                        for k in 0..n_act {
                            spline += c[k] * values[k];
                            dspline += c[k] * derivs[k];
                            gc[cbase + k] += gq * ws[e] * values[k];
                        }
                        gwb[e] += gq * base;
                        gws[e] += gq * spline;
                        ga[p] += gq * wb[e] * neg;
                        dx += gq * (wb[e] * dbase + ws[e] * dspline);
                    }
                    gx[r * n_in + p] = dx;
                }
            }
            let t = |i: usize, d: Vec<f64>| Some(Tensor::new(inputs[i].shape(), d).expect("shape"));
            vec![t(0, gx), t(1, gc), t(2, gwb), t(3, gws), t(4, ga)]
        }),
    )
}

/// A layer of `n_out × n_in` learnable edge functions sharing one grid.
#[derive(Clone, Debug)]
pub struct KanLayer {
    n_in: usize,
    n_out: usize,
    grid: SplineGrid,
    pub coeffs: ParamId,
    pub w_base: ParamId,
    pub w_spline: ParamId,
    pub slopes: ParamId,
}

impl KanLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        config: &KanConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::invalid(format!("KAN layer {name} needs positive dimensions")));
        }
        let grid = config.grid()?;
        let nb = grid.num_functions();
        let w_base = kaiming_init(&[n_out, n_in], n_in, rng)?;
        let w_spline = kaiming_init(&[n_out, n_in], n_in, rng)?;
        let coeffs = normal_init(&[n_out, n_in, nb], config.coeff_std, rng)?;
        Ok(KanLayer {
            n_in,
            n_out,
            grid,
            coeffs: store.add(format!("{name}.coeffs"), coeffs),
            w_base: store.add(format!("{name}.w_base"), w_base),
            w_spline: store.add(format!("{name}.w_spline"), w_spline),
            slopes: store.add(format!("{name}.prelu"), Tensor::full(&[n_in], config.prelu_init)),
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    pub fn forward(&self, ctx: &mut Ctx, x: &Var) -> Result<Var> {
        if x.shape().last() != Some(&self.n_in) {
            return Err(Error::shape(
                "kan",
                format!("input {:?} for a layer with {} inputs", x.shape(), self.n_in),
            ));
        }
        let c = ctx.param(self.coeffs);
        let wb = ctx.param(self.w_base);
        let ws = ctx.param(self.w_spline);
        let a = ctx.param(self.slopes);
        kan_forward(&ctx.tape, x, &c, &wb, &ws, &a, self.grid.clone())
    }
}
