//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Ctx, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn scalar_of(v: &Var) -> Result<f64> {
    let value = v.value().item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check"));
    }
    Ok(value)
}

/// Checks the gradient of a scalar function of one tensor at every
/// coordinate and returns the largest relative error.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &Var) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::invalid("grad_check step must be positive"));
    }
    let tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let out = f(&tape, &leaf)?;
    scalar_of(&out)?;
    let analytic = tape.backward(&out)?.get_or_zeros(&leaf);

    let eval = |probe: Tensor| -> Result<f64> {
        let tape = Tape::no_grad();
        let leaf = tape.leaf(probe);
        scalar_of(&f(&tape, &leaf)?)
    };
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let plus = eval(probe.clone())?;
        probe.data_mut()[k] = orig - eps;
        let minus = eval(probe.clone())?;
        probe.data_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[k], numeric));
    }
    Ok(worst)
}

/// Options for [`grad_check_params`].
#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub eps: f64,
    /// Upper bound on probed coordinates per tensor; `None` checks all.
    pub max_coords: Option<usize>,
    /// Seeds both coordinate sampling and the forward-pass random stream.
    /// The forward stream is re-seeded for every evaluation, so dropout masks
    /// stay fixed across perturbations.
    pub seed: u64,
    pub training: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            eps: DEFAULT_EPS,
            max_coords: None,
            seed: 0,
            training: true,
        }
    }
}

/// Largest relative error found for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Result of a parameter-wise gradient check.
#[derive(Clone, Debug, Default)]
pub struct CheckReport {
    pub params: Vec<ParamCheck>,
}

impl CheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Checks the gradient of a scalar loss with respect to every trainable
/// tensor the loss touches. Inputs that should be checked too can simply be
/// registered in the store.
pub fn grad_check_params<F>(store: &ParamStore, opts: &CheckOptions, f: F) -> Result<CheckReport>
where
    F: Fn(&mut Ctx) -> Result<Var>,
{
    if opts.eps <= 0.0 {
        return Err(Error::invalid("grad_check step must be positive"));
    }
    let mut fwd_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ctx = Ctx::new(Tape::new(), store, opts.training, &mut fwd_rng);
    let loss = f(&mut ctx)?;
    scalar_of(&loss)?;
    let grads = ctx.tape.backward(&loss)?;
    let analytic = ctx.param_grads(&grads);
    drop(ctx);

    let eval = |work: &ParamStore| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut ctx = Ctx::new(Tape::no_grad(), work, opts.training, &mut rng);
        scalar_of(&f(&mut ctx)?)
    };

    let mut pick_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut work = store.clone();
    let mut report = CheckReport::default();
    for (id, grad) in analytic {
        let len = grad.len();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < len => {
                let mut c = sample(&mut pick_rng, len, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        let mut worst = 0.0f64;
        for &k in &coords {
            let orig = work.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + opts.eps;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - opts.eps;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            worst = worst.max(relative_error(grad.data()[k], numeric));
        }
        report.params.push(ParamCheck {
            name: store.entry(id).name.clone(),
            max_rel_error: worst,
            coords_checked: coords.len(),
        });
    }
    Ok(report)
}
