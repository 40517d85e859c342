//! Finite-difference gradient checks for every trainable layer, sized from a
//! model config.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{ConvUnit, ResidualBlock};
use crate::error::{Error, Result};
use crate::graph::{HeteroState, KanGal, KanGraphPool, KanHsGal};
use crate::kan::KanLayer;
use crate::model::{readout, Aasist3Model, Aggregate, ModelConfig};
use crate::numerics::gradcheck::{grad_check_params, CheckOptions, CheckReport};
use crate::numerics::init::normal_init;
use crate::numerics::nn::cross_entropy;
use crate::numerics::{Ctx, ParamId, ParamStore, Var};

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckTarget {
    Kan,
    Gal,
    Pool,
    HsGal,
    ConvUnit,
    Residual,
    Readout,
    CrossEntropy,
    Model,
}

impl CheckTarget {
    pub const ALL: [CheckTarget; 9] = [
        CheckTarget::Kan,
        CheckTarget::Gal,
        CheckTarget::Pool,
        CheckTarget::HsGal,
        CheckTarget::ConvUnit,
        CheckTarget::Residual,
        CheckTarget::Readout,
        CheckTarget::CrossEntropy,
        CheckTarget::Model,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckTarget::Kan => "kan",
            CheckTarget::Gal => "gal",
            CheckTarget::Pool => "pool",
            CheckTarget::HsGal => "hs-gal",
            CheckTarget::ConvUnit => "conv-unit",
            CheckTarget::Residual => "residual",
            CheckTarget::Readout => "readout",
            CheckTarget::CrossEntropy => "cross-entropy",
            CheckTarget::Model => "model",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            CheckTarget::Model => MODEL_TOLERANCE,
            _ => LAYER_TOLERANCE,
        }
    }
}

impl fmt::Display for CheckTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckTarget::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let names: Vec<&str> = CheckTarget::ALL.iter().map(|t| t.name()).collect();
            Error::invalid(format!("unknown module `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug)]
pub struct LayerCheck {
    pub target: CheckTarget,
    /// Description of the randomized shapes that were checked.
    pub shapes: String,
    pub report: CheckReport,
}

impl LayerCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.report.max_rel_error()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.target.tolerance()
    }
}

/// Weighted sum of `tanh` of every output, with fixed pseudo-random weights
/// so no gradient cancels by symmetry.
fn probe(ctx: &mut Ctx, outputs: &[&Var]) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5e);
    let mut total: Option<Var> = None;
    for v in outputs {
        let w = ctx.tape.constant(normal_init(v.shape(), 1.0, &mut rng)?);
        let t = ctx.tape.tanh(v)?;
        let s = ctx.tape.sum(&ctx.tape.mul(&t, &w)?)?;
        total = Some(match total {
            Some(acc) => ctx.tape.add(&acc, &s)?,
            None => s,
        });
    }
    total.ok_or_else(|| Error::invalid("probe needs at least one output"))
}

fn input(store: &mut ParamStore, name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Result<ParamId> {
    Ok(store.add(name, normal_init(shape, 1.0, rng)?))
}

/// Randomizes the KAN mixing slopes, which all start equal.
fn jitter_slopes(store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
    let ids: Vec<ParamId> = store
        .ids()
        .filter(|&id| store.entry(id).name.ends_with(".prelu"))
        .collect();
    for id in ids {
        let t = normal_init(store.get(id).shape(), 0.3, rng)?;
        store.set(id, t)?;
    }
    Ok(())
}

struct Checker {
    config: ModelConfig,
    rng: ChaCha8Rng,
    opts: CheckOptions,
}

impl Checker {
    fn dims(&mut self) -> (usize, usize, usize) {
        let batch = self.rng.random_range(2..=3);
        let n_t = self.rng.random_range(3..=6);
        let n_s = self.rng.random_range(3..=6);
        (batch, n_t, n_s)
    }

    fn run(&mut self, target: CheckTarget) -> Result<LayerCheck> {
        let mut store = ParamStore::new();
        let cfg = self.config.clone();
        let kan = &cfg.kan;
        let g = &cfg.graph;
        let d = g.dim;
        let rng = &mut self.rng;
        let opts = self.opts.clone();
        let (shapes, report) = match target {
            CheckTarget::Kan => {
                let (b, n_in, n_out) = (rng.random_range(2..=4), rng.random_range(2..=d), rng.random_range(1..=d));
                let layer = KanLayer::new(&mut store, "kan", n_in, n_out, kan, rng)?;
                let x = input(&mut store, "x", &[b, n_in], rng)?;
                jitter_slopes(&mut store, rng)?;
                let report = grad_check_params(&store, &opts, |ctx| {
                    let x = ctx.param(x);
                    let y = layer.forward(ctx, &x)?;
                    probe(ctx, &[&y])
                })?;
                (format!("{b}x{n_in} -> {n_out}"), report)
            }
            CheckTarget::Gal => {
                let (b, n, _) = self.dims();
                let rng = &mut self.rng;
                let layer = KanGal::new(&mut store, "gal", d, d, g.temperature, g.dropout, kan, rng)?;
                let h = input(&mut store, "h", &[b, n, d], rng)?;
                jitter_slopes(&mut store, rng)?;
                let report = grad_check_params(&store, &opts, |ctx| {
                    let h = ctx.param(h);
                    let out = layer.forward(ctx, &h)?;
                    probe(ctx, &[&out.nodes])
                })?;
                (format!("[{b}, {n}, {d}]"), report)
            }
            CheckTarget::Pool => {
                let (b, n, _) = self.dims();
                let rng = &mut self.rng;
                let layer = KanGraphPool::new(&mut store, "pool", d, g.pool_spatial, g.dropout, kan, rng)?;
                let h = input(&mut store, "h", &[b, n, d], rng)?;
                jitter_slopes(&mut store, rng)?;
                let report = grad_check_params(&store, &opts, |ctx| {
                    let h = ctx.param(h);
                    let out = layer.forward(ctx, &h)?;
                    probe(ctx, &[&out.nodes])
                })?;
                (format!("[{b}, {n}, {d}] ratio {}", g.pool_spatial), report)
            }
            CheckTarget::HsGal => {
                let (b, n_t, n_s) = self.dims();
                let rng = &mut self.rng;
                let layer = KanHsGal::new(&mut store, "hs", (d, d, d, d), g.temperature, g.dropout, kan, rng)?;
                let t = input(&mut store, "t", &[b, n_t, d], rng)?;
                let s = input(&mut store, "s", &[b, n_s, d], rng)?;
                let st = input(&mut store, "stack", &[b, d], rng)?;
                jitter_slopes(&mut store, rng)?;
                let report = grad_check_params(&store, &opts, |ctx| {
                    let state = HeteroState {
                        temporal: ctx.param(t),
                        spatial: ctx.param(s),
                        stack: ctx.param(st),
                    };
                    let out = layer.forward(ctx, &state)?.state;
                    probe(ctx, &[&out.temporal, &out.spatial, &out.stack])
                })?;
                (format!("batch {b}, {n_t}+{n_s} nodes, dim {d}"), report)
            }
            CheckTarget::ConvUnit => {
                let c_in = cfg.encoder.channels[0];
                let c_out = *cfg.encoder.channels.last().expect("validated");
                let b = rng.random_range(2..=3);
                let (f, t) = (rng.random_range(3..=5), rng.random_range(4..=7));
                let unit = ConvUnit::new(&mut store, "unit", c_in, c_out, cfg.encoder.kernel, rng)?;
                let x = input(&mut store, "x", &[b, c_in, f, t], rng)?;
                let report = grad_check_params(&store, &opts, |ctx| {
                    let x = ctx.param(x);
                    let y = unit.forward(ctx, &x)?;
                    probe(ctx, &[&y])
                })?;
                (format!("[{b}, {c_in}, {f}, {t}] -> {c_out} channels"), report)
            }
            CheckTarget::Residual => {
                let c = cfg.encoder.channels[0];
                let pool = cfg.encoder.block_pool;
                let b = 2;
                let (f, t) = (pool[0] * rng.random_range(2..=3), pool[1] * 2);
                let first = ResidualBlock::new(&mut store, "first", 1, c, true, cfg.encoder.kernel, pool, rng)?;
                let later = ResidualBlock::new(&mut store, "later", c, c + 1, false, cfg.encoder.kernel, pool, rng)?;
                let x0 = input(&mut store, "x0", &[b, 1, f, t], rng)?;
                let x1 = input(&mut store, "x1", &[b, c, f, t], rng)?;
                let report = grad_check_params(&store, &opts, |ctx| {
                    let (x0, x1) = (ctx.param(x0), ctx.param(x1));
                    let y0 = first.forward(ctx, &x0)?;
                    let y1 = later.forward(ctx, &x1)?;
                    probe(ctx, &[&y0, &y1])
                })?;
                (format!("[{b}, 1|{c}, {f}, {t}], pool {pool:?}"), report)
            }
            CheckTarget::Readout => {
                let (b, n_t, n_s) = self.dims();
                let rng = &mut self.rng;
                let layer = KanLayer::new(&mut store, "readout", 5 * d, 2, kan, rng)?;
                let t = input(&mut store, "t", &[b, n_t, d], rng)?;
                let s = input(&mut store, "s", &[b, n_s, d], rng)?;
                let st = input(&mut store, "stack", &[b, d], rng)?;
                jitter_slopes(&mut store, rng)?;
                let labels: Vec<usize> = (0..b).map(|i| i % 2).collect();
                let report = grad_check_params(&store, &opts, |ctx| {
                    let agg = Aggregate {
                        temporal: ctx.param(t),
                        spatial: ctx.param(s),
                        stack: ctx.param(st),
                    };
                    let logits = readout(ctx, &agg, &layer, &cfg.readout)?;
                    cross_entropy(&ctx.tape, &logits, &labels, &[1.0, 1.0])
                })?;
                (format!("batch {b}, {n_t}+{n_s} nodes, dim {d}"), report)
            }
            CheckTarget::CrossEntropy => {
                let b = rng.random_range(2..=6);
                let z = input(&mut store, "logits", &[b, 2], rng)?;
                let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
                let weights = [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
                let report = grad_check_params(&store, &opts, |ctx| {
                    let z = ctx.param(z);
                    cross_entropy(&ctx.tape, &z, &labels, &weights)
                })?;
                (format!("[{b}, 2]"), report)
            }
            CheckTarget::Model => return self.model(),
        };
        Ok(LayerCheck { target, shapes, report })
    }

    /// The whole network on a short chunk, probing a sample of coordinates
    /// of every tensor.
    fn model(&mut self) -> Result<LayerCheck> {
        let mut cfg = self.config.clone();
        cfg.inference.chunk_secs = 0.5;
        cfg.inference.hop_secs = 0.25;
        let mut model = Aasist3Model::new(&cfg)?;
        jitter_slopes(model.params_mut(), &mut self.rng)?;
        // positional embeddings and the stack node start at zero
        for name in ["pe_temporal", "pe_spatial", "stack"] {
            let id = model.params().find(name).expect("model tensor");
            let t = normal_init(model.params().get(id).shape(), 0.1, &mut self.rng)?;
            model.params_mut().set(id, t)?;
        }
        let len = cfg.inference.chunk_samples();
        let waves: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..len).map(|_| self.rng.random_range(-0.5..0.5)).collect())
            .collect();
        let refs: Vec<&[f64]> = waves.iter().map(Vec::as_slice).collect();
        // upstream perturbations move thousands of activations at once; a
        // smaller step keeps them from crossing SELU, abs and max-pool kinks
        let opts = CheckOptions {
            eps: 1e-6,
            max_coords: Some(3),
            ..self.opts.clone()
        };
        let report = grad_check_params(model.params(), &opts, |ctx| {
            let logits = model.forward(ctx, &refs)?;
            cross_entropy(&ctx.tape, &logits, &[0, 1], &[1.0, 1.0])
        })?;
        let (c, f, t) = cfg.feature_shape()?;
        Ok(LayerCheck {
            target: CheckTarget::Model,
            shapes: format!("2 x {len} samples, features [{c}, {f}, {t}]"),
            report,
        })
    }
}

/// Runs the checks for `targets` in 64-bit training mode with dropout masks
/// held fixed across perturbations.
pub fn run_gradcheck_suite(config: &ModelConfig, targets: &[CheckTarget], seed: u64) -> Result<Vec<LayerCheck>> {
    config.validate()?;
    let mut checker = Checker {
        config: config.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        opts: CheckOptions {
            seed,
            ..CheckOptions::default()
        },
    };
    targets.iter().map(|&t| checker.run(t)).collect()
}

