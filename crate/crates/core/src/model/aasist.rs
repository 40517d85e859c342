use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, StackCombine};
use crate::dsp::SincFilterbank;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::graph::{HeteroState, KanGal, KanGraphPool, KanHsGal};
use crate::kan::KanLayer;
use crate::numerics::{Ctx, ParamId, ParamStore, Tape, Tensor, Var};

/// Index of the bona fide class in the logits.
pub const BONAFIDE_CLASS: usize = 0;
pub const NUM_CLASSES: usize = 2;

/// One of the parallel heterogeneous branches.
#[derive(Clone, Debug)]
pub struct Branch {
    first: KanHsGal,
    pool_temporal: KanGraphPool,
    pool_spatial: KanGraphPool,
    second: KanHsGal,
}

/// Outputs of both heterogeneous stages of a branch.
pub struct BranchStages {
    pub stage2: HeteroState,
    pub stage3: HeteroState,
}

impl Branch {
    pub fn forward(&self, ctx: &mut Ctx, state: &HeteroState) -> Result<BranchStages> {
        let stage2 = self.first.forward(ctx, state)?.state;
        let temporal = self.pool_temporal.forward(ctx, &stage2.temporal)?.nodes;
        let spatial = self.pool_spatial.forward(ctx, &stage2.spatial)?.nodes;
        let pooled = HeteroState {
            temporal,
            spatial,
            stack: stage2.stack.clone(),
        };
        let stage3 = self.second.forward(ctx, &pooled)?.state;
        Ok(BranchStages { stage2, stage3 })
    }
}

/// Temporal and spatial graphs formed from encoder features, before the
/// first attention layers.
pub struct FeatureGraphs {
    pub temporal: Var,
    pub spatial: Var,
}

/// Aggregated graphs and stack node fed to the readout.
pub struct Aggregate {
    pub temporal: Var,
    pub spatial: Var,
    pub stack: Var,
}

/// The full countermeasure: sinc front end, residual encoder, graph
/// attention with parallel heterogeneous branches and a KAN readout.
#[derive(Clone, Debug)]
pub struct Aasist3Model {
    config: ModelConfig,
    store: ParamStore,
    filterbank: SincFilterbank,
    encoder: Encoder,
    pe_temporal: ParamId,
    pe_spatial: ParamId,
    gal_temporal: KanGal,
    gal_spatial: KanGal,
    pool_temporal: KanGraphPool,
    pool_spatial: KanGraphPool,
    stack: ParamId,
    branches: Vec<Branch>,
    readout: KanLayer,
}

impl Aasist3Model {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let fe = &config.frontend;
        let filterbank = SincFilterbank::mel(fe.n_filters, fe.kernel_len, fe.f_min, fe.f_max)?;
        let encoder = Encoder::new(&mut store, "encoder", &config.encoder, &mut rng)?;
        let (channels, filters, frames) = config.feature_shape()?;
        let g = &config.graph;
        let kan = &config.kan;
        let d = g.dim;
        let pe_temporal = store.add("pe_temporal", Tensor::zeros(&[frames, channels]));
        let pe_spatial = store.add("pe_spatial", Tensor::zeros(&[filters, channels]));
        let gal_temporal = KanGal::new(&mut store, "gal_t", channels, d, g.temperature, g.dropout, kan, &mut rng)?;
        let gal_spatial = KanGal::new(&mut store, "gal_s", channels, d, g.temperature, g.dropout, kan, &mut rng)?;
        let pool_temporal = KanGraphPool::new(&mut store, "pool_t", d, g.pool_temporal, g.dropout, kan, &mut rng)?;
        let pool_spatial = KanGraphPool::new(&mut store, "pool_s", d, g.pool_spatial, g.dropout, kan, &mut rng)?;
        let stack = store.add("stack", Tensor::zeros(&[d]));
        let mut branches = Vec::with_capacity(g.branches);
        for b in 0..g.branches {
            let name = format!("branch{b}");
            let dims = (d, d, d, d);
            branches.push(Branch {
                first: KanHsGal::new(&mut store, &format!("{name}.hs1"), dims, g.temperature, g.dropout, kan, &mut rng)?,
                pool_temporal: KanGraphPool::new(&mut store, &format!("{name}.pool_t"), d, g.branch_pool, g.dropout, kan, &mut rng)?,
                pool_spatial: KanGraphPool::new(&mut store, &format!("{name}.pool_s"), d, g.branch_pool, g.dropout, kan, &mut rng)?,
                second: KanHsGal::new(&mut store, &format!("{name}.hs2"), dims, g.temperature, g.dropout, kan, &mut rng)?,
            });
        }
        let readout = KanLayer::new(&mut store, "readout", 5 * d, NUM_CLASSES, kan, &mut rng)?;
        Ok(Aasist3Model {
            config: config.clone(),
            store,
            filterbank,
            encoder,
            pe_temporal,
            pe_spatial,
            gal_temporal,
            gal_spatial,
            pool_temporal,
            pool_spatial,
            stack,
            branches,
            readout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn filterbank(&self) -> &SincFilterbank {
        &self.filterbank
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn readout_layer(&self) -> &KanLayer {
        &self.readout
    }

    /// Fixed filterbank map `[batch, 1, filters, frames]` of equal-length,
    /// already pre-emphasized waveforms. Never on the gradient tape.
    pub fn features(&self, waveforms: &[&[f64]]) -> Result<Tensor> {
        let len = waveforms.first().map(|w| w.len()).ok_or_else(|| Error::invalid("empty batch"))?;
        if waveforms.iter().any(|w| w.len() != len) {
            return Err(Error::invalid("waveforms in a batch must have equal length"));
        }
        let stride = self.config.frontend.stride;
        let frames = self.filterbank.frames(len, stride).ok_or(Error::InputTooSmall {
            axis: "waveform samples",
            got: len,
            min: self.filterbank.kernel_len(),
        })?;
        let per = self.filterbank.n_filters() * frames;
        let mut out = vec![0.0; waveforms.len() * per];
        for (w, dst) in waveforms.iter().zip(out.chunks_mut(per)) {
            self.filterbank.apply_into(w, stride, dst)?;
        }
        Tensor::new(&[waveforms.len(), 1, self.filterbank.n_filters(), frames], out)
    }

    /// Temporal nodes: max over the spectral axis of `|x̂|`; spatial nodes:
    /// max over the temporal axis. Positional embeddings are added after the
    /// reduction.
    pub fn graphs_from_features(&self, ctx: &mut Ctx, encoded: &Var) -> Result<FeatureGraphs> {
        let [b, c, f, t] = *encoded.shape() else {
            return Err(Error::shape("graphs_from_features", format!("{:?}", encoded.shape())));
        };
        let magnitude = ctx.tape.abs(encoded)?;
        let temporal = ctx.tape.max_axis(&magnitude, 2)?;
        let temporal = ctx.tape.transpose_last2(&temporal)?;
        let spatial = ctx.tape.max_axis(&magnitude, 3)?;
        let spatial = ctx.tape.transpose_last2(&spatial)?;
        let pe_t = ctx.param(self.pe_temporal);
        let pe_s = ctx.param(self.pe_spatial);
        if pe_t.shape() != [t, c] || pe_s.shape() != [f, c] {
            return Err(Error::shape(
                "positional embedding",
                format!(
                    "features [{b}, {c}, {f}, {t}] vs embeddings {:?} and {:?}",
                    pe_t.shape(),
                    pe_s.shape()
                ),
            ));
        }
        let pe_t = ctx.tape.expand(&pe_t, &[b, t, c])?;
        let pe_s = ctx.tape.expand(&pe_s, &[b, f, c])?;
        Ok(FeatureGraphs {
            temporal: ctx.tape.add(&temporal, &pe_t)?,
            spatial: ctx.tape.add(&spatial, &pe_s)?,
        })
    }

    /// Attention and pooling ahead of the branches.
    pub fn pre_branch(&self, ctx: &mut Ctx, graphs: &FeatureGraphs) -> Result<HeteroState> {
        let t = self.gal_temporal.forward(ctx, &graphs.temporal)?.nodes;
        let t = self.pool_temporal.forward(ctx, &t)?.nodes;
        let s = self.gal_spatial.forward(ctx, &graphs.spatial)?.nodes;
        let s = self.pool_spatial.forward(ctx, &s)?.nodes;
        let batch = t.shape()[0];
        let d = self.config.graph.dim;
        let stack = ctx.param(self.stack);
        let stack = ctx.tape.expand(&stack, &[batch, d])?;
        Ok(HeteroState {
            temporal: t,
            spatial: s,
            stack,
        })
    }

    /// Logits `[batch, 2]` for pre-emphasized waveforms of equal length.
    pub fn forward(&self, ctx: &mut Ctx, waveforms: &[&[f64]]) -> Result<Var> {
        let x = ctx.tape.constant(self.features(waveforms)?);
        let encoded = self.encoder.forward(ctx, &x)?;
        let graphs = self.graphs_from_features(ctx, &encoded)?;
        let pre = self.pre_branch(ctx, &graphs)?;
        let stages = self
            .branches
            .iter()
            .map(|b| b.forward(ctx, &pre))
            .collect::<Result<Vec<_>>>()?;
        let agg = aggregate_branches(&ctx.tape, &pre, &stages, self.config.graph.stack_combine)?;
        readout(ctx, &agg, &self.readout, &self.config.readout)
    }

    /// Eval-mode logits without recording gradients.
    pub fn logits(&self, waveforms: &[&[f64]]) -> Result<Tensor> {
        // eval mode draws no random numbers
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = Ctx::new(Tape::no_grad(), &self.store, false, &mut rng);
        Ok(self.forward(&mut ctx, waveforms)?.value().clone())
    }

    /// Eval-mode bona fide probability of each waveform.
    pub fn bonafide_probs(&self, waveforms: &[&[f64]]) -> Result<Vec<f64>> {
        let probs = self.logits(waveforms)?.softmax_t(1, 1.0)?;
        Ok(probs
            .data()
            .chunks(NUM_CLASSES)
            .map(|p| p[BONAFIDE_CLASS])
            .collect())
    }
}

fn elementwise_max(tape: &Tape, parts: &[&Var]) -> Result<Var> {
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc = tape.maximum(&acc, p)?;
    }
    Ok(acc)
}

/// Element-wise maximum across branches per stage, then the pre-branch,
/// second and third stage graphs concatenated along the node axis; stack
/// nodes are combined by maximum (or sum).
pub fn aggregate_branches(
    tape: &Tape,
    pre: &HeteroState,
    branches: &[BranchStages],
    combine: StackCombine,
) -> Result<Aggregate> {
    if branches.is_empty() {
        return Err(Error::invalid("aggregation needs at least one branch"));
    }
    let stage = |pick: fn(&BranchStages) -> &HeteroState| -> Result<HeteroState> {
        let states: Vec<&HeteroState> = branches.iter().map(pick).collect();
        let collect = |f: fn(&HeteroState) -> &Var| -> Result<Var> {
            let parts: Vec<&Var> = states.iter().map(|s| f(s)).collect();
            elementwise_max(tape, &parts)
        };
        Ok(HeteroState {
            temporal: collect(|s| &s.temporal)?,
            spatial: collect(|s| &s.spatial)?,
            stack: collect(|s| &s.stack)?,
        })
    };
    let s2 = stage(|b| &b.stage2)?;
    let s3 = stage(|b| &b.stage3)?;
    let temporal = tape.concat(&[&pre.temporal, &s2.temporal, &s3.temporal], 1)?;
    let spatial = tape.concat(&[&pre.spatial, &s2.spatial, &s3.spatial], 1)?;
    let stack = match combine {
        StackCombine::Max => elementwise_max(tape, &[&pre.stack, &s2.stack, &s3.stack])?,
        StackCombine::Sum => tape.add(&tape.add(&pre.stack, &s2.stack)?, &s3.stack)?,
    };
    Ok(Aggregate {
        temporal,
        spatial,
        stack,
    })
}

/// Node-wise max and mean of both graphs plus the stack node, concatenated
/// into `5·dim` features and mapped to class logits.
pub fn readout(
    ctx: &mut Ctx,
    agg: &Aggregate,
    layer: &KanLayer,
    config: &super::config::ReadoutConfig,
) -> Result<Var> {
    let t = ctx.dropout(&agg.temporal, config.graph_dropout)?;
    let s = ctx.dropout(&agg.spatial, config.graph_dropout)?;
    let stack = ctx.dropout(&agg.stack, config.graph_dropout)?;
    let parts = [
        ctx.tape.max_axis(&t, 1)?,
        ctx.tape.mean_axis(&t, 1)?,
        ctx.tape.max_axis(&s, 1)?,
        ctx.tape.mean_axis(&s, 1)?,
        stack,
    ];
    let mut dropped = Vec::with_capacity(5);
    for p in &parts {
        dropped.push(ctx.dropout(p, config.vector_dropout)?);
    }
    let refs: Vec<&Var> = dropped.iter().collect();
    let hidden = ctx.tape.concat(&refs, 1)?;
    layer.forward(ctx, &hidden)
}
