use rand::Rng;

use super::graph_dims;
use crate::error::{Error, Result};
use crate::kan::{KanConfig, KanLayer};
use crate::numerics::init::xavier_init;
use crate::numerics::nn::BatchNorm;
use crate::numerics::{Ctx, ParamId, ParamStore, Tape, Tensor, Var};

/// Temporal graph, spatial graph and stack node flowing through the
/// heterogeneous layers.
#[derive(Clone, Debug)]
pub struct HeteroState {
    /// `[batch, n_t, dim]`
    pub temporal: Var,
    /// `[batch, n_s, dim]`
    pub spatial: Var,
    /// `[batch, dim]`
    pub stack: Var,
}

/// Which attention projection scores a node pair of the joint graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Temporal,
    Spatial,
    Cross,
}

/// Block of the pair `(i, j)` (0-based) in a joint graph whose first `n_t`
/// nodes are temporal. In 1-based indices the rule is: temporal when
/// `i ≤ n_t` and `j ≤ n_t`, otherwise spatial when `i ≥ n_t` and `j ≥ n_t`,
/// otherwise cross.
pub fn block_of(i: usize, j: usize, n_t: usize) -> Block {
    let (i, j) = (i + 1, j + 1);
    if i <= n_t && j <= n_t {
        Block::Temporal
    } else if i >= n_t && j >= n_t {
        Block::Spatial
    } else {
        Block::Cross
    }
}

/// Splits a joint `[batch, n_t + n_s, dim]` graph back into its parts.
pub fn split_heterogeneous(tape: &Tape, joint: &Var, n_t: usize, n_s: usize) -> Result<(Var, Var)> {
    let (_, n, _) = graph_dims("split_heterogeneous", joint)?;
    if n != n_t + n_s || n_t == 0 || n_s == 0 {
        return Err(Error::shape(
            "split_heterogeneous",
            format!("{n} nodes cannot split into {n_t} + {n_s}"),
        ));
    }
    Ok((tape.narrow(joint, 1, 0, n_t)?, tape.narrow(joint, 1, n_t, n_s)?))
}

/// Heterogeneous stacking graph attention layer.
#[derive(Clone, Debug)]
pub struct KanHsGal {
    proj_temporal: KanLayer,
    proj_spatial: KanLayer,
    pair_kan: KanLayer,
    w_temporal: ParamId,
    w_spatial: ParamId,
    w_cross: ParamId,
    stack_attn_kan: KanLayer,
    w_stack: ParamId,
    stack_from_nodes: KanLayer,
    stack_self: KanLayer,
    agg_kan: KanLayer,
    self_kan: KanLayer,
    bn: BatchNorm,
    temperature: f64,
    dropout: f64,
}

pub struct HsGalOutput {
    pub state: HeteroState,
    /// Row-normalized pair attention `[batch, n, n]`.
    pub pair_attention: Var,
    /// Stack attention over nodes `[batch, n, 1]`.
    pub stack_attention: Var,
}

impl KanHsGal {
    /// `dims` is `(temporal in, spatial in, joint, out)`; the incoming stack
    /// node must have the joint dimension.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize, usize, usize),
        temperature: f64,
        dropout: f64,
        kan: &KanConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(Error::invalid("attention temperature must be positive"));
        }
        let (d_t, d_s, d_st, d_out) = dims;
        let kan_layer = |store: &mut ParamStore, idx: usize, i: usize, o: usize, rng: &mut _| {
            KanLayer::new(store, &format!("{name}.kan{idx}"), i, o, kan, rng)
        };
        let proj_temporal = kan_layer(store, 1, d_t, d_st, rng)?;
        let proj_spatial = kan_layer(store, 2, d_s, d_st, rng)?;
        let pair_kan = kan_layer(store, 3, d_st, d_st, rng)?;
        let stack_attn_kan = kan_layer(store, 4, d_st, d_st, rng)?;
        let stack_from_nodes = kan_layer(store, 5, d_st, d_out, rng)?;
        let stack_self = kan_layer(store, 6, d_st, d_out, rng)?;
        let agg_kan = kan_layer(store, 7, d_st, d_out, rng)?;
        let self_kan = kan_layer(store, 8, d_st, d_out, rng)?;
        let mut col = |label: &str, rng: &mut _| -> Result<ParamId> {
            Ok(store.add(format!("{name}.{label}"), xavier_init(&[d_st, 1], d_st, 1, rng)?))
        };
        let w_temporal = col("w11", rng)?;
        let w_spatial = col("w22", rng)?;
        let w_cross = col("w12", rng)?;
        let w_stack = col("w_m", rng)?;
        Ok(KanHsGal {
            proj_temporal,
            proj_spatial,
            pair_kan,
            w_temporal,
            w_spatial,
            w_cross,
            stack_attn_kan,
            w_stack,
            stack_from_nodes,
            stack_self,
            agg_kan,
            self_kan,
            bn: BatchNorm::new(store, &format!("{name}.bn"), d_out, 2),
            temperature,
            dropout,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, state: &HeteroState) -> Result<HsGalOutput> {
        let (b, n_t, _) = graph_dims("kan_hs_gal", &state.temporal)?;
        let (b_s, n_s, _) = graph_dims("kan_hs_gal", &state.spatial)?;
        let d_st = self.pair_kan.n_in();
        if b_s != b || state.stack.shape() != [b, d_st] {
            return Err(Error::shape(
                "kan_hs_gal",
                format!(
                    "temporal {:?}, spatial {:?}, stack {:?}",
                    state.temporal.shape(),
                    state.spatial.shape(),
                    state.stack.shape()
                ),
            ));
        }
        let n = n_t + n_s;
        let ht = self.proj_temporal.forward(ctx, &state.temporal)?;
        let hs = self.proj_spatial.forward(ctx, &state.spatial)?;
        let joint = ctx.tape.concat(&[&ht, &hs], 1)?;
        let joint = ctx.dropout(&joint, self.dropout)?;

        // pair attention with block-specific projections
        let pairs = ctx.tape.pairwise_mul(&joint)?;
        let primary = self.pair_kan.forward(ctx, &pairs)?;
        let primary = ctx.tape.tanh(&primary)?;
        let mut logits: Option<Var> = None;
        for (block, w) in [
            (Block::Temporal, self.w_temporal),
            (Block::Spatial, self.w_spatial),
            (Block::Cross, self.w_cross),
        ] {
            let w = ctx.param(w);
            let scored = ctx.tape.matmul(&primary, &w)?;
            let scored = ctx.tape.reshape(&scored, &[b, n, n])?;
            let mask = block_mask(block, b, n, n_t)?;
            let mask = ctx.tape.constant(mask);
            let part = ctx.tape.mul(&scored, &mask)?;
            logits = Some(match logits {
                Some(acc) => ctx.tape.add(&acc, &part)?,
                None => part,
            });
        }
        let logits = logits.expect("three blocks");
        let pair_attention = ctx.tape.softmax(&logits, 2, self.temperature)?;

        // stack-node attention over all nodes
        let stack = ctx.tape.reshape(&state.stack, &[b, 1, d_st])?;
        let stack = ctx.tape.expand(&stack, &[b, n, d_st])?;
        let modulated = ctx.tape.mul(&joint, &stack)?;
        let modulated = self.stack_attn_kan.forward(ctx, &modulated)?;
        let modulated = ctx.tape.tanh(&modulated)?;
        let w_stack = ctx.param(self.w_stack);
        let stack_logits = ctx.tape.matmul(&modulated, &w_stack)?;
        let stack_attention = ctx.tape.softmax(&stack_logits, 1, self.temperature)?;
        let pooled = ctx.tape.matmul(&ctx.tape.transpose_last2(&stack_attention)?, &joint)?;
        let pooled = ctx.tape.reshape(&pooled, &[b, d_st])?;
        let from_nodes = self.stack_from_nodes.forward(ctx, &pooled)?;
        let own_stack = self.stack_self.forward(ctx, &state.stack)?;
        let new_stack = ctx.tape.add(&from_nodes, &own_stack)?;

        // node update
        let aggregated = ctx.tape.matmul(&pair_attention, &joint)?;
        let agg = self.agg_kan.forward(ctx, &aggregated)?;
        let own = self.self_kan.forward(ctx, &joint)?;
        let sum = ctx.tape.add(&agg, &own)?;
        let nodes = self.bn.forward(ctx, &sum)?;
        let (temporal, spatial) = split_heterogeneous(&ctx.tape, &nodes, n_t, n_s)?;
        Ok(HsGalOutput {
            state: HeteroState {
                temporal,
                spatial,
                stack: new_stack,
            },
            pair_attention,
            stack_attention,
        })
    }
}

fn block_mask(block: Block, batch: usize, n: usize, n_t: usize) -> Result<Tensor> {
    let one: Vec<f64> = (0..n * n)
        .map(|k| if block_of(k / n, k % n, n_t) == block { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(&[batch, n, n], one.repeat(batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_pairs_follow_first_matching_case() {
        // n_t = 3: 1-based pair (3, 3) is temporal, (3, 4) satisfies the
        // second case and is spatial
        assert_eq!(block_of(2, 2, 3), Block::Temporal);
        assert_eq!(block_of(2, 3, 3), Block::Spatial);
        assert_eq!(block_of(3, 2, 3), Block::Spatial);
        assert_eq!(block_of(1, 4, 3), Block::Cross);
        assert_eq!(block_of(4, 0, 3), Block::Cross);
    }

    #[test]
    fn split_rejects_bad_counts() {
        let tape = Tape::no_grad();
        let x = tape.constant(Tensor::zeros(&[1, 5, 2]));
        let (t, s) = split_heterogeneous(&tape, &x, 3, 2).unwrap();
        assert_eq!((t.shape(), s.shape()), (&[1, 3, 2][..], &[1, 2, 2][..]));
        assert!(split_heterogeneous(&tape, &x, 3, 3).is_err());
    }
}
