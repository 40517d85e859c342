use rand::Rng;

use super::graph_dims;
use crate::error::{Error, Result};
use crate::kan::{KanConfig, KanLayer};
use crate::numerics::init::xavier_init;
use crate::numerics::nn::BatchNorm;
use crate::numerics::{Ctx, ParamId, ParamStore, Var};

/// Graph attention layer with KAN edge functions.
#[derive(Clone, Debug)]
pub struct KanGal {
    attn_kan: KanLayer,
    w_att: ParamId,
    agg_kan: KanLayer,
    self_kan: KanLayer,
    bn: BatchNorm,
    temperature: f64,
    dropout: f64,
}

/// Node features after the layer and the `[batch, nodes, nodes]` attention map.
pub struct GalOutput {
    pub nodes: Var,
    pub attention: Var,
}

impl KanGal {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        temperature: f64,
        dropout: f64,
        kan: &KanConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(Error::invalid("attention temperature must be positive"));
        }
        Ok(KanGal {
            attn_kan: KanLayer::new(store, &format!("{name}.kan1"), in_dim, in_dim, kan, rng)?,
            w_att: store.add(format!("{name}.w_att"), xavier_init(&[in_dim, 1], in_dim, 1, rng)?),
            agg_kan: KanLayer::new(store, &format!("{name}.kan2"), in_dim, out_dim, kan, rng)?,
            self_kan: KanLayer::new(store, &format!("{name}.kan3"), in_dim, out_dim, kan, rng)?,
            bn: BatchNorm::new(store, &format!("{name}.bn"), out_dim, 2),
            temperature,
            dropout,
        })
    }

    pub fn forward(&self, ctx: &mut Ctx, h: &Var) -> Result<GalOutput> {
        let (b, n, d) = graph_dims("kan_gal", h)?;
        if d != self.attn_kan.n_in() {
            return Err(Error::shape("kan_gal", format!("node dim {d}, layer expects {}", self.attn_kan.n_in())));
        }
        let h = ctx.dropout(h, self.dropout)?;
        let pairs = ctx.tape.pairwise_mul(&h)?;
        let mapped = self.attn_kan.forward(ctx, &pairs)?;
        let mapped = ctx.tape.tanh(&mapped)?;
        let w_att = ctx.param(self.w_att);
        let logits = ctx.tape.matmul(&mapped, &w_att)?;
        let logits = ctx.tape.reshape(&logits, &[b, n, n])?;
        let attention = ctx.tape.softmax(&logits, 2, self.temperature)?;
        let aggregated = ctx.tape.matmul(&attention, &h)?;
        let agg = self.agg_kan.forward(ctx, &aggregated)?;
        let own = self.self_kan.forward(ctx, &h)?;
        let sum = ctx.tape.add(&agg, &own)?;
        let nodes = self.bn.forward(ctx, &sum)?;
        Ok(GalOutput { nodes, attention })
    }
}
