use rand::Rng;

use super::graph_dims;
use crate::error::{Error, Result};
use crate::kan::{KanConfig, KanLayer};
use crate::numerics::{Ctx, ParamStore, Var};

/// Number of nodes kept when pooling `n` nodes at `ratio`.
pub fn kept_nodes(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!("pool ratio must be in (0, 1], got {ratio}")));
    }
    Ok(((ratio * n as f64).ceil() as usize).clamp(1, n))
}

/// Indices of the `k` highest scores in ascending index order; equal scores
/// prefer the lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = order[..k.min(scores.len())].to_vec();
    kept.sort_unstable();
    kept
}

/// Gated top-k node selection scored by a KAN projection.
#[derive(Clone, Debug)]
pub struct KanGraphPool {
    score_kan: KanLayer,
    ratio: f64,
    dropout: f64,
}

pub struct PoolOutput {
    pub nodes: Var,
    /// Per batch entry, the kept input node indices in ascending order.
    pub kept: Vec<Vec<usize>>,
    /// Sigmoid gates `[batch, nodes, 1]` of all input nodes.
    pub scores: Var,
}

impl KanGraphPool {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        ratio: f64,
        dropout: f64,
        kan: &KanConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        kept_nodes(1, ratio)?;
        Ok(KanGraphPool {
            score_kan: KanLayer::new(store, &format!("{name}.kan"), dim, 1, kan, rng)?,
            ratio,
            dropout,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn forward(&self, ctx: &mut Ctx, h: &Var) -> Result<PoolOutput> {
        let (b, n, d) = graph_dims("kan_graph_pool", h)?;
        let dropped = ctx.dropout(h, self.dropout)?;
        let logits = self.score_kan.forward(ctx, &dropped)?;
        let scores = ctx.tape.sigmoid(&logits)?;
        let gates = ctx.tape.expand(&scores, &[b, n, d])?;
        let gated = ctx.tape.mul(h, &gates)?;
        let k = kept_nodes(n, self.ratio)?;
        let kept: Vec<Vec<usize>> = scores
            .data()
            .chunks(n)
            .map(|s| top_k_indices(s, k))
            .collect();
        let nodes = ctx.tape.gather_rows(&gated, kept.clone())?;
        Ok(PoolOutput { nodes, kept, scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_rounding() {
        assert_eq!(kept_nodes(29, 0.5).unwrap(), 15);
        assert_eq!(kept_nodes(7, 1.0).unwrap(), 7);
        assert_eq!(kept_nodes(3, 0.01).unwrap(), 1);
        assert!(kept_nodes(3, 0.0).is_err());
        assert!(kept_nodes(3, 1.5).is_err());
    }

    #[test]
    fn ties_prefer_low_index() {
        assert_eq!(top_k_indices(&[0.5, 0.9, 0.5, 0.5], 2), vec![0, 1]);
        assert_eq!(top_k_indices(&[0.1, 0.2, 0.3], 3), vec![0, 1, 2]);
    }
}
