//! Graph attention operators on fully connected graphs. Graphs are carried
//! as `[batch, nodes, dim]` tensors and stack nodes as `[batch, dim]`.

mod gal;
mod hs_gal;
mod pool;

pub use gal::{GalOutput, KanGal};
pub use hs_gal::{block_of, split_heterogeneous, Block, HeteroState, HsGalOutput, KanHsGal};
pub use pool::{kept_nodes, top_k_indices, KanGraphPool, PoolOutput};

use crate::error::{Error, Result};
use crate::numerics::Var;

pub const DEFAULT_TEMPERATURE: f64 = 100.0;
pub const DEFAULT_DROPOUT: f64 = 0.2;

pub(crate) fn graph_dims(op: &'static str, h: &Var) -> Result<(usize, usize, usize)> {
    match *h.shape() {
        [b, n, d] => Ok((b, n, d)),
        _ => Err(Error::shape(op, format!("expected [batch, nodes, dim], got {:?}", h.shape()))),
    }
}
