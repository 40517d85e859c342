//! Dense tensors, reverse-mode differentiation and the layer primitives the
//! rest of the crate is built from.

pub mod gradcheck;
pub mod init;
pub mod nn;
mod ops;
pub mod params;
pub mod tape;
pub mod tensor;

pub(crate) use ops::gemm;
pub use ops::selu_scalar;
pub use params::{apply_buffer_updates, Ctx, ParamEntry, ParamId, ParamStore};
pub use tape::{BackwardOp, FnBackward, Gradients, Tape, Var};
pub use tensor::Tensor;
