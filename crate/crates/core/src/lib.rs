pub mod diagnostics;
pub mod dsp;
pub mod encoder;
pub mod kan;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
