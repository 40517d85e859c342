//! Kolmogorov-Arnold layers: every edge carries a learnable univariate
//! function mixing a PReLU base with a B-spline curve.

mod grid;
mod layer;

pub use grid::{build_grid, bspline_basis, cox_de_boor, Basis, SplineGrid};
pub use layer::{kan_forward, phi_edge, EdgeParams, KanConfig, KanLayer};
