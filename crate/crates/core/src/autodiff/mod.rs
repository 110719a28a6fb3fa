//! Reverse-mode automatic differentiation on a tape.
//!
//! A [`Graph`] owns every value computed in one step. Operations append nodes
//! and return [`Var`] handles. Backward rules are expressed with the same
//! primitive operations, so gradients produced by [`Graph::grad`] are ordinary
//! graph nodes and can be differentiated again (double backpropagation, needed
//! by the gradient penalty).
//!
//! Layout conventions: feature maps are `[N, C, H, W]`, convolution weights
//! `[C_out, C_in, KH, KW]`, transposed-convolution weights `[C_in, C_out, KH, KW]`.
//!
//! Padding: `ConvSpec::same(k, d)` pads `d * (k - 1) / 2` so stride 1 keeps the
//! spatial size; stride 2 with a 3x3 kernel and padding 1 halves an even size;
//! the transposed convolution with the same spec doubles it (the output size is
//! passed explicitly, which fixes the ambiguity of the inverse).

mod adam;
mod array;
pub mod check;
mod graph;
mod kernels;
mod scalar;

pub use adam::{AdamConfig, AdamState};
pub use array::Array;
pub use graph::{Gradients, Graph, Var};
pub use kernels::ConvSpec;
pub use scalar::Scalar;
