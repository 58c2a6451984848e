//! The coordinate networks: positional encoding, architecture, parameters,
//! and the hand-derived forward/backward passes.

mod arch;
mod decode;
mod encoding;
mod engine;
pub mod kernels;
mod model;

pub use arch::{solve_width_for_budget, ArchConfig, LayerSpec, NetKind, SEED_SIDE};
pub use decode::{decode_lightfield, decode_lightfield_counted, decode_pixelwise};
pub use encoding::{positional_encode, EncodedCoord};
pub use engine::{
    backward, backward_encoded, forward, forward_encoded, forward_pixelwise, stack_encoded,
    EvalCounter, NORM_EPS,
};
pub use kernels::Real;
pub use model::{init_model, GradientSet, MinlModel, Model, Tensor};
