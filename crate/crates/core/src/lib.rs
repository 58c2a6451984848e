//! Micro-image-wise implicit neural representation of lenslet light fields:
//! light-field containers, the coordinate network, training, model
//! compression and evaluation.

pub mod codec;
pub mod error;
pub mod eval;
pub mod lightfield;
pub mod net;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use lightfield::{load_lenslet, LensletLightField, SpatialDims};
pub use net::{ArchConfig, MinlModel};
pub use train::TrainConfig;
