//! Dense-array numerics for the probes: a tape-based reverse-mode graph over
//! row-major arrays, named parameter sets, AdamW, the learning-rate schedule,
//! the transformer encoder and a finite-difference gradient checker.

mod array;
mod encoder;
mod gradcheck;
mod graph;
pub mod init;
mod optim;
mod params;
mod schedule;

pub use array::{DenseArray, Scalar};
pub use encoder::{encoder_forward, Encoder, EncoderConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use optim::{adamw_step, AdamWConfig, OptimState};
pub use params::{BoundParams, ParamSet};
pub use schedule::{lr_at, LrSchedule};
