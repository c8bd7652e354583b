//! Minimal reverse-mode automatic differentiation.
//!
//! Only the operations the waveform network needs are provided: 1x1 channel
//! mixing, causal gathers with per-sample offsets, elementwise activations,
//! and a softmax cross-entropy head. A [`Tape`] is rebuilt for every step.

mod adam;
pub mod gradcheck;
mod scalar;
mod tape;

pub use adam::{adam_step, AdamState};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Tensor, TensorId};
