//! QPNet: a WaveNet-style autoregressive waveform model whose adaptive
//! layers stretch their dilations by a pitch-dependent factor, together
//! with the sinusoid-denoising study used to measure pitch controllability.

pub mod error;
pub mod experiments;
pub mod model;
pub mod sampler;
pub mod signal;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
