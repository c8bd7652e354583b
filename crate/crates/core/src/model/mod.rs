//! Network architecture: configs, pitch-dependent dilation planning,
//! parameters, and the teacher-forced forward pass.

mod config;
mod dilation;
mod network;
mod params;

pub use config::{BlockKind, MacroblockSpec, ModelConfig, ModelKind, Profile};
pub use dilation::{
    build_dilation_plan, compute_dilation_factor, dilation_factors, effective_receptive_field_for_factor,
    effective_receptive_field_length, interpolate_f0, layer_offsets, receptive_field_length, AuxTrack, DilationPlan,
};
pub use network::{
    forward_teacher_forced, forward_with_param_ids, forward_with_plan, predict_logits, residual_block_forward, shift_input, BlockWeights,
    ForwardPass,
};
pub use params::{param_count, BlockIndex, HeadIndex, NetworkParams, ParamLayout, ParamTensor};
