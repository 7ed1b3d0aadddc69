// SPDX-License-Identifier: Apache-2.0

//! Golden functional model. Naive, layer by layer, time step by time step.

pub mod layers;
pub mod lif;
pub mod model;
pub mod ssa;

pub use layers::{classifier_head, conv_bn_1x1, conv_bn_3x3, encode_conv_3x3, iand, linear, maxpool2x2, to_tokens};
pub use lif::{lif_seq, LifParams};
pub use model::{
    model_forward, model_forward_with, residual, ActShape, Activation, Block, ForwardOptions, HeadSpec, LayerSpec,
    LayerTrace, ModelConfig, ResidualOp, TraceEntry,
};
pub use ssa::{attention_currents, ssa, Projection, SsaOutput, SsaSpec};
