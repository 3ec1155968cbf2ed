//! Encoder-block operators: softmax attention, SA plus residual, layer
//! normalization, FFN, de-escalation and the post-/pre-norm blocks.

mod attention;
mod block;
mod config;
mod layers;

pub use attention::{softmax_attention, softmax_rows, AttentionMatrix, STOCHASTIC_TOL};
pub use block::{
    head_attentions, post_norm_block, post_norm_forward, pre_norm_block, pre_norm_forward, run_block,
    sample_value_weights, BlockStep, BlockWeights, DiagnosticsSink, HeadWeights, PreNormNorms,
};
pub use config::{Activation, BlockConfig, LayerNormParams, Placement, ValueInit, Variant};
pub use layers::{attention_heads_output, deescalate, ffn_residual, layer_norm, sa_residual_multihead, sa_residual_single};
