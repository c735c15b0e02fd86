//! Multi-stage speech enhancement toolkit.
//!
//! The crate provides the signal-processing core of a three-stage enhancement
//! pipeline (discriminative estimate, token-based refinement, fusion) with
//! shift-trick aggregation, output blending and sliding-window inference, the
//! loss/metric suite used to train and evaluate it, a residual vector
//! quantization token codec with masked-token prediction, and an on-the-fly
//! distortion simulator. Trained networks are replaced by pluggable
//! [`pipeline::Stage`] implementations.

pub mod audio;
pub mod dsp;
pub mod metrics;
pub mod distortion;
pub mod seed;
pub mod synth;
pub mod pipeline;
pub mod codec;
