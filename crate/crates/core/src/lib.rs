//! Decoder-only transformer inference with input-adaptive feed-forward
//! skipping.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: f32 kernels with a fixed reduction order.
//! - [`model`]: a LLaMA-style decoder whose attention and FFN sub-steps are
//!   callable on their own, and the [`KvCache`] they write.
//! - [`engine`]: the decode loop, the skip policies and their traces.
//! - [`profiler`]: per-layer saturation profiles, cold-region detection and
//!   parameter/FLOP accounting.
//! - [`io`]: model files, random initialization, the byte tokenizer and
//!   calibration corpora.
//! - [`metrics`]: n-gram repetition scores for generated text.
//! - [`cli`]: the `ffn-skip` command line.
//!
//! Runnable walkthroughs of each capability live in the crate's `examples/`
//! directory.

pub mod cli;
pub mod engine;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod profiler;
pub mod tensor;
pub mod trace;

pub use engine::{
    decode_token, decode_token_adaptive, generate, random_skip_mask, DecodeRequest, Generation,
    Sampling, SkipConfig, SkipPolicy,
};
pub use error::{Error, Result};
pub use model::{KvCache, LayerWeights, Model, ModelConfig};
pub use profiler::{
    detect_cold_regions, profile_similarity, savings_report, ColdRegionReport, DetectionParams,
    SavingsReport, SimilarityProfile,
};
pub use tensor::Matrix;
pub use trace::{SkipTrace, TraceSummary};
