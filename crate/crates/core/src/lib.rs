//! Sub-task segmentation of demonstration feature sequences and their
//! execution as movement primitives.
//!
//! The crate is `no_std` and only needs an allocator. It contains:
//!
//! * [`numcore`]: dense row-major tensors and a reverse-mode tape.
//! * [`fusion`]: per-frame, per-channel attention fusion of two modalities.
//! * [`tcn`]: dilated residual temporal convolution stages with exponential
//!   or Fibonacci dilation schedules, stacked into a multi-stage refiner.
//! * [`loss`]: cross-entropy, truncated temporal MSE and the
//!   transition-aware penalty.
//! * [`metrics`] and [`postprocess`]: segmentation evaluation and cleanup.
//! * [`data`]: vocabulary, task grammar, split arithmetic, normalization and
//!   a synthetic demonstration generator.
//! * [`trainer`]: AdamW, warmup + cosine schedule, clipping and `fit`.
//! * [`exec`]: DMP rollout and fitting, P-controller servoing and
//!   transcript to primitive planning.
#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod postprocess;
pub mod tcn;
pub mod trainer;

pub use error::{Error, Result};
