//! Sequence-to-sequence training criteria with external language-model
//! fusion: cross entropy, per-token renormalized (local) fusion, and
//! sequence-level MMI over n-best lists, together with the matching beam
//! search decoders and a synthetic noisy-channel task to compare them on.

pub mod cli;
pub mod criteria;
pub mod decoding;
pub mod error;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod task;

pub use error::{Error, Result};
