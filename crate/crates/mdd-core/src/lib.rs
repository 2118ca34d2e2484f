//! End-to-end mispronunciation detection and diagnosis at desk scale.
//!
//! The crate implements a hybrid CTC-attention phone recognizer, exact CTC
//! forward-backward scoring, beam-search M-best decoding, phone-level
//! alignment and detection metrics, and an expected-F1 training criterion
//! interpolated with cross-entropy, plus synthetic corpus generation and a
//! staged trainer.
//!
//! Per-utterance work (generation, loss gradients, decoding, sweep cells)
//! runs data-parallel under the default `parallel` feature and falls back
//! to sequential loops without it; results are identical either way.

pub mod checkpoint;
pub mod corpus;
pub mod ctc;
pub mod diff;
pub mod error;
pub mod inventory;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nbest;
pub mod parallel;
pub mod pipeline;
pub mod sweep;
pub mod trainer;

pub use error::{Error, Result};
pub use inventory::{
    FeatureMatrix, PhoneId, PhoneInventory, PhoneSequence, Role, Utterance,
};
