//! The reduced-scale hybrid CTC-attention recognizer: a recurrent encoder
//! over feature frames feeding per-frame CTC log-probabilities and an
//! autoregressive additive-attention decoder.

mod config;
mod decoder;
mod encoder;
mod params;
mod taped;

pub use config::ModelConfig;
pub use decoder::{att_log_prob, att_score, decoder_step, DecoderState, StepOutput};
pub use encoder::{encode, EncoderOutput};
pub use params::{ModelParams, ParamVars, PARAM_NAMES};
pub use taped::{TapedEncoding, TapedModel};
