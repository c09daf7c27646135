//! LSTM encoder over per-frame features with an LSTM, GRU or BiLSTM decoder,
//! trained by teacher forcing and decoded greedily.
//!
//! Differentiation is written out by hand; every routine is generic over the
//! float type so that gradients can be checked in `f64` while training runs
//! in `f32`.

mod adam;
mod checkpoint;
mod config;
mod decode;
mod layers;
mod model;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{DecoderKind, ModelConfig, TrainConfig};
pub use decode::{argmax, caption, greedy_decode, greedy_ids};
pub use model::{loss, DecoderParams, EncoderState, GruParams, LstmParams, Params, Seq2Seq, PROB_FLOOR};
pub use train::{evaluate_loss, train, EpochLoss, TrainOutcome};
