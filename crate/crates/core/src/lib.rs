//! Video captioning with a CNN frame encoder and an RNN caption decoder.
//!
//! The pipeline runs in stages that each map onto one module:
//!
//! * [`corpus`] parses MSVD-style annotations, attaches translated captions,
//!   splits by video, filters rare words and builds the vocabulary.
//! * [`frames`] samples 30 evenly spaced frames per video, resizes them to
//!   224×224 and turns them into `(30, D)` feature tensors via a [`frames::Backbone`].
//! * [`datagen`] pairs cached features with tokenized captions and emits
//!   teacher-forcing batches.
//! * [`seq2seq`] holds the LSTM encoder, the LSTM/GRU/BiLSTM decoders, Adam
//!   training, checkpoints and greedy decoding.
//! * [`metrics`] scores captions with corpus BLEU-1..4 and METEOR on a 0–100 scale.
//! * [`harness`] drives grid experiments, renders comparison tables and backs the CLI.

pub mod corpus;
pub mod datagen;
pub mod error;
pub mod exec;
pub mod frames;
pub mod harness;
pub mod kv;
pub mod metrics;
pub mod seq2seq;

pub use error::{Error, Result};
pub use exec::Exec;
