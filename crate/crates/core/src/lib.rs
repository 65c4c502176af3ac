//! Cycle-consistent adversarial autoencoders for unsupervised text style
//! transfer between two non-parallel corpora.
//!
//! Each style gets its own LSTM autoencoder. Two transfer networks map unit
//! latent vectors between the style spaces; they are trained adversarially
//! against per-style discriminators and tied together by an L1 cycle loss in
//! latent space. Inference is encode, transfer, greedy decode.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod losses;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use config::{TrainConfig, TransferInit};
pub use data::{Batch, Corpus, Style, Vocabulary};
pub use error::{CaeError, Result};
pub use losses::LossBreakdown;
pub use model::{CaeModel, Direction};
pub use trainer::{train, TrainData, TrainLog, TrainOutcome};
