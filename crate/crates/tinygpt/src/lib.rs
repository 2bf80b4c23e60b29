//! A small character-level GPT written against an explicit, scalar-generic
//! parameter buffer.
//!
//! Training runs in `f32`; gradient checks run the identical code in `f64`.

pub mod checkpoint;
pub mod config;
pub mod generate;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod schedule;
pub mod train;
pub mod vocab;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{ConfigError, ModelConfig};
pub use generate::{generate, Decoder, DecodeMode, StopRule};
pub use model::{forward, loss, loss_and_grads, ModelError, Workspace};
pub use optim::{AdamW, AdamWConfig, OptimError};
pub use params::{Layout, ModelParams, TensorKind, TensorSpec};
pub use scalar::Scalar;
pub use schedule::{lr_at, PlanError, TrainPlan};
pub use train::{train, LogRow, RngState, TrainError, TrainLog, Trainer};
pub use vocab::{detokenize, tokenize, VocabError, ALPHABET, VOCAB_SIZE};

/// Single-precision parameters used for training and inference.
pub type Params32 = ModelParams<f32>;
/// Double-precision parameters used for gradient verification.
pub type Params64 = ModelParams<f64>;
