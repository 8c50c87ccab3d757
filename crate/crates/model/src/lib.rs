//! The shared-encoder, three-decoder network: parameters, losses, decoding
//! and the joint training loop, on a small built-in autograd tape.

pub mod decode;
pub mod net;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use decode::{beam_search, greedy, StepScorer};
pub use net::{Backbone, DualModel, LossBreakdown, LossReduction, ModelConfig, PackedBatch};
pub use params::{Group, ParamStore};
pub use train::{train, Callbacks, LogEntry, StopReason, TrainConfig, TrainReport};
pub use vocab::Vocab;

use dualoie_core::dataset::Objective;
use dualoie_core::grammar::SeqKind;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("source of {len} tokens exceeds the maximum of {max}")]
    SourceTooLong { len: usize, max: usize },
    #[error("target of {len} tokens exceeds the maximum of {max}")]
    TargetTooLong { len: usize, max: usize },
    #[error("{objective} pair expects {expected:?} but got {found:?}")]
    KindMismatch { objective: Objective, expected: SeqKind, found: SeqKind },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("the pretrained-adapter backbone ships no weights; point it at a converted parameter blob")]
    PretrainedUnavailable,
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("non-finite loss at step {step}; parameters restored from step {restored_from}")]
    DivergenceDetected { step: u64, restored_from: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Grammar(#[from] dualoie_core::GrammarError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
