//! Core of the dual open information extraction toolkit: the special-token
//! triplet grammar, corpora and synthetic data, scoring, the two-step
//! extraction pipeline and the annotation simulation.

pub mod annotate;
pub mod dataset;
pub mod grammar;
pub mod inference;
pub mod metrics;
pub mod tokenize;
pub mod types;

pub use grammar::{
    build_triplet_input, parse_predicates, parse_sentence, parse_triplets, serialize_predicates, serialize_prompt,
    serialize_triplets, wrap_sentence, GrammarError, ParseMode, ParseReport, SeqKind, SerializedSeq, SpecialVocab,
};
pub use types::{ExtractionInstance, PredicateSequence, Sentence, Slot, Triplet};
