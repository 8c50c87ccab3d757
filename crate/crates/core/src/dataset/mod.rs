//! Corpora, training pairs, triplet ordering and categorization, masking,
//! and the synthetic corpus generator.

mod categories;
mod load;
mod mask;
mod order;
mod pairs;
pub mod spans;
mod synth;

use thiserror::Error;

use crate::grammar::GrammarError;

pub use categories::{classify_triplet_categories, triplets_with, CategoryFlags};
pub use load::{
    load_corpus, load_corpus_with_report, record_to_instance, write_corpus, CorpusFormat, CorpusRecord, LoadReport,
    RecordTriplet,
};
pub use mask::{mask_attributes, maskable_indices};
pub use order::order_triplets;
pub use pairs::{make_training_pairs, make_training_pairs_with, prompt_spans, Objective, PromptElement, TrainingPair};
pub use synth::{generate_synthetic, generate_synthetic_labeled, LabeledInstance, SynthConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("corpus {0} contains no instances")]
    EmptyCorpus(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("triplet {index} of {id}: predicate is already implicit")]
    NotExplicit { id: String, index: usize },
    #[error("triplet {index} of {id}: predicate does not occur contiguously")]
    NotContiguous { id: String, index: usize },
    #[error("triplet index {index} out of range for {id}")]
    NoSuchTriplet { id: String, index: usize },
    #[error("duplicate gold triplet {0}")]
    DuplicateTriplet(String),
    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),
}
