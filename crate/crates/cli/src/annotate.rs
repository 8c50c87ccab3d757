//! The annotation loop's trainer backed by the neural model.

use dualoie_core::annotate::AnnotationTrainer;
use dualoie_core::dataset::{classify_triplet_categories, make_training_pairs_with, order_triplets, TrainingPair};
use dualoie_core::inference::{extract, InferenceConfig};
use dualoie_core::{ExtractionInstance, Sentence, Triplet};
use dualoie_model::{train, DualModel, ModelConfig, ModelError, TrainConfig};

/// Trains a fresh model every round and extracts with it.
pub struct ModelAnnotationTrainer {
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub inference: InferenceConfig,
    /// Words the model should know beyond the training data (the unlabeled
    /// sentences).
    pub extra_vocab: Vec<String>,
    pub model: Option<DualModel>,
}

impl ModelAnnotationTrainer {
    pub fn new(model_cfg: ModelConfig, train_cfg: TrainConfig, inference: InferenceConfig) -> Self {
        ModelAnnotationTrainer { model_cfg, train_cfg, inference, extra_vocab: Vec::new(), model: None }
    }

    pub fn with_vocabulary<'a>(mut self, sentences: impl IntoIterator<Item = &'a Sentence>) -> Self {
        let mut words: Vec<String> = sentences.into_iter().flat_map(|s| s.tokens.iter().cloned()).collect();
        words.sort();
        words.dedup();
        self.extra_vocab = words;
        self
    }
}

impl AnnotationTrainer for ModelAnnotationTrainer {
    type Error = ModelError;

    fn train(&mut self, data: &[ExtractionInstance]) -> Result<(), ModelError> {
        let data: Vec<ExtractionInstance> = data.iter().map(order_triplets).collect();
        let mut pairs: Vec<TrainingPair> = Vec::new();
        for inst in &data {
            pairs.extend(make_training_pairs_with(inst, self.train_cfg.prompt_element)?);
        }
        let mut model = DualModel::for_pairs(self.model_cfg.clone(), &pairs)?;
        model.append_tokens(&self.extra_vocab);
        let report = train(&mut model, &data, &self.train_cfg, &mut (), None)?;
        log::info!("annotation round model: {} steps on {} instances", report.steps, data.len());
        self.model = Some(model);
        Ok(())
    }

    fn extract(&self, s: &Sentence) -> Vec<Triplet> {
        match &self.model {
            Some(m) => extract(m, s, &self.inference).triplets,
            None => Vec::new(),
        }
    }
}

/// Seed pool labeled with explicit triplets only, and unlabeled sentences
/// whose full gold goes to the oracle.
pub fn annotation_pools(
    corpus: &[ExtractionInstance],
    n_ex: usize,
    n_un: usize,
) -> anyhow::Result<(Vec<ExtractionInstance>, Vec<ExtractionInstance>)> {
    if n_ex + n_un > corpus.len() {
        anyhow::bail!("corpus has {} sentences; pools need {}", corpus.len(), n_ex + n_un);
    }
    let d_ex = corpus[..n_ex]
        .iter()
        .map(|inst| {
            let flags = classify_triplet_categories(inst);
            let kept = inst.triplets.iter().zip(flags).filter(|(_, f)| !f.implicit).map(|(t, _)| t.clone()).collect();
            ExtractionInstance::new(inst.sentence.clone(), kept)
        })
        .filter(|i| !i.triplets.is_empty())
        .collect();
    Ok((d_ex, corpus[n_ex..n_ex + n_un].to_vec()))
}
