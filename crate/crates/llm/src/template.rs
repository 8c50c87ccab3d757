//! Prompt templates for the zero-shot, few-shot and chain-of-thought modes.

use std::fmt::Write as _;
use std::str::FromStr;

use dualoie_core::{ExtractionInstance, PredicateSequence, Sentence};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::LlmError;

pub const DEFAULT_INSTRUCTION: &str = include_str!("../templates/instruction.txt");
pub const DEFAULT_FORMAT: &str = include_str!("../templates/format.txt");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmMode {
    #[default]
    ZeroShot,
    FewShot,
    Cot,
}

impl FromStr for LlmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-shot" | "0-shot" => Ok(LlmMode::ZeroShot),
            "few-shot" | "3-shot" => Ok(LlmMode::FewShot),
            "cot" => Ok(LlmMode::Cot),
            other => Err(format!("unknown prompt mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub mode: LlmMode,
    /// Exemplars per prompt; defaults to 3 for few-shot and 1 for cot.
    pub shots: Option<usize>,
    pub instruction: String,
    pub format: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            mode: LlmMode::ZeroShot,
            shots: None,
            instruction: DEFAULT_INSTRUCTION.trim().to_string(),
            format: DEFAULT_FORMAT.trim().to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(mode: LlmMode) -> Self {
        PromptTemplate { mode, ..Default::default() }
    }

    pub fn exemplar_count(&self) -> usize {
        match self.mode {
            LlmMode::ZeroShot => 0,
            LlmMode::FewShot => self.shots.unwrap_or(3),
            LlmMode::Cot => self.shots.unwrap_or(1),
        }
    }

    /// Renders the prompt around exactly [`Self::exemplar_count`] exemplars.
    pub fn render(&self, sentence: &Sentence, exemplars: &[&ExtractionInstance]) -> Result<String, LlmError> {
        let k = self.exemplar_count();
        if exemplars.len() != k {
            return Err(LlmError::ExemplarCountMismatch { expected: k, found: exemplars.len() });
        }
        let mut out = format!("{}\n\n{}\n", self.instruction, self.format);
        for (i, ex) in exemplars.iter().enumerate() {
            let _ = write!(out, "\nExample {}:\nSentence: {}\n", i + 1, ex.sentence.text);
            if self.mode == LlmMode::Cot {
                let _ = writeln!(out, "Reasoning: {}", cot_reasoning(ex));
            }
            out.push_str("Triplets:\n");
            for t in &ex.triplets {
                let _ = writeln!(out, "({}; {}; {})", t.subject, t.predicate, t.object);
            }
        }
        let _ = write!(out, "\nSentence: {}\n", sentence.text);
        out.push_str(if self.mode == LlmMode::Cot { "Reasoning:" } else { "Triplets:" });
        Ok(out)
    }
}

/// Worked reasoning for an exemplar: all predicates first, then the
/// arguments of each predicate in turn.
pub fn cot_reasoning(ex: &ExtractionInstance) -> String {
    let preds = PredicateSequence::of(&ex.triplets).predicates;
    if preds.is_empty() {
        return "The sentence states no facts.".to_string();
    }
    let quoted: Vec<String> = preds.iter().map(|p| format!("\"{p}\"")).collect();
    let mut out = format!("First find the predicates: {}.", quoted.join(", "));
    for t in &ex.triplets {
        let _ = write!(
            out,
            " For \"{}\", the subject is \"{}\" and the object is \"{}\".",
            t.predicate, t.subject, t.object
        );
    }
    out
}

/// Seeded draw of `k` exemplars from `pool`, skipping the sentence itself.
pub fn select_exemplars<'a>(
    pool: &'a [ExtractionInstance],
    exclude_id: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<&'a ExtractionInstance>, LlmError> {
    let candidates: Vec<&ExtractionInstance> = pool.iter().filter(|e| e.id() != exclude_id).collect();
    if candidates.len() < k {
        return Err(LlmError::ExemplarCountMismatch { expected: k, found: candidates.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect())
}

/// Per-sentence seed, so each sentence gets its own draw.
pub fn sentence_seed(seed: u64, sentence_id: &str) -> u64 {
    sentence_id.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// Draws the exemplars for `sentence` with `seed` and renders the prompt.
pub fn build_prompt(
    template: &PromptTemplate,
    sentence: &Sentence,
    pool: &[ExtractionInstance],
    seed: u64,
) -> Result<String, LlmError> {
    let k = template.exemplar_count();
    let exemplars =
        if k == 0 { Vec::new() } else { select_exemplars(pool, &sentence.id, k, sentence_seed(seed, &sentence.id))? };
    template.render(sentence, &exemplars)
}
