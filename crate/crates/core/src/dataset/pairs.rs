use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grammar::{
    build_triplet_input, serialize_prompt, serialize_triplets, wrap_sentence, wrap_tokens, GrammarError, SeqKind,
    SerializedSeq,
};
use crate::types::{ExtractionInstance, Slot};

/// The three training objectives, one per decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    /// Sentence to prompt blocks (predicate extraction).
    P,
    /// Prompted sentence to triplets.
    T,
    /// Triplets back to the sentence (the dual direction).
    S,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::P, Objective::T, Objective::S];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn source_kind(self) -> SeqKind {
        match self {
            Objective::P => SeqKind::SentenceInput,
            Objective::T => SeqKind::TripletInput,
            Objective::S => SeqKind::Triplets,
        }
    }

    pub fn target_kind(self) -> SeqKind {
        match self {
            Objective::P => SeqKind::PromptBlocks,
            Objective::T => SeqKind::Triplets,
            Objective::S => SeqKind::SentenceOutput,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::P => "P",
            Objective::T => "T",
            Objective::S => "S",
        })
    }
}

/// Which triplet element forms the step-one prompt. `None` drops the
/// prompt step entirely: the triplet decoder sees the bare sentence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptElement {
    #[default]
    Predicate,
    Subject,
    Object,
    None,
}

impl PromptElement {
    pub fn slot(self) -> Option<Slot> {
        match self {
            PromptElement::Predicate => Some(Slot::Predicate),
            PromptElement::Subject => Some(Slot::Subject),
            PromptElement::Object => Some(Slot::Object),
            PromptElement::None => None,
        }
    }
}

impl FromStr for PromptElement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "predicate" => Ok(PromptElement::Predicate),
            "subject" => Ok(PromptElement::Subject),
            "object" => Ok(PromptElement::Object),
            "none" => Ok(PromptElement::None),
            other => Err(format!("unknown prompt element {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub objective: Objective,
    pub source: SerializedSeq,
    pub target: SerializedSeq,
}

/// Gold prompt spans for an instance under the chosen element.
pub fn prompt_spans(inst: &ExtractionInstance, element: PromptElement) -> Vec<String> {
    match element.slot() {
        Some(slot) => inst.triplets.iter().map(|t| t.get(slot).to_string()).collect(),
        None => Vec::new(),
    }
}

/// The P, T and S pairs of one (ordered) instance, with the gold prompt
/// teacher-forced into the T source.
pub fn make_training_pairs(inst: &ExtractionInstance) -> Result<Vec<TrainingPair>, GrammarError> {
    make_training_pairs_with(inst, PromptElement::Predicate)
}

/// As [`make_training_pairs`] for the order variants. With
/// [`PromptElement::None`] no P pair is produced and the T source is the
/// wrapped sentence alone. The S pair is skipped when there are no triplets.
pub fn make_training_pairs_with(
    inst: &ExtractionInstance,
    element: PromptElement,
) -> Result<Vec<TrainingPair>, GrammarError> {
    let x_p = wrap_sentence(&inst.sentence)?;
    let y_p = serialize_prompt(&prompt_spans(inst, element))?;
    let y_t = serialize_triplets(&inst.triplets)?;
    let mut out = Vec::with_capacity(3);

    let x_t = build_triplet_input(&y_p, &x_p)?;
    if element != PromptElement::None {
        out.push(TrainingPair { objective: Objective::P, source: x_p.clone(), target: y_p });
    }
    out.push(TrainingPair { objective: Objective::T, source: x_t, target: y_t.clone() });
    if !y_t.is_empty() {
        let y_s = wrap_tokens(&inst.sentence.tokens, SeqKind::SentenceOutput)?;
        out.push(TrainingPair { objective: Objective::S, source: y_t, target: y_s });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{parse_predicates, parse_sentence, parse_triplets, ParseMode};
    use crate::types::{Sentence, Triplet};

    fn table1() -> ExtractionInstance {
        let s = Sentence::new("t1", "Shea was born on September 5, 1900 in San Francisco, California.").unwrap();
        ExtractionInstance::new(
            s,
            vec![
                Triplet::new("Shea", "was born on", "September 5, 1900").unwrap(),
                Triplet::new("Shea", "was born in", "San Francisco, California").unwrap(),
                Triplet::new("San Francisco", "is in", "California").unwrap(),
            ],
        )
    }

    #[test]
    fn table1_pairs() {
        let inst = table1();
        let pairs = make_training_pairs(&inst).unwrap();
        assert_eq!(pairs.len(), 3);
        let p = &pairs[0];
        assert_eq!(p.objective, Objective::P);
        assert_eq!(p.target.tokens.iter().filter(|t| *t == "<rel>").count(), 3);

        let t = &pairs[1];
        assert_eq!(t.source.kind, SeqKind::TripletInput);
        let prompt_len = p.target.len();
        assert_eq!(t.source.tokens[..prompt_len], p.target.tokens[..]);
        assert_eq!(t.source.tokens[prompt_len..], p.source.tokens[..]);

        let s = &pairs[2];
        assert_eq!(s.source.tokens, t.target.tokens);
        assert_eq!(s.target.tokens, p.source.tokens);
        assert_eq!(s.target.kind, SeqKind::SentenceOutput);

        for pair in &pairs {
            assert_eq!(pair.source.kind, pair.objective.source_kind());
            assert_eq!(pair.target.kind, pair.objective.target_kind());
        }
    }

    #[test]
    fn pairs_parse_back_to_gold() {
        let inst = table1();
        let pairs = make_training_pairs(&inst).unwrap();
        let (ps, _) = parse_predicates(&pairs[0].target.tokens, ParseMode::Strict).unwrap();
        assert_eq!(ps.predicates, ["was born on", "was born in", "is in"]);
        let (ts, _) = parse_triplets(&pairs[1].target.tokens, ParseMode::Strict).unwrap();
        assert_eq!(ts, inst.triplets);
        let (words, _) = parse_sentence(&pairs[2].target.tokens, ParseMode::Strict).unwrap();
        assert_eq!(words, inst.sentence.tokens);
    }

    #[test]
    fn no_triplets() {
        let inst = ExtractionInstance::new(Sentence::new("e", "nothing here").unwrap(), vec![]);
        let pairs = make_training_pairs(&inst).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs[0].target.is_empty());
        assert!(pairs[1].target.is_empty());
        assert_eq!(pairs[1].source.tokens, pairs[0].source.tokens);
    }

    #[test]
    fn subject_variant_and_no_prompt() {
        let inst = table1();
        let pairs = make_training_pairs_with(&inst, PromptElement::Subject).unwrap();
        assert_eq!(pairs[0].target.text(), "<rel> Shea </rel> <rel> Shea </rel> <rel> San Francisco </rel>");
        let bare = make_training_pairs_with(&inst, PromptElement::None).unwrap();
        assert_eq!(bare.len(), 2);
        assert_eq!(bare[0].objective, Objective::T);
        assert_eq!(bare[0].source.tokens.first().map(String::as_str), Some("<sen>"));
    }
}
