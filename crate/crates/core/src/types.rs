use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{GrammarError, SpecialVocab};
use crate::tokenize::{covers_text, detokenize, tokenize};

/// An input sentence with its recorded segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    /// Segments `text` with the shared tokenizer.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, GrammarError> {
        let text = text.into();
        let tokens = tokenize(&text);
        Self::with_tokens(id, text, tokens)
    }

    pub fn from_tokens<S: AsRef<str>>(id: impl Into<String>, tokens: &[S]) -> Result<Self, GrammarError> {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        let text = detokenize(&tokens);
        Self::with_tokens(id, text, tokens)
    }

    /// Accepts a caller-supplied segmentation; it must cover the text.
    pub fn with_tokens(
        id: impl Into<String>,
        text: impl Into<String>,
        tokens: Vec<String>,
    ) -> Result<Self, GrammarError> {
        let s = Sentence { id: id.into(), text: text.into(), tokens };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        if self.tokens.is_empty() {
            return Err(GrammarError::EmptySentence);
        }
        for t in &self.tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(GrammarError::BadToken(t.clone()));
            }
            SpecialVocab::check(t)?;
        }
        if !covers_text(&self.tokens, &self.text) {
            return Err(GrammarError::TokensDoNotCoverText { id: self.id.clone() });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One (subject, predicate, object) fact. Fields are held in canonical
/// token-joined form so serialization round-trips exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Subject,
    Predicate,
    Object,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Subject, Slot::Predicate, Slot::Object];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Subject => "subject",
            Slot::Predicate => "predicate",
            Slot::Object => "object",
        }
    }
}

impl Triplet {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Result<Self, GrammarError> {
        Ok(Triplet {
            subject: canonical_field(subject, Slot::Subject)?,
            predicate: canonical_field(predicate, Slot::Predicate)?,
            object: canonical_field(object, Slot::Object)?,
        })
    }

    pub fn get(&self, slot: Slot) -> &str {
        match slot {
            Slot::Subject => &self.subject,
            Slot::Predicate => &self.predicate,
            Slot::Object => &self.object,
        }
    }

    pub fn tokens(&self, slot: Slot) -> Vec<String> {
        tokenize(self.get(slot))
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}; {}; {})", self.subject, self.predicate, self.object)
    }
}

/// Trims, checks for reserved markers and re-joins the field's tokens.
pub(crate) fn canonical_field(text: &str, slot: Slot) -> Result<String, GrammarError> {
    SpecialVocab::check(text)?;
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(GrammarError::EmptyField(slot.name()));
    }
    Ok(detokenize(&toks))
}

/// Ordered predicate spans; order is significant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSequence {
    pub predicates: Vec<String>,
}

impl PredicateSequence {
    pub fn new<S: AsRef<str>>(items: &[S]) -> Result<Self, GrammarError> {
        let predicates =
            items.iter().map(|p| canonical_field(p.as_ref(), Slot::Predicate)).collect::<Result<_, _>>()?;
        Ok(PredicateSequence { predicates })
    }

    pub fn of(triplets: &[Triplet]) -> Self {
        PredicateSequence { predicates: triplets.iter().map(|t| t.predicate.clone()).collect() }
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }
}

/// A sentence and its ordered triplet set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionInstance {
    pub sentence: Sentence,
    pub triplets: Vec<Triplet>,
}

impl ExtractionInstance {
    pub fn new(sentence: Sentence, triplets: Vec<Triplet>) -> Self {
        ExtractionInstance { sentence, triplets }
    }

    pub fn id(&self) -> &str {
        &self.sentence.id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_fields_are_canonical() {
        let t = Triplet::new(" Shea ", "was born on", "September 5, 1900").unwrap();
        assert_eq!(t.subject, "Shea");
        assert_eq!(t.object, "September 5 , 1900");
        assert_eq!(Triplet::new(&t.subject, &t.predicate, &t.object).unwrap(), t);
    }

    #[test]
    fn rejects_empty_and_reserved_fields() {
        assert!(matches!(Triplet::new("  ", "is", "b"), Err(GrammarError::EmptyField("subject"))));
        assert!(matches!(Triplet::new("a", "x<rel>", "b"), Err(GrammarError::ReservedToken(_))));
    }

    #[test]
    fn sentence_requires_tokens() {
        assert!(matches!(Sentence::new("1", "   "), Err(GrammarError::EmptySentence)));
        assert!(matches!(
            Sentence::with_tokens("1", "a b", vec!["a".into()]),
            Err(GrammarError::TokensDoNotCoverText { .. })
        ));
        assert!(matches!(Sentence::from_tokens("1", &["a", "<sen>"]), Err(GrammarError::ReservedToken(_))));
    }
}
