//! Word-level vocabulary with dedicated ids for control and grammar tokens.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use dualoie_core::dataset::TrainingPair;
use dualoie_core::SpecialVocab;
use serde::{Deserialize, Serialize};

use crate::ModelError;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }

    /// Control tokens, then the eight grammar markers, then corpus words by
    /// descending frequency (ties alphabetical).
    pub fn build<'a>(sequences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut tokens: Vec<String> = [BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
        tokens.extend(SpecialVocab::TOKENS.iter().map(|s| s.to_string()));
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in sequences {
            for t in seq {
                if !tokens.iter().any(|x| x == t) {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
        Vocab::from_tokens(tokens)
    }

    pub fn from_pairs(pairs: &[TrainingPair]) -> Self {
        Vocab::build(pairs.iter().flat_map(|p| [p.source.tokens.as_slice(), p.target.tokens.as_slice()]))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn push(&mut self, token: String) -> u32 {
        if let Some(id) = self.get(&token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.tokens)?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        let tokens: Vec<String> =
            serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Ok(Vocab::from_tokens(tokens))
    }
}
