//! Runs the prompted baseline over a corpus, one request per sentence.

use dualoie_core::inference::PredictionRecord;
use dualoie_core::{ExtractionInstance, PredicateSequence, Sentence};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::{CachedResponse, ResponseCache};
use crate::client::{ChatClient, ChatMessage};
use crate::parse::parse_llm_response;
use crate::template::{build_prompt, PromptTemplate};
use crate::LlmError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub sentences: usize,
    pub requests: usize,
    pub cache_hits: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub records: Vec<PredictionRecord>,
    pub stats: BaselineStats,
}

/// Prompts `client` once per sentence not already in `cache`. Request
/// failures become empty predictions carrying the error; failed responses
/// are not cached, so a rerun retries exactly those sentences.
pub fn run_baseline<C: ChatClient + ?Sized>(
    sentences: &[Sentence],
    pool: &[ExtractionInstance],
    client: &C,
    template: &PromptTemplate,
    seed: u64,
    cache: Option<&ResponseCache>,
) -> Result<BaselineOutput, LlmError> {
    let mut stats = BaselineStats { sentences: sentences.len(), ..Default::default() };
    let mut records = Vec::with_capacity(sentences.len());
    let mode = serde_json::to_value(template.mode).unwrap_or_default();
    for s in sentences {
        let prompt = build_prompt(template, s, pool, seed)?;
        let key = ResponseCache::key(client.model_name(), client.temperature(), &prompt);
        let cached = cache.and_then(|c| c.get(&key)).filter(|e| e.prompt == prompt);
        let (response, source) = match cached {
            Some(e) => {
                stats.cache_hits += 1;
                (Ok(e.response), "cache")
            }
            None => {
                stats.requests += 1;
                let r = client.complete(&[ChatMessage::user(prompt.clone())]);
                if let (Ok(text), Some(c)) = (&r, cache) {
                    let entry = CachedResponse {
                        model: client.model_name().to_string(),
                        prompt: prompt.clone(),
                        response: text.clone(),
                    };
                    c.put(&key, &entry)?;
                }
                (r, "request")
            }
        };
        let record = match response {
            Ok(text) => {
                let (triplets, warnings) = parse_llm_response(&text);
                PredictionRecord {
                    id: s.id.clone(),
                    predicates: PredicateSequence::of(&triplets).predicates,
                    triplets,
                    trace: json!({ "mode": mode, "source": source, "cache_key": key, "raw_response": text, "warnings": warnings }),
                }
            }
            Err(e) => {
                stats.failures += 1;
                log::warn!("{}: {e}", s.id);
                PredictionRecord {
                    id: s.id.clone(),
                    triplets: Vec::new(),
                    predicates: Vec::new(),
                    trace: json!({ "mode": mode, "source": source, "cache_key": key, "error": e.to_string() }),
                }
            }
        };
        records.push(record);
    }
    Ok(BaselineOutput { records, stats })
}
