//! Two-step extraction: decode the prompt blocks, then decode every triplet
//! in one pass conditioned on them.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{prompt_spans, Objective, PromptElement};
use crate::grammar::{
    build_triplet_input, parse_predicates, parse_triplets, serialize_prompt, wrap_sentence, ParseMode, ParseReport,
    SerializedSeq,
};
use crate::metrics::SentencePrediction;
use crate::types::{ExtractionInstance, PredicateSequence, Sentence, Triplet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "strategy", content = "width")]
pub enum Decoding {
    #[default]
    Greedy,
    Beam(usize),
}

/// Output of one decoder call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Generation {
    pub tokens: Vec<String>,
    /// The length cap was hit before an end token.
    pub truncated: bool,
}

/// Anything that can decode a target sequence for an objective. The model
/// crate implements it; tests use scripted stubs.
pub trait Seq2Seq {
    fn generate(&self, objective: Objective, source: &SerializedSeq, decoding: Decoding, max_len: usize) -> Generation;
}

impl<T: Seq2Seq + ?Sized> Seq2Seq for &T {
    fn generate(&self, objective: Objective, source: &SerializedSeq, decoding: Decoding, max_len: usize) -> Generation {
        (**self).generate(objective, source, decoding, max_len)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Predicate,
    Subject,
    Object,
    None,
    /// Gold predicates stand in for step one.
    Gold,
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "predicate" => Ok(PromptMode::Predicate),
            "subject" => Ok(PromptMode::Subject),
            "object" => Ok(PromptMode::Object),
            "none" => Ok(PromptMode::None),
            "gold" => Ok(PromptMode::Gold),
            other => Err(format!("unknown prompt mode {other:?}")),
        }
    }
}

impl PromptMode {
    /// The element decoded in step one; gold mode prompts with predicates.
    pub fn element(self) -> PromptElement {
        match self {
            PromptMode::Predicate | PromptMode::Gold => PromptElement::Predicate,
            PromptMode::Subject => PromptElement::Subject,
            PromptMode::Object => PromptElement::Object,
            PromptMode::None => PromptElement::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub decoding: Decoding,
    pub max_prompt_len: usize,
    pub max_triplet_len: usize,
    pub prompt_mode: PromptMode,
    pub dedup: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            decoding: Decoding::Greedy,
            max_prompt_len: 64,
            max_triplet_len: 192,
            prompt_mode: PromptMode::Predicate,
            dedup: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSource {
    Decoded,
    Gold,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub prompt_source: PromptSource,
    /// Step-one output as decoded (empty when no step one ran).
    pub raw_prompt: Vec<String>,
    /// The prompt blocks actually fed to the triplet decoder.
    pub prompt: Vec<String>,
    pub raw_triplets: Vec<String>,
    pub warnings: Vec<String>,
    pub prompt_truncated: bool,
    pub triplets_truncated: bool,
    /// Triplets parsed before deduplication.
    pub parsed_triplets: usize,
    /// Prompt span count differs from the parsed triplet count.
    pub count_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub triplets: Vec<Triplet>,
    /// Step-one spans (or the gold prompt).
    pub predicates: PredicateSequence,
    pub trace: Trace,
}

fn report_warnings(step: &str, report: &ParseReport, out: &mut Vec<String>) {
    for issue in &report.issues {
        out.push(format!("{step}: {} at token {}", issue.kind, issue.position));
    }
}

fn lenient_predicates(tokens: &[String]) -> (PredicateSequence, ParseReport) {
    parse_predicates(tokens, ParseMode::Lenient).expect("lenient parsing does not fail")
}

/// Step one alone: the decoded prompt spans, in decoded order.
pub fn extract_predicates<M: Seq2Seq + ?Sized>(m: &M, s: &Sentence, cfg: &InferenceConfig) -> PredicateSequence {
    let Ok(x_p) = wrap_sentence(s) else {
        return PredicateSequence::default();
    };
    let generation = m.generate(Objective::P, &x_p, cfg.decoding, cfg.max_prompt_len);
    lenient_predicates(&generation.tokens).0
}

fn empty_trace(source: PromptSource) -> Trace {
    Trace {
        prompt_source: source,
        raw_prompt: vec![],
        prompt: vec![],
        raw_triplets: vec![],
        warnings: vec![],
        prompt_truncated: false,
        triplets_truncated: false,
        parsed_triplets: 0,
        count_mismatch: false,
    }
}

/// Step two given prompt spans (possibly empty).
fn decode_triplets<M: Seq2Seq + ?Sized>(
    m: &M,
    x_p: &SerializedSeq,
    spans: &[String],
    cfg: &InferenceConfig,
    mut trace: Trace,
) -> Extraction {
    let y_p = match serialize_prompt(spans) {
        Ok(y) => y,
        Err(e) => {
            trace.warnings.push(format!("prompt dropped: {e}"));
            serialize_prompt::<String>(&[]).expect("empty prompt")
        }
    };
    let x_t = build_triplet_input(&y_p, x_p).expect("kinds are fixed here");
    trace.prompt = y_p.tokens.clone();
    let generation = m.generate(Objective::T, &x_t, cfg.decoding, cfg.max_triplet_len);
    trace.triplets_truncated = generation.truncated;
    let (parsed, report) =
        parse_triplets(&generation.tokens, ParseMode::Lenient).expect("lenient parsing does not fail");
    report_warnings("triplets", &report, &mut trace.warnings);
    trace.raw_triplets = generation.tokens;
    trace.parsed_triplets = parsed.len();
    trace.count_mismatch = trace.prompt_source != PromptSource::None && parsed.len() != spans.len();
    let triplets = if cfg.dedup {
        let mut seen = HashSet::new();
        parsed.into_iter().filter(|t| seen.insert(t.clone())).collect()
    } else {
        parsed
    };
    Extraction { triplets, predicates: PredicateSequence { predicates: spans.to_vec() }, trace }
}

fn run<M: Seq2Seq + ?Sized>(
    m: &M,
    s: &Sentence,
    element: PromptElement,
    gold: Option<&[String]>,
    cfg: &InferenceConfig,
) -> Extraction {
    let source = match (gold, element) {
        (Some(_), _) => PromptSource::Gold,
        (None, PromptElement::None) => PromptSource::None,
        (None, _) => PromptSource::Decoded,
    };
    let mut trace = empty_trace(source);
    let x_p = match wrap_sentence(s) {
        Ok(x) => x,
        Err(e) => {
            trace.warnings.push(format!("sentence rejected: {e}"));
            return Extraction { triplets: vec![], predicates: PredicateSequence::default(), trace };
        }
    };
    let spans = match (gold, element) {
        (Some(g), _) => g.to_vec(),
        (None, PromptElement::None) => vec![],
        (None, _) => {
            let generation = m.generate(Objective::P, &x_p, cfg.decoding, cfg.max_prompt_len);
            let (ps, report) = lenient_predicates(&generation.tokens);
            report_warnings("prompt", &report, &mut trace.warnings);
            trace.raw_prompt = generation.tokens;
            trace.prompt_truncated = generation.truncated;
            ps.predicates
        }
    };
    decode_triplets(m, &x_p, &spans, cfg, trace)
}

/// Extracts with the configured prompt mode. Gold mode needs the gold
/// prompt; use [`extract_with_gold_prompt`] or [`extract_instance`].
pub fn extract<M: Seq2Seq + ?Sized>(m: &M, s: &Sentence, cfg: &InferenceConfig) -> Extraction {
    if cfg.prompt_mode == PromptMode::Gold {
        let mut e = run(m, s, PromptElement::Predicate, Some(&[]), cfg);
        e.trace.warnings.push("gold prompt mode without gold prompt; decoded with an empty prompt".into());
        return e;
    }
    run(m, s, cfg.prompt_mode.element(), None, cfg)
}

/// The subject- or object-first ordering variants.
pub fn extract_with_prompt_variant<M: Seq2Seq + ?Sized>(
    m: &M,
    s: &Sentence,
    variant: PromptElement,
    cfg: &InferenceConfig,
) -> Extraction {
    run(m, s, variant, None, cfg)
}

/// Step two only, prompted with the given spans.
pub fn extract_with_gold_prompt<M: Seq2Seq + ?Sized>(
    m: &M,
    s: &Sentence,
    gold_prompt: &[String],
    cfg: &InferenceConfig,
) -> Extraction {
    run(m, s, PromptElement::Predicate, Some(gold_prompt), cfg)
}

/// Extracts from a gold instance, taking the gold prompt from its triplets
/// when the mode is gold.
pub fn extract_instance<M: Seq2Seq + ?Sized>(m: &M, inst: &ExtractionInstance, cfg: &InferenceConfig) -> Extraction {
    match cfg.prompt_mode {
        PromptMode::Gold => {
            extract_with_gold_prompt(m, &inst.sentence, &prompt_spans(inst, PromptElement::Predicate), cfg)
        }
        _ => extract(m, &inst.sentence, cfg),
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub triplets: Vec<Triplet>,
    pub predicates: Vec<String>,
    pub trace: serde_json::Value,
}

impl PredictionRecord {
    pub fn from_extraction(id: &str, e: &Extraction) -> Self {
        PredictionRecord {
            id: id.to_string(),
            triplets: e.triplets.clone(),
            predicates: e.predicates.predicates.clone(),
            trace: serde_json::to_value(&e.trace).expect("trace serializes"),
        }
    }
}

pub fn extract_corpus<M: Seq2Seq + ?Sized>(
    m: &M,
    corpus: &[ExtractionInstance],
    cfg: &InferenceConfig,
) -> Vec<PredictionRecord> {
    corpus.iter().map(|inst| PredictionRecord::from_extraction(inst.id(), &extract_instance(m, inst, cfg))).collect()
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

pub fn read_predictions(path: &Path) -> std::io::Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Predictions keyed by sentence id, as the scorers take them. Records
/// without step-one predicates score Pred-F1 on their triplets' predicates.
pub fn prediction_map(records: &[PredictionRecord]) -> BTreeMap<String, SentencePrediction> {
    records
        .iter()
        .map(|r| {
            let has_prompt = r.trace.get("prompt_source").and_then(|v| v.as_str()).is_some_and(|s| s != "none");
            let predicates = has_prompt.then(|| PredicateSequence { predicates: r.predicates.clone() });
            (r.id.clone(), SentencePrediction { triplets: r.triplets.clone(), predicates })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use proptest::prelude::*;

    use super::*;
    use crate::grammar::{serialize_predicates, serialize_triplets, SeqKind, REL_OPEN};

    /// Replays fixed outputs per objective and records every call.
    struct Script {
        prompt: Vec<String>,
        triplets: Vec<String>,
        calls: RefCell<Vec<(Objective, Vec<String>)>>,
    }

    impl Script {
        fn new(prompt: &str, triplets: &str) -> Self {
            let toks = |s: &str| s.split_whitespace().map(String::from).collect();
            Script { prompt: toks(prompt), triplets: toks(triplets), calls: RefCell::new(vec![]) }
        }

        fn count(&self, o: Objective) -> usize {
            self.calls.borrow().iter().filter(|(c, _)| *c == o).count()
        }
    }

    impl Seq2Seq for Script {
        fn generate(&self, objective: Objective, source: &SerializedSeq, _: Decoding, _: usize) -> Generation {
            self.calls.borrow_mut().push((objective, source.tokens.clone()));
            let tokens = match objective {
                Objective::P => self.prompt.clone(),
                _ => self.triplets.clone(),
            };
            Generation { tokens, truncated: false }
        }
    }

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

    fn table1_script() -> Script {
        let inst = table1();
        let y_p = serialize_predicates(&PredicateSequence::of(&inst.triplets)).unwrap();
        let y_t = serialize_triplets(&inst.triplets).unwrap();
        Script::new(&y_p.text(), &y_t.text())
    }

    #[test]
    fn predicates_from_stub() {
        let ps = extract_predicates(&table1_script(), &table1().sentence, &InferenceConfig::default());
        assert_eq!(ps.predicates, ["was born on", "was born in", "is in"]);
        let eos = Script::new("", "");
        assert!(extract_predicates(&eos, &table1().sentence, &InferenceConfig::default()).is_empty());
    }

    #[test]
    fn malformed_prompt_is_reported() {
        let bad = Script::new("<rel> is", "");
        let e = extract(&bad, &table1().sentence, &InferenceConfig::default());
        assert!(e.predicates.is_empty());
        assert_eq!(e.trace.warnings.len(), 1);
        assert!(e.trace.warnings[0].starts_with("prompt: unclosed block"));
    }

    #[test]
    fn table1_end_to_end() {
        let stub = table1_script();
        let inst = table1();
        let e = extract(&stub, &inst.sentence, &InferenceConfig::default());
        assert_eq!(e.triplets, inst.triplets);
        assert_eq!(e.trace.prompt_source, PromptSource::Decoded);
        assert!(e.trace.warnings.is_empty());
        assert!(!e.trace.count_mismatch);
        assert_eq!((stub.count(Objective::P), stub.count(Objective::T), stub.count(Objective::S)), (1, 1, 0));
        // The triplet decoder saw prompt ++ wrapped sentence.
        let calls = stub.calls.borrow();
        let x_t = &calls[1].1;
        assert_eq!(x_t.len(), 14 + inst.sentence.len() + 2);
    }

    #[test]
    fn gold_prompt_is_byte_exact() {
        let stub = table1_script();
        let inst = table1();
        let cfg = InferenceConfig { prompt_mode: PromptMode::Gold, ..Default::default() };
        let e = extract_instance(&stub, &inst, &cfg);
        assert_eq!(e.triplets, inst.triplets);
        assert_eq!(e.trace.prompt_source, PromptSource::Gold);
        assert_eq!(stub.count(Objective::P), 0);
        let want = build_triplet_input(
            &serialize_predicates(&PredicateSequence::of(&inst.triplets)).unwrap(),
            &wrap_sentence(&inst.sentence).unwrap(),
        )
        .unwrap();
        assert_eq!(stub.calls.borrow()[0].1, want.tokens);
    }

    #[test]
    fn dedup_collapses_exact_copies() {
        let t = "<sub> a </sub> <rel> b </rel> <obj> c </obj>";
        let stub = Script::new("<rel> b </rel>", &format!("{t} {t}"));
        let s = Sentence::new("d", "a b c").unwrap();
        let e = extract(&stub, &s, &InferenceConfig::default());
        assert_eq!(e.triplets.len(), 1);
        assert_eq!(e.trace.parsed_triplets, 2);
        assert!(e.trace.count_mismatch);
        let keep = extract(&stub, &s, &InferenceConfig { dedup: false, ..Default::default() });
        assert_eq!(keep.triplets.len(), 2);
    }

    #[test]
    fn no_prompt_mode_skips_step_one() {
        let stub = table1_script();
        let cfg = InferenceConfig { prompt_mode: PromptMode::None, ..Default::default() };
        let e = extract(&stub, &table1().sentence, &cfg);
        assert_eq!(stub.count(Objective::P), 0);
        assert_eq!(stub.calls.borrow()[0].1[0], "<sen>");
        assert_eq!(e.triplets.len(), 3);
        assert!(!e.trace.count_mismatch);
    }

    #[test]
    fn subject_variant_prompt_blocks() {
        let inst = table1();
        let spans = prompt_spans(&inst, PromptElement::Subject);
        assert_eq!(spans, ["Shea", "Shea", "San Francisco"]);
        let stub = table1_script();
        let e = extract_with_gold_prompt(&stub, &inst.sentence, &spans, &InferenceConfig::default());
        let prompt = SerializedSeq::new(SeqKind::PromptBlocks, e.trace.prompt.clone());
        assert_eq!(prompt.text(), "<rel> Shea </rel> <rel> Shea </rel> <rel> San Francisco </rel>");
        let (back, report) = parse_predicates(&e.trace.prompt, ParseMode::Strict).unwrap();
        assert_eq!(back.predicates, spans);
        assert!(report.is_empty());
    }

    #[test]
    fn object_variant_with_empty_prompt() {
        let stub = Script::new("", "<sub> a </sub> <rel> b </rel> <obj> c </obj>");
        let s = Sentence::new("o", "a b c").unwrap();
        let e = extract_with_prompt_variant(&stub, &s, PromptElement::Object, &InferenceConfig::default());
        assert_eq!(stub.count(Objective::P), 1);
        assert_eq!(stub.calls.borrow()[1].1, wrap_sentence(&s).unwrap().tokens);
        assert_eq!(e.triplets.len(), 1);
    }

    #[test]
    fn one_triplet_call_per_sentence() {
        for m in 1..=4 {
            let ts: Vec<Triplet> =
                (0..m).map(|i| Triplet::new(&format!("s{i}"), &format!("p{i}"), &format!("o{i}")).unwrap()).collect();
            let stub = Script::new(
                &serialize_predicates(&PredicateSequence::of(&ts)).unwrap().text(),
                &serialize_triplets(&ts).unwrap().text(),
            );
            let words: Vec<String> =
                ts.iter().flat_map(|t| [t.subject.clone(), t.predicate.clone(), t.object.clone()]).collect();
            let s = Sentence::from_tokens("m", &words).unwrap();
            let e = extract(&stub, &s, &InferenceConfig::default());
            assert_eq!(e.triplets.len(), m);
            assert_eq!(stub.count(Objective::T), 1);
        }
    }

    #[test]
    fn predictions_roundtrip() {
        let stub = table1_script();
        let records = extract_corpus(&stub, &[table1()], &InferenceConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.jsonl");
        write_predictions(&path, &records).unwrap();
        let back = read_predictions(&path).unwrap();
        assert_eq!(back, records);
        let line = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        for key in ["id", "triplets", "predicates", "trace"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let map = prediction_map(&back);
        assert_eq!(map["t1"].predicates.as_ref().unwrap().predicates.len(), 3);
    }

    /// Emits an arbitrary token list.
    struct Noise(Vec<String>);

    impl Seq2Seq for Noise {
        fn generate(&self, _: Objective, _: &SerializedSeq, _: Decoding, _: usize) -> Generation {
            Generation { tokens: self.0.clone(), truncated: true }
        }
    }

    proptest! {
        #[test]
        fn never_fails_on_garbage(tokens in prop::collection::vec(
            prop::sample::select(vec![REL_OPEN, "</rel>", "<sub>", "</sub>", "<obj>", "</obj>", "<sen>", "</sen>", "x", "y"]),
            0..40,
        )) {
            let noise = Noise(tokens.into_iter().map(String::from).collect());
            let s = Sentence::new("g", "x y").unwrap();
            let e = extract(&noise, &s, &InferenceConfig::default());
            prop_assert!(e.trace.triplets_truncated);
            let _ = e.triplets.len();
        }
    }
}
