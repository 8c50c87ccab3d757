use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::order::order_triplets;
use super::DatasetError;
use crate::types::{ExtractionInstance, Sentence, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    CanonicalJsonl,
    CarbTsv,
    SaokeJson,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical-jsonl" | "jsonl" => Ok(CorpusFormat::CanonicalJsonl),
            "carb-tsv" => Ok(CorpusFormat::CarbTsv),
            "saoke-json" => Ok(CorpusFormat::SaokeJson),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTriplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// One line of the canonical JSONL corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    pub triplets: Vec<RecordTriplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<String>,
}

impl CorpusRecord {
    pub fn from_instance(inst: &ExtractionInstance, pool: Option<&str>) -> Self {
        CorpusRecord {
            id: inst.sentence.id.clone(),
            text: inst.sentence.text.clone(),
            tokens: Some(inst.sentence.tokens.clone()),
            triplets: inst
                .triplets
                .iter()
                .map(|t| RecordTriplet {
                    subject: t.subject.clone(),
                    predicate: t.predicate.clone(),
                    object: t.object.clone(),
                })
                .collect(),
            pool: pool.map(str::to_string),
        }
    }
}

/// What the loader changed or dropped while normalizing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub instances: usize,
    pub triplets: usize,
    pub duplicates_removed: usize,
    pub qualifiers_dropped: usize,
    pub notes: Vec<String>,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<ExtractionInstance>, DatasetError> {
    load_corpus_with_report(path, format).map(|(c, _)| c)
}

pub fn load_corpus_with_report(
    path: &Path,
    format: CorpusFormat,
) -> Result<(Vec<ExtractionInstance>, LoadReport), DatasetError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: display.clone(), source })?;
    let mut report = LoadReport::default();
    let mut out = match format {
        CorpusFormat::CanonicalJsonl => parse_canonical(&text, &display)?,
        CorpusFormat::CarbTsv => parse_carb(&text, &display, &mut report)?,
        CorpusFormat::SaokeJson => parse_saoke(&text, &display, &mut report)?,
    };
    if out.is_empty() {
        return Err(DatasetError::EmptyCorpus(display));
    }
    for inst in &mut out {
        *inst = order_triplets(inst);
    }
    report.instances = out.len();
    report.triplets = out.iter().map(|i| i.triplets.len()).sum();
    Ok((out, report))
}

fn format_err(path: &str, line: usize, message: impl ToString) -> DatasetError {
    DatasetError::Format { path: path.to_string(), line, message: message.to_string() }
}

fn parse_canonical(text: &str, path: &str) -> Result<Vec<ExtractionInstance>, DatasetError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(line).map_err(|e| format_err(path, line_no, e))?;
        out.push(record_to_instance(rec).map_err(|e| format_err(path, line_no, e))?);
    }
    Ok(out)
}

/// Validates a canonical record, rejecting duplicate gold triplets.
pub fn record_to_instance(rec: CorpusRecord) -> Result<ExtractionInstance, DatasetError> {
    let sentence = match rec.tokens {
        Some(tokens) => Sentence::with_tokens(rec.id, rec.text, tokens)?,
        None => Sentence::new(rec.id, rec.text)?,
    };
    let mut seen = HashSet::new();
    let mut triplets = Vec::with_capacity(rec.triplets.len());
    for t in rec.triplets {
        let t = Triplet::new(&t.subject, &t.predicate, &t.object)?;
        if !seen.insert(t.clone()) {
            return Err(DatasetError::DuplicateTriplet(t.to_string()));
        }
        triplets.push(t);
    }
    Ok(ExtractionInstance::new(sentence, triplets))
}

/// CaRB gold layout: `sentence \t predicate \t arg1 \t arg2 [\t argN..]`,
/// consecutive lines with the same sentence form one instance. Arguments
/// beyond the second are appended to the object.
fn parse_carb(text: &str, path: &str, report: &mut LoadReport) -> Result<Vec<ExtractionInstance>, DatasetError> {
    let mut out: Vec<ExtractionInstance> = Vec::new();
    let mut extra_args = 0usize;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(format_err(
                path,
                line_no,
                format!("expected at least 4 tab-separated columns, got {}", cols.len()),
            ));
        }
        let sentence_text = cols[0].trim();
        let object = cols[3..].iter().map(|c| c.trim()).filter(|c| !c.is_empty()).collect::<Vec<_>>().join(" ");
        if cols.len() > 4 {
            extra_args += 1;
        }
        let t = Triplet::new(cols[2], cols[1], &object).map_err(|e| format_err(path, line_no, e))?;
        let same = out.last().map(|i| i.sentence.text == sentence_text).unwrap_or(false);
        if !same {
            let s =
                Sentence::new(format!("carb:{line_no}"), sentence_text).map_err(|e| format_err(path, line_no, e))?;
            out.push(ExtractionInstance::new(s, Vec::new()));
        }
        let inst = out.last_mut().unwrap();
        if inst.triplets.contains(&t) {
            report.duplicates_removed += 1;
        } else {
            inst.triplets.push(t);
        }
    }
    if extra_args > 0 {
        report
            .notes
            .push(format!("{extra_args} tuples had more than two arguments; extras were appended to the object"));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct SaokeFact {
    #[serde(default)]
    subject: String,
    #[serde(default)]
    predicate: String,
    #[serde(default)]
    object: Vec<String>,
    #[serde(default)]
    qualifier: String,
    #[serde(default)]
    place: String,
    #[serde(default)]
    time: String,
}

#[derive(Debug, Deserialize)]
struct SaokeLine {
    natural: String,
    #[serde(default)]
    logic: Vec<SaokeFact>,
}

fn filled(s: &str) -> bool {
    let s = s.trim();
    !s.is_empty() && s != "_"
}

/// SAOKE lines: `{"natural": .., "logic": [{"subject", "predicate",
/// "object": [..], "qualifier", "place", "time"}]}`. Qualifier, place and
/// time are dropped and counted in the report.
fn parse_saoke(text: &str, path: &str, report: &mut LoadReport) -> Result<Vec<ExtractionInstance>, DatasetError> {
    let mut out = Vec::new();
    let mut skipped = 0usize;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SaokeLine = serde_json::from_str(line).map_err(|e| format_err(path, line_no, e))?;
        let sentence =
            Sentence::new(format!("saoke:{line_no}"), rec.natural.trim()).map_err(|e| format_err(path, line_no, e))?;
        let mut triplets: Vec<Triplet> = Vec::new();
        for fact in rec.logic {
            if filled(&fact.qualifier) || filled(&fact.place) || filled(&fact.time) {
                report.qualifiers_dropped += 1;
            }
            let object = fact.object.iter().filter(|o| filled(o)).map(|o| o.trim()).collect::<Vec<_>>().join(" ");
            if !filled(&fact.subject) || !filled(&fact.predicate) || object.is_empty() {
                skipped += 1;
                continue;
            }
            let t = Triplet::new(&fact.subject, &fact.predicate, &object).map_err(|e| format_err(path, line_no, e))?;
            if triplets.contains(&t) {
                report.duplicates_removed += 1;
            } else {
                triplets.push(t);
            }
        }
        out.push(ExtractionInstance::new(sentence, triplets));
    }
    if report.qualifiers_dropped > 0 {
        report.notes.push(format!("{} facts carried qualifier/place/time fields; dropped", report.qualifiers_dropped));
    }
    if skipped > 0 {
        report.notes.push(format!("{skipped} facts lacked a subject, predicate or object; skipped"));
    }
    Ok(out)
}

/// Writes instances as canonical JSONL, optionally tagging a pool name.
pub fn write_corpus(path: &Path, instances: &[ExtractionInstance], pool: Option<&str>) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for inst in instances {
        let rec = CorpusRecord::from_instance(inst, pool);
        serde_json::to_writer(&mut f, &rec)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}
