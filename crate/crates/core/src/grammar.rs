//! The special-token grammar linking structured triplets to token sequences.
//!
//! ```text
//! x_P = <sen> w1 .. wn </sen>
//! y_P = <rel> p1 </rel> .. <rel> pk </rel>
//! x_T = y_P ++ x_P
//! y_T = <sub> s1 </sub> <rel> p1 </rel> <obj> o1 </obj> ..
//! x_S = y_T,  y_S has the x_P layout
//! ```
//!
//! Serializers work on token lists. Parsers never panic; in lenient mode
//! malformed regions are dropped and listed in a [`ParseReport`], in strict
//! mode the first problem is returned as [`GrammarError::MalformedSequence`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::{detokenize, tokenize};
use crate::types::{PredicateSequence, Sentence, Triplet};

pub const SEN_OPEN: &str = "<sen>";
pub const SEN_CLOSE: &str = "</sen>";
pub const SUB_OPEN: &str = "<sub>";
pub const SUB_CLOSE: &str = "</sub>";
pub const REL_OPEN: &str = "<rel>";
pub const REL_CLOSE: &str = "</rel>";
pub const OBJ_OPEN: &str = "<obj>";
pub const OBJ_CLOSE: &str = "</obj>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("reserved marker inside content: {0:?}")]
    ReservedToken(String),
    #[error("empty {0} field")]
    EmptyField(&'static str),
    #[error("token {0:?} is empty or contains whitespace")]
    BadToken(String),
    #[error("tokens of sentence {id:?} do not cover its text")]
    TokensDoNotCoverText { id: String },
    #[error("malformed sequence at token {position}: {kind}")]
    MalformedSequence { position: usize, kind: IssueKind },
    #[error("expected a {expected} sequence, got {found}")]
    KindMismatch { expected: SeqKind, found: SeqKind },
}

/// The eight reserved surface forms.
pub struct SpecialVocab;

impl SpecialVocab {
    pub const TOKENS: [&'static str; 8] =
        [SEN_OPEN, SEN_CLOSE, SUB_OPEN, SUB_CLOSE, REL_OPEN, REL_CLOSE, OBJ_OPEN, OBJ_CLOSE];

    pub fn is_special(token: &str) -> bool {
        Self::TOKENS.contains(&token)
    }

    /// Rejects any text that embeds a reserved surface form.
    pub fn check(text: &str) -> Result<(), GrammarError> {
        match Self::TOKENS.iter().find(|m| text.contains(*m)) {
            Some(_) => Err(GrammarError::ReservedToken(text.to_string())),
            None => Ok(()),
        }
    }
}

/// Which slot of the pipeline a sequence fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeqKind {
    /// `x_P`: wrapped sentence fed to the encoder.
    SentenceInput,
    /// `y_P`: relation-marker blocks.
    PromptBlocks,
    /// `x_T`: prompt followed by the wrapped sentence.
    TripletInput,
    /// `y_T`, also used as `x_S`.
    Triplets,
    /// `y_S`: reconstructed sentence, same layout as `x_P`.
    SentenceOutput,
}

impl fmt::Display for SeqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SeqKind::SentenceInput => "x_P",
            SeqKind::PromptBlocks => "y_P",
            SeqKind::TripletInput => "x_T",
            SeqKind::Triplets => "y_T",
            SeqKind::SentenceOutput => "y_S",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedSeq {
    pub kind: SeqKind,
    pub tokens: Vec<String>,
}

impl SerializedSeq {
    pub fn new(kind: SeqKind, tokens: Vec<String>) -> Self {
        SerializedSeq { kind, tokens }
    }

    /// Reads a space-separated rendering back into tokens.
    pub fn from_text(kind: SeqKind, text: &str) -> Self {
        SerializedSeq { kind, tokens: tokenize(text) }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }

    pub fn expect_kind(&self, expected: SeqKind) -> Result<(), GrammarError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(GrammarError::KindMismatch { expected, found: self.kind })
        }
    }
}

impl fmt::Display for SerializedSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseMode {
    Lenient,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    /// Content token outside any block.
    StrayToken,
    /// A block was opened but the sequence ended or another block began.
    UnclosedBlock,
    /// `<x> </x>` with nothing inside.
    EmptySpan,
    /// A marker that does not fit the expected block order.
    UnexpectedMarker,
    /// A triplet block missing one of its three fields.
    IncompleteTriplet,
    /// Sentence markers missing or out of place.
    MissingSentenceMarker,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IssueKind::StrayToken => "stray token outside a block",
            IssueKind::UnclosedBlock => "unclosed block",
            IssueKind::EmptySpan => "empty span",
            IssueKind::UnexpectedMarker => "unexpected marker",
            IssueKind::IncompleteTriplet => "incomplete triplet block",
            IssueKind::MissingSentenceMarker => "missing sentence marker",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    pub position: usize,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub issues: Vec<ParseIssue>,
}

impl ParseReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    fn push(&mut self, position: usize, kind: IssueKind) {
        self.issues.push(ParseIssue { position, kind });
    }

    fn finish<T>(self, value: T, mode: ParseMode) -> Result<(T, ParseReport), GrammarError> {
        match (mode, self.issues.first()) {
            (ParseMode::Strict, Some(first)) => {
                Err(GrammarError::MalformedSequence { position: first.position, kind: first.kind })
            }
            _ => Ok((value, self)),
        }
    }
}

fn field_tokens(text: &str) -> Result<Vec<String>, GrammarError> {
    SpecialVocab::check(text)?;
    Ok(tokenize(text))
}

fn push_block(out: &mut Vec<String>, open: &str, close: &str, body: &str) -> Result<(), GrammarError> {
    let toks = field_tokens(body)?;
    if toks.is_empty() {
        return Err(GrammarError::EmptyField(match open {
            SUB_OPEN => "subject",
            OBJ_OPEN => "object",
            _ => "predicate",
        }));
    }
    out.push(open.to_string());
    out.extend(toks);
    out.push(close.to_string());
    Ok(())
}

/// `[<sen>, w1, .., wn, </sen>]`.
pub fn wrap_sentence(sentence: &Sentence) -> Result<SerializedSeq, GrammarError> {
    wrap_tokens(&sentence.tokens, SeqKind::SentenceInput)
}

pub(crate) fn wrap_tokens(tokens: &[String], kind: SeqKind) -> Result<SerializedSeq, GrammarError> {
    if tokens.is_empty() {
        return Err(GrammarError::EmptySentence);
    }
    let mut out = Vec::with_capacity(tokens.len() + 2);
    out.push(SEN_OPEN.to_string());
    for t in tokens {
        SpecialVocab::check(t)?;
        out.push(t.clone());
    }
    out.push(SEN_CLOSE.to_string());
    Ok(SerializedSeq::new(kind, out))
}

/// Relation-marker blocks, one per predicate, in order.
pub fn serialize_predicates(ps: &PredicateSequence) -> Result<SerializedSeq, GrammarError> {
    serialize_prompt(&ps.predicates)
}

/// Same layout for any list of spans used as a step-one prompt
/// (predicates, or subjects/objects for the order variants).
pub fn serialize_prompt<S: AsRef<str>>(spans: &[S]) -> Result<SerializedSeq, GrammarError> {
    let mut out = Vec::new();
    for p in spans {
        push_block(&mut out, REL_OPEN, REL_CLOSE, p.as_ref())?;
    }
    Ok(SerializedSeq::new(SeqKind::PromptBlocks, out))
}

pub fn serialize_triplets(ts: &[Triplet]) -> Result<SerializedSeq, GrammarError> {
    let mut out = Vec::new();
    for t in ts {
        push_block(&mut out, SUB_OPEN, SUB_CLOSE, &t.subject)?;
        push_block(&mut out, REL_OPEN, REL_CLOSE, &t.predicate)?;
        push_block(&mut out, OBJ_OPEN, OBJ_CLOSE, &t.object)?;
    }
    Ok(SerializedSeq::new(SeqKind::Triplets, out))
}

/// `x_T = [y_P ; x_P]`.
pub fn build_triplet_input(prompt: &SerializedSeq, wrapped: &SerializedSeq) -> Result<SerializedSeq, GrammarError> {
    prompt.expect_kind(SeqKind::PromptBlocks)?;
    wrapped.expect_kind(SeqKind::SentenceInput)?;
    let mut tokens = Vec::with_capacity(prompt.len() + wrapped.len());
    tokens.extend(prompt.tokens.iter().cloned());
    tokens.extend(wrapped.tokens.iter().cloned());
    Ok(SerializedSeq::new(SeqKind::TripletInput, tokens))
}

/// Spans between balanced `<rel>`/`</rel>` markers.
pub fn parse_predicates(tokens: &[String], mode: ParseMode) -> Result<(PredicateSequence, ParseReport), GrammarError> {
    let mut report = ParseReport::default();
    let mut predicates = Vec::new();
    let mut open: Option<(usize, Vec<&str>)> = None;
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_str();
        match (tok, open.as_mut()) {
            (REL_OPEN, None) => open = Some((i, Vec::new())),
            (REL_OPEN, Some((start, _))) => {
                report.push(*start, IssueKind::UnclosedBlock);
                open = Some((i, Vec::new()));
            }
            (REL_CLOSE, Some(_)) => {
                let (start, body) = open.take().unwrap();
                if body.is_empty() {
                    report.push(start, IssueKind::EmptySpan);
                } else {
                    predicates.push(detokenize(&body));
                }
            }
            (REL_CLOSE, None) => report.push(i, IssueKind::UnexpectedMarker),
            (t, Some((start, _))) if SpecialVocab::is_special(t) => {
                report.push(*start, IssueKind::UnclosedBlock);
                report.push(i, IssueKind::UnexpectedMarker);
                open = None;
            }
            (t, None) if SpecialVocab::is_special(t) => report.push(i, IssueKind::UnexpectedMarker),
            (_, Some((_, body))) => body.push(tok),
            (_, None) => report.push(i, IssueKind::StrayToken),
        }
    }
    if let Some((start, _)) = open {
        report.push(start, IssueKind::UnclosedBlock);
    }
    report.finish(PredicateSequence { predicates }, mode)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Sub,
    Rel,
    Obj,
}

impl Field {
    fn open(self) -> &'static str {
        match self {
            Field::Sub => SUB_OPEN,
            Field::Rel => REL_OPEN,
            Field::Obj => OBJ_OPEN,
        }
    }

    fn close(self) -> &'static str {
        match self {
            Field::Sub => SUB_CLOSE,
            Field::Rel => REL_CLOSE,
            Field::Obj => OBJ_CLOSE,
        }
    }
}

/// Triplet blocks in strict `<sub> <rel> <obj>` order. Duplicates are kept.
pub fn parse_triplets(tokens: &[String], mode: ParseMode) -> Result<(Vec<Triplet>, ParseReport), GrammarError> {
    let mut report = ParseReport::default();
    let mut out = Vec::new();

    // Block under construction: start position, completed fields, open field.
    let mut block_start = 0usize;
    let mut done: Vec<String> = Vec::new();
    let mut current: Option<(Field, Vec<&str>)> = None;
    let mut in_block = false;

    let order = [Field::Sub, Field::Rel, Field::Obj];

    let abandon = |report: &mut ParseReport, start: usize, in_block: bool, done: &mut Vec<String>| {
        if in_block {
            report.push(start, IssueKind::IncompleteTriplet);
        }
        done.clear();
    };

    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_str();
        if let Some((field, body)) = current.as_mut() {
            if tok == field.close() {
                let field = *field;
                if body.is_empty() {
                    report.push(i, IssueKind::EmptySpan);
                    abandon(&mut report, block_start, in_block, &mut done);
                    in_block = false;
                    current = None;
                    continue;
                }
                done.push(detokenize(body));
                current = None;
                if field == Field::Obj {
                    out.push(Triplet { subject: done[0].clone(), predicate: done[1].clone(), object: done[2].clone() });
                    done.clear();
                    in_block = false;
                }
                continue;
            }
            if !SpecialVocab::is_special(tok) {
                body.push(tok);
                continue;
            }
            // A marker inside an open field breaks the block.
            report.push(i, IssueKind::UnexpectedMarker);
            abandon(&mut report, block_start, in_block, &mut done);
            in_block = false;
            current = None;
            if tok == SUB_OPEN {
                block_start = i;
                in_block = true;
                current = Some((Field::Sub, Vec::new()));
            }
            continue;
        }

        let expected = order[done.len()];
        if tok == expected.open() {
            if expected == Field::Sub {
                block_start = i;
                in_block = true;
            }
            current = Some((expected, Vec::new()));
        } else if tok == SUB_OPEN {
            // Restart: the previous block never completed.
            abandon(&mut report, block_start, in_block, &mut done);
            block_start = i;
            in_block = true;
            current = Some((Field::Sub, Vec::new()));
        } else if SpecialVocab::is_special(tok) {
            report.push(i, IssueKind::UnexpectedMarker);
            abandon(&mut report, block_start, in_block, &mut done);
            in_block = false;
        } else {
            report.push(i, IssueKind::StrayToken);
        }
    }
    if current.is_some() || in_block {
        report.push(block_start, IssueKind::IncompleteTriplet);
    }
    report.finish(out, mode)
}

/// Inverse of [`wrap_sentence`]: the content between `<sen>` and `</sen>`.
/// In lenient mode missing markers are tolerated and other markers dropped.
pub fn parse_sentence(tokens: &[String], mode: ParseMode) -> Result<(Vec<String>, ParseReport), GrammarError> {
    let mut report = ParseReport::default();
    let mut body = tokens;
    if body.first().map(String::as_str) == Some(SEN_OPEN) {
        body = &body[1..];
    } else {
        report.push(0, IssueKind::MissingSentenceMarker);
    }
    if body.last().map(String::as_str) == Some(SEN_CLOSE) {
        body = &body[..body.len() - 1];
    } else {
        report.push(tokens.len(), IssueKind::MissingSentenceMarker);
    }
    let offset = tokens.len() - body.len();
    let mut words = Vec::with_capacity(body.len());
    for (i, t) in body.iter().enumerate() {
        if SpecialVocab::is_special(t) {
            report.push(i + offset, IssueKind::UnexpectedMarker);
        } else {
            words.push(t.clone());
        }
    }
    report.finish(words, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn table1_triplets() -> Vec<Triplet> {
        vec![
            Triplet::new("Shea", "was born on", "September 5, 1900").unwrap(),
            Triplet::new("Shea", "was born in", "San Francisco, California").unwrap(),
            Triplet::new("San Francisco", "is in", "California").unwrap(),
        ]
    }

    #[test]
    fn wraps_table_sentence() {
        let s = Sentence::new("t1", "Shea was born on September 5, 1900 in San Francisco, California.").unwrap();
        let x = wrap_sentence(&s).unwrap();
        assert_eq!(x.kind, SeqKind::SentenceInput);
        assert_eq!(x.len(), s.len() + 2);
        assert_eq!(x.tokens.first().unwrap(), SEN_OPEN);
        assert_eq!(x.tokens.last().unwrap(), SEN_CLOSE);
        assert_eq!(x.text(), "<sen> Shea was born on September 5 , 1900 in San Francisco , California . </sen>");
    }

    #[test]
    fn wrap_minimal_and_empty() {
        let s = Sentence::from_tokens("a", &["a"]).unwrap();
        assert_eq!(wrap_sentence(&s).unwrap().text(), "<sen> a </sen>");
        assert_eq!(wrap_tokens(&[], SeqKind::SentenceInput), Err(GrammarError::EmptySentence));
        assert!(matches!(
            wrap_tokens(&["</obj>".to_string()], SeqKind::SentenceInput),
            Err(GrammarError::ReservedToken(_))
        ));
    }

    #[test]
    fn serializes_predicates_in_order() {
        let ps = PredicateSequence::new(&["was born on", "was born in", "is in"]).unwrap();
        let y = serialize_predicates(&ps).unwrap();
        assert_eq!(y.text(), "<rel> was born on </rel> <rel> was born in </rel> <rel> is in </rel>");
        assert!(serialize_predicates(&PredicateSequence::default()).unwrap().is_empty());
        let one = PredicateSequence::new(&["is"]).unwrap();
        assert_eq!(serialize_predicates(&one).unwrap().text(), "<rel> is </rel>");
    }

    #[test]
    fn serializes_triplet_blocks() {
        let t = &table1_triplets()[..1];
        assert_eq!(
            serialize_triplets(t).unwrap().text(),
            "<sub> Shea </sub> <rel> was born on </rel> <obj> September 5 , 1900 </obj>"
        );
        assert!(serialize_triplets(&[]).unwrap().is_empty());
        let two = serialize_triplets(&table1_triplets()[..2]).unwrap();
        assert_eq!(two.tokens[..2], ["<sub>".to_string(), "Shea".to_string()]);
        assert_eq!(two.len(), 2 * 6 + (1 + 3 + 4) + (1 + 3 + 4));
    }

    #[test]
    fn serializer_rejects_reserved_content() {
        let bad = PredicateSequence { predicates: vec!["a </rel> b".into()] };
        assert!(matches!(serialize_predicates(&bad), Err(GrammarError::ReservedToken(_))));
    }

    #[test]
    fn parses_well_formed_predicates() {
        let (ps, rep) = parse_predicates(&toks("<rel> is </rel>"), ParseMode::Strict).unwrap();
        assert_eq!(ps.predicates, vec!["is"]);
        assert!(rep.is_empty());
    }

    #[test]
    fn unclosed_predicate_block() {
        // Trace: `<rel>` opens at 0, `is` joins the body, input ends while
        // open -> one UnclosedBlock issue, nothing emitted.
        let (ps, rep) = parse_predicates(&toks("<rel> is"), ParseMode::Lenient).unwrap();
        assert!(ps.is_empty());
        assert_eq!(rep.issues, vec![ParseIssue { position: 0, kind: IssueKind::UnclosedBlock }]);
        assert_eq!(
            parse_predicates(&toks("<rel> is"), ParseMode::Strict),
            Err(GrammarError::MalformedSequence { position: 0, kind: IssueKind::UnclosedBlock })
        );
    }

    #[test]
    fn predicate_parser_recovers_after_garbage() {
        let (ps, rep) =
            parse_predicates(&toks("x <rel> a <obj> <rel> b </rel> </rel> <rel> </rel>"), ParseMode::Lenient).unwrap();
        assert_eq!(ps.predicates, vec!["b"]);
        let kinds: Vec<_> = rep.issues.iter().map(|i| i.kind).collect();
        assert_eq!(
            kinds,
            vec![
                IssueKind::StrayToken,
                IssueKind::UnclosedBlock,
                IssueKind::UnexpectedMarker,
                IssueKind::UnexpectedMarker,
                IssueKind::EmptySpan
            ]
        );
    }

    #[test]
    fn table1_triplets_round_trip() {
        let ts = table1_triplets();
        let y = serialize_triplets(&ts).unwrap();
        let (back, rep) = parse_triplets(&y.tokens, ParseMode::Strict).unwrap();
        assert_eq!(back, ts);
        assert!(rep.is_empty());
    }

    #[test]
    fn missing_object_is_incomplete() {
        let (ts, rep) = parse_triplets(&toks("<sub> A </sub> <rel> r </rel>"), ParseMode::Lenient).unwrap();
        assert!(ts.is_empty());
        assert_eq!(rep.issues, vec![ParseIssue { position: 0, kind: IssueKind::IncompleteTriplet }]);
        assert!(parse_triplets(&toks("<sub> A </sub> <rel> r </rel>"), ParseMode::Strict).is_err());
    }

    #[test]
    fn empty_triplet_sequence() {
        let (ts, rep) = parse_triplets(&[], ParseMode::Strict).unwrap();
        assert!(ts.is_empty() && rep.is_empty());
    }

    #[test]
    fn triplet_parser_keeps_duplicates_and_resyncs() {
        let text = "<sub> a </sub> <rel> r </rel> <obj> b </obj> <sub> x </sub> <obj> y </obj> \
                    <sub> a </sub> <rel> r </rel> <obj> b </obj>";
        let (ts, rep) = parse_triplets(&toks(text), ParseMode::Lenient).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0], ts[1]);
        let kinds: Vec<_> = rep.issues.iter().map(|i| i.kind).collect();
        assert_eq!(
            kinds,
            vec![
                IssueKind::UnexpectedMarker,
                IssueKind::IncompleteTriplet,
                IssueKind::StrayToken,
                IssueKind::UnexpectedMarker
            ]
        );
    }

    #[test]
    fn triplet_input_concatenates() {
        let y = SerializedSeq::from_text(SeqKind::PromptBlocks, "<rel> is </rel>");
        let x = SerializedSeq::from_text(SeqKind::SentenceInput, "<sen> a b </sen>");
        let xt = build_triplet_input(&y, &x).unwrap();
        assert_eq!(xt.text(), "<rel> is </rel> <sen> a b </sen>");
        assert_eq!(xt.kind, SeqKind::TripletInput);
        let empty = SerializedSeq::new(SeqKind::PromptBlocks, vec![]);
        assert_eq!(build_triplet_input(&empty, &x).unwrap().tokens, x.tokens);
        assert_eq!(
            build_triplet_input(&x, &y),
            Err(GrammarError::KindMismatch { expected: SeqKind::PromptBlocks, found: SeqKind::SentenceInput })
        );
    }

    #[test]
    fn table1_prompt_precedes_sentence() {
        let s = Sentence::new("t1", "Shea was born on September 5, 1900 in San Francisco, California.").unwrap();
        let prompt = serialize_predicates(&PredicateSequence::of(&table1_triplets())).unwrap();
        let xt = build_triplet_input(&prompt, &wrap_sentence(&s).unwrap()).unwrap();
        // (3 + 2) + (3 + 2) + (2 + 2) word-level tokens.
        assert_eq!(prompt.len(), 14);
        assert_eq!(&xt.tokens[..prompt.len()], &prompt.tokens[..]);
        assert_eq!(xt.tokens[prompt.len()], SEN_OPEN);
        assert_eq!(xt.len(), prompt.len() + s.len() + 2);
    }

    #[test]
    fn sentence_parse_strips_markers() {
        let (w, rep) = parse_sentence(&toks("<sen> a b </sen>"), ParseMode::Strict).unwrap();
        assert_eq!(w, vec!["a", "b"]);
        assert!(rep.is_empty());
        let (w, rep) = parse_sentence(&toks("a <rel> b"), ParseMode::Lenient).unwrap();
        assert_eq!(w, vec!["a", "b"]);
        assert_eq!(rep.len(), 3);
    }
}
