//! Token-level tuple scoring, strict matching, BLEU, kappa and grouped
//! corpus reports.

mod bleu;
mod grouped;
mod kappa;
pub mod matching;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, BLEU_VARIANT};
pub use grouped::{grouped_report, score_corpus, CorpusScores, GroupBy, ScoreAccumulator, SentencePrediction};
pub use kappa::{cohens_kappa, pearson};

use crate::tokenize::folded_tokens;
use crate::types::{PredicateSequence, Slot, Triplet};
use matching::max_weight_matching;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// How tuple tokens are compared: slot against slot, or as one bag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Slotting {
    #[default]
    PerSlot,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ScoreReport {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        ScoreReport { precision, recall, f1 }
    }
}

/// Sums behind a precision/recall pair; merging is plain addition, so
/// per-sentence counts aggregate into micro-averaged corpus scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub n_gold: usize,
    pub n_pred: usize,
    /// Matched pair precision, one-to-one.
    pub precision_sum: f64,
    /// Matched pair recall, one-to-one.
    pub recall_sum: f64,
    /// Best pair recall per gold, any prediction.
    pub recall_sum_multi: f64,
}

impl MatchCounts {
    pub fn merge(&mut self, other: &MatchCounts) {
        self.n_gold += other.n_gold;
        self.n_pred += other.n_pred;
        self.precision_sum += other.precision_sum;
        self.recall_sum += other.recall_sum;
        self.recall_sum_multi += other.recall_sum_multi;
    }

    fn ratio(sum: f64, n: usize, other_n: usize) -> f64 {
        match (n, other_n) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => sum / n as f64,
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.precision_sum, self.n_pred, self.n_gold)
    }

    pub fn one_to_one(&self) -> ScoreReport {
        ScoreReport::from_pr(self.precision(), Self::ratio(self.recall_sum, self.n_gold, self.n_pred))
    }

    pub fn multi_to_one(&self) -> ScoreReport {
        ScoreReport::from_pr(self.precision(), Self::ratio(self.recall_sum_multi, self.n_gold, self.n_pred))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Gold x prediction table of pair scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchTable {
    pub entries: Vec<Vec<PairScore>>,
}

type Tuple = Vec<Vec<String>>;

fn triplet_tuple(t: &Triplet, slotting: Slotting) -> Tuple {
    let slots: Vec<Vec<String>> = Slot::ALL.iter().map(|&s| folded_tokens(t.get(s))).collect();
    match slotting {
        Slotting::PerSlot => slots,
        Slotting::Pooled => vec![slots.concat()],
    }
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *counts.entry(t).or_default() += 1;
    }
    let mut hit = 0;
    for t in b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                hit += 1;
            }
        }
    }
    hit
}

fn tuple_scores(gold: &Tuple, pred: &Tuple) -> PairScore {
    let matched: usize = gold.iter().zip(pred).map(|(g, p)| multiset_overlap(g, p)).sum();
    let n_gold: usize = gold.iter().map(Vec::len).sum();
    let n_pred: usize = pred.iter().map(Vec::len).sum();
    let precision = if n_pred == 0 { 0.0 } else { matched as f64 / n_pred as f64 };
    let recall = if n_gold == 0 { 0.0 } else { matched as f64 / n_gold as f64 };
    let f1 = if matched == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    PairScore { precision, recall, f1 }
}

/// Token precision and recall of one prediction against one gold triplet,
/// per slot and case-folded.
pub fn pair_scores(gold: &Triplet, pred: &Triplet) -> (f64, f64) {
    let s = pair_scores_with(gold, pred, Slotting::PerSlot);
    (s.precision, s.recall)
}

pub fn pair_scores_with(gold: &Triplet, pred: &Triplet, slotting: Slotting) -> PairScore {
    tuple_scores(&triplet_tuple(gold, slotting), &triplet_tuple(pred, slotting))
}

fn tuple_table(golds: &[Tuple], preds: &[Tuple]) -> MatchTable {
    MatchTable { entries: golds.iter().map(|g| preds.iter().map(|p| tuple_scores(g, p)).collect()).collect() }
}

pub fn match_table(golds: &[Triplet], preds: &[Triplet], slotting: Slotting) -> MatchTable {
    let g: Vec<Tuple> = golds.iter().map(|t| triplet_tuple(t, slotting)).collect();
    let p: Vec<Tuple> = preds.iter().map(|t| triplet_tuple(t, slotting)).collect();
    tuple_table(&g, &p)
}

/// Counts for a table given an assignment of golds to predictions.
pub fn counts_for_assignment(table: &MatchTable, n_pred: usize, assignment: &[Option<usize>]) -> MatchCounts {
    let mut c = MatchCounts { n_gold: table.entries.len(), n_pred, ..Default::default() };
    for (g, a) in assignment.iter().enumerate() {
        if let Some(p) = *a {
            c.precision_sum += table.entries[g][p].precision;
            c.recall_sum += table.entries[g][p].recall;
        }
    }
    for row in &table.entries {
        c.recall_sum_multi += row.iter().map(|s| s.recall).fold(0.0, f64::max);
    }
    c
}

fn table_counts(table: &MatchTable, n_pred: usize) -> MatchCounts {
    let weights: Vec<Vec<f64>> = table.entries.iter().map(|r| r.iter().map(|s| s.f1).collect()).collect();
    let assignment = max_weight_matching(&weights);
    counts_for_assignment(table, n_pred, &assignment)
}

pub fn triplet_counts(golds: &[Triplet], preds: &[Triplet], slotting: Slotting) -> MatchCounts {
    table_counts(&match_table(golds, preds, slotting), preds.len())
}

pub fn f1_one_to_one(golds: &[Triplet], preds: &[Triplet]) -> ScoreReport {
    triplet_counts(golds, preds, Slotting::PerSlot).one_to_one()
}

pub fn f1_multi_to_one(golds: &[Triplet], preds: &[Triplet]) -> ScoreReport {
    triplet_counts(golds, preds, Slotting::PerSlot).multi_to_one()
}

/// Predicates scored as single-slot tuples.
pub fn predicate_counts(gold: &PredicateSequence, pred: &PredicateSequence) -> MatchCounts {
    let g: Vec<Tuple> = gold.predicates.iter().map(|p| vec![folded_tokens(p)]).collect();
    let p: Vec<Tuple> = pred.predicates.iter().map(|p| vec![folded_tokens(p)]).collect();
    table_counts(&tuple_table(&g, &p), p.len())
}

/// One-to-one and multi-to-one Pred-F1.
pub fn predicate_f1(gold: &PredicateSequence, pred: &PredicateSequence) -> (ScoreReport, ScoreReport) {
    let c = predicate_counts(gold, pred);
    (c.one_to_one(), c.multi_to_one())
}

pub const STRICT_THRESHOLD: f64 = 0.7;

/// 1 for equal strings, otherwise the Dice coefficient of their folded
/// token multisets.
pub fn token_dice(a: &str, b: &str) -> f64 {
    let (ta, tb) = (folded_tokens(a), folded_tokens(b));
    if ta == tb {
        return 1.0;
    }
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    2.0 * multiset_overlap(&ta, &tb) as f64 / (ta.len() + tb.len()) as f64
}

pub fn strict_counts(golds: &[Triplet], preds: &[Triplet], sim: &dyn Fn(&str, &str) -> f64) -> MatchCounts {
    let weights: Vec<Vec<f64>> = golds
        .iter()
        .map(|g| {
            preds
                .iter()
                .map(|p| {
                    let hit = folded_tokens(&g.subject) == folded_tokens(&p.subject)
                        && folded_tokens(&g.object) == folded_tokens(&p.object)
                        && sim(&p.predicate, &g.predicate) >= STRICT_THRESHOLD;
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let assignment = max_weight_matching(&weights);
    let matched = assignment.iter().flatten().count() as f64;
    let any = weights.iter().filter(|r| r.iter().any(|&w| w > 0.0)).count() as f64;
    MatchCounts {
        n_gold: golds.len(),
        n_pred: preds.len(),
        precision_sum: matched,
        recall_sum: matched,
        recall_sum_multi: any,
    }
}

/// Subject and object must match exactly (case-folded), predicates need
/// `sim >= 0.7`; predictions and golds pair off one-to-one.
pub fn strict_match_score(golds: &[Triplet], preds: &[Triplet], sim: &dyn Fn(&str, &str) -> f64) -> ScoreReport {
    strict_counts(golds, preds, sim).one_to_one()
}
