use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{predicate_counts, strict_counts, token_dice, triplet_counts, MatchCounts, ScoreReport, Slotting};
use crate::dataset::{classify_triplet_categories, CategoryFlags};
use crate::types::{ExtractionInstance, PredicateSequence, Triplet};

/// What a system produced for one sentence. Without step-one predicates,
/// Pred-F1 falls back to the predicates of the predicted triplets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub triplets: Vec<Triplet>,
    pub predicates: Option<PredicateSequence>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreAccumulator {
    pub sentences: usize,
    pub triplets: MatchCounts,
    pub strict: MatchCounts,
    pub predicates: MatchCounts,
}

impl ScoreAccumulator {
    pub fn add(
        &mut self,
        golds: &[Triplet],
        preds: &[Triplet],
        pred_predicates: &PredicateSequence,
        slotting: Slotting,
    ) {
        self.sentences += 1;
        self.triplets.merge(&triplet_counts(golds, preds, slotting));
        self.strict.merge(&strict_counts(golds, preds, &token_dice));
        self.predicates.merge(&predicate_counts(&PredicateSequence::of(golds), pred_predicates));
    }

    pub fn merge(&mut self, other: &ScoreAccumulator) {
        self.sentences += other.sentences;
        self.triplets.merge(&other.triplets);
        self.strict.merge(&other.strict);
        self.predicates.merge(&other.predicates);
    }

    pub fn finish(&self) -> CorpusScores {
        CorpusScores {
            sentences: self.sentences,
            gold_triplets: self.triplets.n_gold,
            predicted_triplets: self.triplets.n_pred,
            f1_one_to_one: self.triplets.one_to_one(),
            f1: self.triplets.multi_to_one(),
            strict: self.strict.one_to_one(),
            pred_f1_one_to_one: self.predicates.one_to_one(),
            pred_f1: self.predicates.multi_to_one(),
        }
    }
}

/// Micro-averaged corpus scores. `f1` uses multi-to-one recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub sentences: usize,
    pub gold_triplets: usize,
    pub predicted_triplets: usize,
    pub f1_one_to_one: ScoreReport,
    pub f1: ScoreReport,
    pub strict: ScoreReport,
    pub pred_f1_one_to_one: ScoreReport,
    pub pred_f1: ScoreReport,
}

fn prediction_for<'a>(preds: &'a BTreeMap<String, SentencePrediction>, id: &str) -> (&'a [Triplet], PredicateSequence) {
    match preds.get(id) {
        Some(p) => (&p.triplets, p.predicates.clone().unwrap_or_else(|| PredicateSequence::of(&p.triplets))),
        None => (&[], PredicateSequence::default()),
    }
}

/// Scores every gold sentence; sentences without a prediction count as
/// empty output.
pub fn score_corpus(
    golds: &[ExtractionInstance],
    preds: &BTreeMap<String, SentencePrediction>,
    slotting: Slotting,
) -> CorpusScores {
    let mut acc = ScoreAccumulator::default();
    for g in golds {
        let (p, pp) = prediction_for(preds, g.id());
        acc.add(&g.triplets, p, &pp, slotting);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    /// Gold triplet count: 0, 1, 2, 3, >=4.
    M,
    /// One slice per category flag.
    Category,
    Implicit,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m" => Ok(GroupBy::M),
            "category" => Ok(GroupBy::Category),
            "implicit" => Ok(GroupBy::Implicit),
            other => Err(format!("unknown grouping {other:?}")),
        }
    }
}

pub fn m_bucket(m: usize) -> String {
    if m >= 4 {
        ">=4".to_string()
    } else {
        m.to_string()
    }
}

fn flagged(inst: &ExtractionInstance, name: &str) -> Vec<Triplet> {
    let flags: Vec<CategoryFlags> = classify_triplet_categories(inst);
    inst.triplets.iter().zip(flags).filter(|(_, f)| f.get(name) == Some(true)).map(|(t, _)| t.clone()).collect()
}

/// Per-group scores. Category slices keep, per sentence, the gold triplets
/// carrying the flag and the predicted triplets that carry it when
/// classified against the same sentence; sentences where both slices are
/// empty are left out.
pub fn grouped_report(
    golds: &[ExtractionInstance],
    preds: &BTreeMap<String, SentencePrediction>,
    by: GroupBy,
    slotting: Slotting,
) -> BTreeMap<String, CorpusScores> {
    let mut groups: BTreeMap<String, ScoreAccumulator> = BTreeMap::new();
    let names: &[&str] = match by {
        GroupBy::M => &[],
        GroupBy::Category => &CategoryFlags::NAMES,
        GroupBy::Implicit => &["implicit"],
    };
    for g in golds {
        let (p, pp) = prediction_for(preds, g.id());
        if by == GroupBy::M {
            groups.entry(m_bucket(g.triplets.len())).or_default().add(&g.triplets, p, &pp, slotting);
            continue;
        }
        let pred_inst = ExtractionInstance::new(g.sentence.clone(), p.to_vec());
        for name in names {
            let gs = flagged(g, name);
            let ps = flagged(&pred_inst, name);
            if gs.is_empty() && ps.is_empty() {
                continue;
            }
            let sliced = PredicateSequence::of(&ps);
            groups.entry(name.to_string()).or_default().add(&gs, &ps, &sliced, slotting);
        }
    }
    groups.into_iter().map(|(k, v)| (k, v.finish())).collect()
}
