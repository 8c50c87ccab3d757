use std::cmp::Ordering;

use super::spans::{fold_all, place, Placement};
use crate::types::{ExtractionInstance, Triplet};

#[derive(Debug, Clone, PartialEq, Eq)]
struct SortKey {
    implicit: bool,
    pred: usize,
    subj: usize,
    obj: usize,
}

impl SortKey {
    fn of(sentence: &[String], t: &Triplet) -> Self {
        let off = |text: &str| place(sentence, text).first_offset().unwrap_or(usize::MAX);
        let p = place(sentence, &t.predicate);
        SortKey {
            implicit: p == Placement::Absent,
            pred: p.first_offset().unwrap_or(usize::MAX),
            subj: off(&t.subject),
            obj: off(&t.object),
        }
    }
}

fn compare(a: (&SortKey, &Triplet), b: (&SortKey, &Triplet)) -> Ordering {
    let (ka, ta) = a;
    let (kb, tb) = b;
    let primary = match (ka.implicit, kb.implicit) {
        (false, true) => Ordering::Less,
        (true, false) => Ordering::Greater,
        (false, false) => (ka.pred, ka.subj, ka.obj).cmp(&(kb.pred, kb.subj, kb.obj)),
        (true, true) => (ka.obj, ka.subj).cmp(&(kb.obj, kb.subj)),
    };
    // The field texts make the order total.
    primary.then_with(|| ta.cmp(tb))
}

/// Explicit triplets by where their predicate starts in the sentence (ties
/// by subject, then object position); implicit ones afterwards by object
/// position.
pub fn order_triplets(inst: &ExtractionInstance) -> ExtractionInstance {
    let sent = fold_all(&inst.sentence.tokens);
    let mut keyed: Vec<(SortKey, Triplet)> = inst.triplets.iter().map(|t| (SortKey::of(&sent, t), t.clone())).collect();
    keyed.sort_by(|a, b| compare((&a.0, &a.1), (&b.0, &b.1)));
    ExtractionInstance { sentence: inst.sentence.clone(), triplets: keyed.into_iter().map(|(_, t)| t).collect() }
}
