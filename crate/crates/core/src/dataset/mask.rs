use std::collections::BTreeSet;

use super::spans::{find_contiguous, fold_all, place, Placement};
use super::DatasetError;
use crate::tokenize::folded_tokens;
use crate::types::{ExtractionInstance, Sentence};

/// Removes the selected triplets' predicate tokens from the sentence so
/// those triplets become implicit. Triplets are left untouched.
pub fn mask_attributes(inst: &ExtractionInstance, selected: &[usize]) -> Result<ExtractionInstance, DatasetError> {
    if selected.is_empty() {
        return Ok(inst.clone());
    }
    let id = inst.id().to_string();
    let sent = fold_all(&inst.sentence.tokens);
    let mut removed = BTreeSet::new();
    for &index in selected {
        let t = inst.triplets.get(index).ok_or_else(|| DatasetError::NoSuchTriplet { id: id.clone(), index })?;
        let needle = folded_tokens(&t.predicate);
        match find_contiguous(&sent, &needle) {
            Some(start) => removed.extend(start..start + needle.len()),
            None if place(&sent, &t.predicate) == Placement::Absent => {
                return Err(DatasetError::NotExplicit { id, index })
            }
            None => return Err(DatasetError::NotContiguous { id, index }),
        }
    }
    let kept: Vec<String> =
        inst.sentence.tokens.iter().enumerate().filter(|(i, _)| !removed.contains(i)).map(|(_, t)| t.clone()).collect();
    let sentence = Sentence::from_tokens(inst.sentence.id.clone(), &kept)?;
    Ok(ExtractionInstance { sentence, triplets: inst.triplets.clone() })
}

/// Indices of triplets whose predicate occurs contiguously, i.e. the ones
/// [`mask_attributes`] accepts.
pub fn maskable_indices(inst: &ExtractionInstance) -> Vec<usize> {
    let sent = fold_all(&inst.sentence.tokens);
    inst.triplets
        .iter()
        .enumerate()
        .filter(|(_, t)| find_contiguous(&sent, &folded_tokens(&t.predicate)).is_some())
        .map(|(i, _)| i)
        .collect()
}
