use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::spans::{fold_all, place, Placement};
use crate::tokenize::{folded_tokens, is_punctuation_token};
use crate::types::{ExtractionInstance, Slot, Triplet};

/// Complicated-triplet categories of one triplet within its set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryFlags {
    pub overlapping: bool,
    pub discontinuous: bool,
    pub nested: bool,
    pub implicit: bool,
}

impl CategoryFlags {
    pub const NAMES: [&'static str; 4] = ["overlapping", "discontinuous", "nested", "implicit"];

    pub fn get(&self, name: &str) -> Option<bool> {
        match name {
            "overlapping" => Some(self.overlapping),
            "discontinuous" => Some(self.discontinuous),
            "nested" => Some(self.nested),
            "implicit" => Some(self.implicit),
            _ => None,
        }
    }

    pub fn any(&self) -> bool {
        self.overlapping || self.discontinuous || self.nested || self.implicit
    }
}

fn key(text: &str) -> Vec<String> {
    folded_tokens(text)
}

/// Per-triplet flags:
///
/// * overlapping: some slot holds exactly the same text as the same slot of
///   another triplet;
/// * discontinuous: an element is only found as two or more separated spans;
/// * nested: an element of one explicit triplet contains, or shares a
///   non-punctuation word with, a different element of another explicit
///   triplet;
/// * implicit: the predicate is not even a gapped subsequence of the
///   sentence.
///
/// Implicit triplets take no part in nesting: their predicate is not a span
/// of the sentence.
pub fn classify_triplet_categories(inst: &ExtractionInstance) -> Vec<CategoryFlags> {
    let sent = fold_all(&inst.sentence.tokens);
    let ts = &inst.triplets;
    let mut flags = vec![CategoryFlags::default(); ts.len()];

    for (i, t) in ts.iter().enumerate() {
        let pred = place(&sent, &t.predicate);
        flags[i].implicit = pred == Placement::Absent;
        flags[i].discontinuous = Slot::ALL.iter().any(|&s| matches!(place(&sent, t.get(s)), Placement::Gapped(_)));
    }

    let keys: Vec<[Vec<String>; 3]> = ts.iter().map(|t| [key(&t.subject), key(&t.predicate), key(&t.object)]).collect();

    for i in 0..ts.len() {
        for j in 0..ts.len() {
            if i == j {
                continue;
            }
            if (0..3).any(|s| keys[i][s] == keys[j][s]) {
                flags[i].overlapping = true;
            }
            if !flags[i].implicit && !flags[j].implicit && nested_pair(&keys[i], &keys[j]) {
                flags[i].nested = true;
            }
        }
    }
    flags
}

fn nested_pair(a: &[Vec<String>; 3], b: &[Vec<String>; 3]) -> bool {
    for x in a {
        for y in b {
            if x == y {
                continue;
            }
            if contains(x, y) || contains(y, x) || shares_word(x, y) {
                return true;
            }
        }
    }
    false
}

fn contains(outer: &[String], inner: &[String]) -> bool {
    !inner.is_empty() && inner.len() <= outer.len() && outer.windows(inner.len()).any(|w| w == inner)
}

fn shares_word(a: &[String], b: &[String]) -> bool {
    let set: HashSet<&str> = a.iter().map(String::as_str).filter(|t| !is_punctuation_token(t)).collect();
    b.iter().any(|t| !is_punctuation_token(t) && set.contains(t.as_str()))
}

/// Triplets carrying `flag`, convenience for slicing reports.
pub fn triplets_with<'a>(inst: &'a ExtractionInstance, flag: &str) -> Vec<&'a Triplet> {
    let flags = classify_triplet_categories(inst);
    inst.triplets.iter().zip(flags).filter(|(_, f)| f.get(flag).unwrap_or(false)).map(|(t, _)| t).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Sentence;

    pub(crate) fn table1() -> ExtractionInstance {
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

    #[test]
    fn table1_flags() {
        let f = classify_triplet_categories(&table1());
        assert_eq!(f[0], CategoryFlags { overlapping: true, nested: true, ..Default::default() });
        assert_eq!(f[1], CategoryFlags { overlapping: true, nested: true, discontinuous: true, implicit: false });
        assert_eq!(f[2], CategoryFlags { implicit: true, ..Default::default() });
    }

    #[test]
    fn lone_triplet_has_no_set_flags() {
        let s = Sentence::new("x", "Alice founded Acme .").unwrap();
        let inst = ExtractionInstance::new(s, vec![Triplet::new("Alice", "founded", "Acme").unwrap()]);
        assert_eq!(classify_triplet_categories(&inst), vec![CategoryFlags::default()]);
    }

    #[test]
    fn shared_word_without_shared_subject_is_nested_only() {
        let s = Sentence::new("x", "Alice lives in Paris while Bruno lives near Rome .").unwrap();
        let inst = ExtractionInstance::new(
            s,
            vec![
                Triplet::new("Alice", "lives in", "Paris").unwrap(),
                Triplet::new("Bruno", "lives near", "Rome").unwrap(),
            ],
        );
        for f in classify_triplet_categories(&inst) {
            assert_eq!(f, CategoryFlags { nested: true, ..Default::default() });
        }
    }

    #[test]
    fn helper_slices_implicit() {
        let inst = table1();
        let imp = triplets_with(&inst, "implicit");
        assert_eq!(imp.len(), 1);
        assert_eq!(imp[0].predicate, "is in");
    }
}
