//! Locating triplet elements inside sentence tokens. All comparisons are
//! case-folded.

use crate::tokenize::folded_tokens;

pub fn fold_all(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

/// Start of the first contiguous occurrence of `needle` in `hay`.
pub fn find_contiguous(hay: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Leftmost greedy embedding of `needle` as a gapped subsequence of `hay`.
pub fn find_subsequence(hay: &[String], needle: &[String]) -> Option<Vec<usize>> {
    if needle.is_empty() {
        return None;
    }
    let mut pos = Vec::with_capacity(needle.len());
    let mut j = 0;
    for (i, h) in hay.iter().enumerate() {
        if j < needle.len() && *h == needle[j] {
            pos.push(i);
            j += 1;
        }
    }
    (j == needle.len()).then_some(pos)
}

/// How an element sits in the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Contiguous(usize),
    /// Only recoverable as two or more separated spans; holds the span starts.
    Gapped(Vec<usize>),
    Absent,
}

impl Placement {
    pub fn first_offset(&self) -> Option<usize> {
        match self {
            Placement::Contiguous(i) => Some(*i),
            Placement::Gapped(starts) => starts.first().copied(),
            Placement::Absent => None,
        }
    }
}

pub fn place(sentence_folded: &[String], element: &str) -> Placement {
    let needle = folded_tokens(element);
    if let Some(i) = find_contiguous(sentence_folded, &needle) {
        return Placement::Contiguous(i);
    }
    match find_subsequence(sentence_folded, &needle) {
        Some(pos) => {
            let mut starts = vec![pos[0]];
            for w in pos.windows(2) {
                if w[1] != w[0] + 1 {
                    starts.push(w[1]);
                }
            }
            Placement::Gapped(starts)
        }
        None => Placement::Absent,
    }
}
