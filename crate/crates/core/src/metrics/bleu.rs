use std::collections::HashMap;

pub const BLEU_VARIANT: &str = "BLEU-4, uniform weights, add-one smoothing for orders with no clipped match";

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Sentence-level BLEU-4 of `candidate` against `references` (token lists).
///
/// An order with no clipped match scores `1 / (count + 1)`; no unigram
/// match at all gives 0. The brevity penalty uses the reference length
/// closest to the candidate's (shorter on ties).
pub fn bleu<S: AsRef<str>, R: AsRef<[S]>>(candidate: &[S], references: &[R]) -> f64 {
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngrams(candidate, n);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in references {
            for (g, c) in ngrams(r.as_ref(), n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let total: usize = cand.values().sum();
        let clipped: usize = cand.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
        let p = if clipped == 0 {
            if n == 1 {
                return 0.0;
            }
            1.0 / (total as f64 + 1.0)
        } else {
            clipped as f64 / total as f64
        };
        log_sum += p.ln() / 4.0;
    }
    let c = candidate.len();
    let r = references.iter().map(|r| r.as_ref().len()).min_by_key(|&len| (len.abs_diff(c), len)).unwrap_or(0);
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_sum.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_is_one() {
        let c = toks("Shea was born on September 5 , 1900 in San Francisco .");
        assert!((bleu(&c, std::slice::from_ref(&c)) - 1.0).abs() < 1e-12);
        let short = toks("a b");
        assert!((bleu(&short, std::slice::from_ref(&short)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_unigram_overlap_is_zero() {
        assert_eq!(bleu(&toks("x y z"), &[toks("a b c")]), 0.0);
        assert_eq!(bleu::<String, Vec<String>>(&[], &[toks("a")]), 0.0);
    }

    #[test]
    fn two_token_toy_case() {
        // p1 = 1/2, p2 = (0 + 1) / (1 + 1), p3 = p4 = 1 (no n-grams), BP = 1.
        let want = (0.5f64 * 0.5 * 1.0 * 1.0).powf(0.25);
        assert!((bleu(&toks("a b"), &[toks("a c")]) - want).abs() < 1e-9);
    }

    #[test]
    fn brevity_penalty() {
        // All n-grams of the candidate match; only the penalty applies.
        let got = bleu(&toks("a b c d"), &[toks("a b c d e f")]);
        assert!((got - (1.0f64 - 6.0 / 4.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn closest_reference_length() {
        let got = bleu(&toks("a b c d"), &[toks("a b c d e f"), toks("a b c d x")]);
        assert!((got - (1.0f64 - 5.0 / 4.0).exp()).abs() < 1e-12);
    }
}
