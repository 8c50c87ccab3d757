//! Word segmentation shared by corpora, the grammar and the scorers.
//!
//! Whitespace separates tokens; ASCII punctuation becomes its own token
//! unless it sits inside a word (`1,000`, `U.S`, `re-use`, `don't`);
//! every CJK character is a token on its own. Special grammar tokens such
//! as `<rel>` survive as single tokens so serialized sequences can be
//! re-read from text.

use crate::grammar::SpecialVocab;

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x3000..=0x303F   // CJK punctuation
        | 0xFF00..=0xFFEF) // full-width forms
}

fn is_split_punct(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Punctuation that stays glued when both neighbours are alphanumeric.
fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '.' | ',' | '_' | '/')
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if SpecialVocab::is_special(chunk) {
            out.push(chunk.to_string());
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if is_cjk(c) {
                flush(&mut cur, &mut out);
                out.push(c.to_string());
            } else if is_split_punct(c) {
                let glued = is_joiner(c)
                    && i > 0
                    && i + 1 < chars.len()
                    && chars[i - 1].is_alphanumeric()
                    && !is_cjk(chars[i - 1])
                    && chars[i + 1].is_alphanumeric()
                    && !is_cjk(chars[i + 1]);
                if glued {
                    cur.push(c);
                } else {
                    flush(&mut cur, &mut out);
                    out.push(c.to_string());
                }
            } else {
                cur.push(c);
            }
        }
        flush(&mut cur, &mut out);
    }
    out
}

fn flush(cur: &mut String, out: &mut Vec<String>) {
    if !cur.is_empty() {
        out.push(std::mem::take(cur));
    }
}

/// Canonical joined form: tokens separated by single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(t.as_ref());
    }
    s
}

/// Re-tokenizes and re-joins, so that `canonical(canonical(x)) == canonical(x)`.
pub fn canonical(text: &str) -> String {
    detokenize(&tokenize(text))
}

/// Human-facing rendering: no space between CJK characters, none before
/// closing punctuation.
pub fn display<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut s = String::new();
    let mut prev: Option<&str> = None;
    for t in tokens {
        let t = t.as_ref();
        if let Some(p) = prev {
            let cjk_pair = p.chars().all(is_cjk) && t.chars().all(is_cjk);
            let closing = matches!(t, "," | "." | ";" | ":" | "!" | "?" | ")");
            if !cjk_pair && !closing {
                s.push(' ');
            }
        }
        s.push_str(t);
        prev = Some(t);
    }
    s
}

/// Whitespace policy check: the tokens cover exactly the non-whitespace
/// characters of `text`, in order.
pub fn covers_text<S: AsRef<str>>(tokens: &[S], text: &str) -> bool {
    let joined: String = tokens.iter().map(|t| t.as_ref()).collect();
    let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    joined == stripped
}

/// Case-folded tokens, the unit every scorer compares.
pub fn folded_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.to_lowercase()).collect()
}

pub fn is_punctuation_token(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_ascii_punctuation() || (is_cjk(c) && !c.is_alphanumeric()))
}
