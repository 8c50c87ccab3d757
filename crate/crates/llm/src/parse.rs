//! Reads `(subject; predicate; object)` lines out of free-form model output.

use dualoie_core::Triplet;

/// Outermost parenthesised groups of a line, plus whether a group was left
/// open.
fn groups(line: &str) -> (Vec<&str>, bool) {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in line.char_indices() {
        match c {
            '(' => {
                if depth == 0 {
                    start = i + 1;
                }
                depth += 1;
            }
            ')' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    out.push(&line[start..i]);
                }
            }
            _ => {}
        }
    }
    (out, depth > 0)
}

fn clean(field: &str) -> &str {
    let f = field.trim();
    let quoted = |o: char, c: char| f.len() >= 2 && f.starts_with(o) && f.ends_with(c);
    if quoted('"', '"') || quoted('\'', '\'') || quoted('“', '”') {
        let open = f.chars().next().map_or(0, char::len_utf8);
        let close = f.chars().last().map_or(0, char::len_utf8);
        f[open..f.len() - close].trim()
    } else {
        f
    }
}

/// Triplets in order of appearance and a warning per rejected line. Groups
/// without a `;` count as prose. Never fails.
pub fn parse_llm_response(text: &str) -> (Vec<Triplet>, Vec<String>) {
    let mut triplets = Vec::new();
    let mut warnings = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let (found, unclosed) = groups(line);
        if unclosed && found.is_empty() && line.contains(';') {
            warnings.push(format!("line {}: unclosed tuple {line:?}", n + 1));
            continue;
        }
        for g in found.into_iter().filter(|g| g.contains(';')) {
            let fields: Vec<&str> = g.split(';').map(clean).collect();
            if fields.len() != 3 {
                warnings.push(format!("line {}: expected 3 fields, found {} in {g:?}", n + 1, fields.len()));
                continue;
            }
            match Triplet::new(fields[0], fields[1], fields[2]) {
                Ok(t) => triplets.push(t),
                Err(e) => warnings.push(format!("line {}: {e} in {g:?}", n + 1)),
            }
        }
    }
    if triplets.is_empty() && warnings.is_empty() {
        warnings.push("no triplets found".to_string());
    }
    (triplets, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn numbered_line() {
        let (t, w) = parse_llm_response("1. (Shea; was born on; September 5, 1900)");
        assert_eq!(t, vec![Triplet::new("Shea", "was born on", "September 5, 1900").unwrap()]);
        assert!(w.is_empty());
    }

    #[test]
    fn prose_only() {
        let (t, w) = parse_llm_response("I could not find any facts in this sentence.");
        assert!(t.is_empty());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn wrong_arity_is_skipped() {
        let (t, w) = parse_llm_response("(a; b)\n(x; y; z)");
        assert_eq!(t, vec![Triplet::new("x", "y", "z").unwrap()]);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("expected 3 fields"));
    }

    #[test]
    fn prose_around_tuples_and_nested_parens() {
        let text = "Sure! Here they are (one per line):\n- (Shea; was born in; San Francisco (California))\n* (\"San Francisco\"; is in; California), (a; b; c)\nHope this helps.";
        let (t, w) = parse_llm_response(text);
        assert_eq!(t.len(), 3);
        assert_eq!(t[0], Triplet::new("Shea", "was born in", "San Francisco (California)").unwrap());
        assert_eq!(t[1].subject, "San Francisco");
        assert!(w.is_empty(), "{w:?}");
    }

    #[test]
    fn empty_fields_rejected() {
        let (t, w) = parse_llm_response("( ; is; x)\n(a; ; c)");
        assert!(t.is_empty());
        assert_eq!(w.len(), 2);
    }

    proptest! {
        #[test]
        fn never_panics(text in "\\PC{0,200}") {
            let _ = parse_llm_response(&text);
        }

        #[test]
        fn tuple_soup(text in "[()a-c; \n\"]{0,80}") {
            let (t, _) = parse_llm_response(&text);
            for x in t {
                prop_assert!(!x.subject.is_empty() && !x.predicate.is_empty() && !x.object.is_empty());
            }
        }
    }
}
