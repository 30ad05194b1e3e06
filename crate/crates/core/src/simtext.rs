//! String similarity: normalized sorted Indel similarity for fuzzy fact/key
//! matching, and bag-of-words Jaccard for record alignment.

use std::collections::BTreeSet;
use std::ops::Range;

/// Similarity value clamped to `[0, 1]`.
pub type SimScore = f64;

/// Lowercased whitespace tokens. Punctuation stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Byte ranges of the whitespace-delimited tokens of `text`.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

/// Minimum number of single-character insertions and deletions turning `a`
/// into `b`, i.e. `|a| + |b| - 2 * LCS(a, b)` over Unicode scalar values.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

/// Longest common subsequence length, two-row DP.
pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

fn sorted_joined(text: &str) -> String {
    let mut tokens = tokenize(text);
    tokens.sort_unstable();
    tokens.join(" ")
}

/// Token-sort Indel similarity: `1 - L(a', b') / (len(a') + len(b'))` where
/// `a'`, `b'` are the lowercased tokens sorted by code point and joined with
/// single spaces. Two empty inputs score 1.
pub fn sorted_indel_sim(a: &str, b: &str) -> SimScore {
    let a = sorted_joined(a);
    let b = sorted_joined(b);
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 1.0;
    }
    1.0 - indel_distance(&a, &b) as f64 / total as f64
}

/// `|A ∩ B| / |A ∪ B|` over the token sets. Two empty inputs score 1.
pub fn jaccard_bow(a: &str, b: &str) -> SimScore {
    let a: BTreeSet<String> = tokenize(a).into_iter().collect();
    let b: BTreeSet<String> = tokenize(b).into_iter().collect();
    jaccard_sets(&a, &b)
}

pub(crate) fn jaccard_sets<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> SimScore {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Peter  Wichers"), vec!["peter", "wichers"]);
        assert_eq!(tokenize("born in 1984."), vec!["born", "in", "1984."]);
    }

    #[test]
    fn token_spans_track_offsets() {
        let text = "  ab c\td ";
        let spans = token_spans(text);
        let toks: Vec<&str> = spans.iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(toks, vec!["ab", "c", "d"]);
        assert!(token_spans("   ").is_empty());
        assert_eq!(token_spans("é x"), vec![0..2, 3..4]);
    }

    #[test]
    fn indel_examples() {
        assert_eq!(indel_distance("abc", "abc"), 0);
        assert_eq!(indel_distance("abc", ""), 3);
        assert_eq!(indel_distance("ab", "b"), 1);
        // substitution costs two under indel
        assert_eq!(indel_distance("kitten", "sitten"), 2);
    }

    #[test]
    fn sorted_indel_examples() {
        assert_eq!(sorted_indel_sim("smith john", "john smith"), 1.0);
        assert!((sorted_indel_sim("ab", "b") - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(sorted_indel_sim("abc", ""), 0.0);
        assert_eq!(sorted_indel_sim("", ""), 1.0);
        assert_eq!(sorted_indel_sim("  ", ""), 1.0);
    }

    #[test]
    fn sorted_indel_is_case_insensitive() {
        assert_eq!(sorted_indel_sim("Peter Wichers", "wichers PETER"), 1.0);
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard_bow("x y", "x y"), 1.0);
        assert!((jaccard_bow("a b", "b c") - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(jaccard_bow("a", "b"), 0.0);
        assert_eq!(jaccard_bow("", ""), 1.0);
        // duplicates collapse into the set
        assert_eq!(jaccard_bow("a a b", "b a"), 1.0);
    }
}
