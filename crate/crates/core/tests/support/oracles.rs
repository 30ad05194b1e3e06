//! Independent reference implementations, written for clarity rather than
//! speed, plus a generator for synthetic records with planted facts.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

/// Insert/delete edit distance by the textbook recurrence, without going
/// through LCS.
pub fn indel_dp(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = if a[i - 1] == b[j - 1] {
                d[i - 1][j - 1]
            } else {
                1 + d[i - 1][j].min(d[i][j - 1])
            };
        }
    }
    d[a.len()][b.len()]
}

/// Every string over `alphabet` of length `0..=max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s| {
                alphabet.iter().map(move |c| {
                    let mut t = s.clone();
                    t.push(*c);
                    t
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Similarity straight from its definition: sort lowercase tokens, join, then
/// `1 - indel / (len_a + len_b)`.
pub fn sim_oracle(a: &str, b: &str) -> f64 {
    let norm = |s: &str| {
        let mut t: Vec<String> = s.split_whitespace().map(str::to_lowercase).collect();
        t.sort();
        t.join(" ")
    };
    let (a, b) = (norm(a), norm(b));
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 1.0;
    }
    1.0 - indel_dp(&a, &b) as f64 / total as f64
}

/// Set-arithmetic Jaccard over lowercase whitespace tokens.
pub fn jaccard_oracle(a: &str, b: &str) -> f64 {
    let set =
        |s: &str| -> BTreeSet<String> { s.split_whitespace().map(str::to_lowercase).collect() };
    let (a, b) = (set(a), set(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Longest common subsequence by enumerating every subsequence of `a`.
pub fn lcs_brute<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 16, "brute force only");
    let is_subseq = |mask: u32| {
        let mut j = 0;
        for (i, x) in a.iter().enumerate() {
            if mask & (1 << i) != 0 {
                while j < b.len() && b[j] != *x {
                    j += 1;
                }
                if j == b.len() {
                    return false;
                }
                j += 1;
            }
        }
        true
    };
    (0u32..1 << a.len())
        .filter(|&m| is_subseq(m))
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

/// Clipped n-gram overlap counted with hash maps.
pub fn ngram_overlap(cand: &[String], refr: &[String], n: usize) -> (usize, usize, usize) {
    let grams = |t: &[String]| -> HashMap<Vec<String>, usize> {
        let mut m = HashMap::new();
        if t.len() >= n {
            for w in t.windows(n) {
                *m.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
        m
    };
    let (c, r) = (grams(cand), grams(refr));
    let overlap = c
        .iter()
        .map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (
        overlap,
        c.values().sum::<usize>(),
        r.values().sum::<usize>(),
    )
}

/// Best window found by scoring every candidate window directly and keeping
/// the lexicographically smallest (-score, start, len).
pub fn best_span_oracle(summary: &str, value: &str, slack: usize) -> Option<(String, f64)> {
    let tokens: Vec<&str> = summary.split_whitespace().collect();
    if tokens.is_empty() {
        return None;
    }
    let n = value.split_whitespace().count();
    let lo = n.saturating_sub(slack).max(1);
    let hi = n + slack;
    let mut best: Option<(f64, usize, usize)> = None;
    for start in 0..tokens.len() {
        for len in lo..=hi {
            if start + len > tokens.len() {
                break;
            }
            let s = sim_oracle(value, &tokens[start..start + len].join(" "));
            let better = match best {
                None => true,
                Some((bs, bst, bl)) => {
                    s > bs || (s == bs && (start < bst || (start == bst && len < bl)))
                }
            };
            if better {
                best = Some((s, start, len));
            }
        }
    }
    best.map(|(s, start, len)| (tokens[start..start + len].join(" "), s))
}

// ---------------------------------------------------------------------------
// Synthetic corpus

const FIRST: &[&str] = &[
    "Anna", "Bruno", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas",
];
const LAST: &[&str] = &[
    "Albrecht", "Brandt", "Castillo", "Duarte", "Eklund", "Fontaine", "Gallo", "Hartmann",
];
const PLACES: &[&str] = &[
    "Lisbon",
    "Tallinn",
    "Porto Alegre",
    "Kraków",
    "Valparaíso",
    "Trondheim",
    "San Sebastián",
];
const OCCUPATIONS: &[&str] = &[
    "violinist",
    "architect",
    "goalkeeper",
    "cartographer",
    "botanist",
    "sculptor",
];
const MONTHS: &[&str] = &["January", "April", "June", "September", "November"];

/// One synthetic record: a summary with every fact value planted verbatim.
#[derive(Debug, Clone)]
pub struct Planted {
    pub summary: String,
    pub facts: Vec<(String, String)>,
}

pub fn synthetic_record<R: Rng>(rng: &mut R) -> Planted {
    let name = format!(
        "{} {}",
        FIRST.choose(rng).unwrap(),
        LAST.choose(rng).unwrap()
    );
    let date = format!(
        "{} {} {}",
        rng.gen_range(1..=28),
        MONTHS.choose(rng).unwrap(),
        rng.gen_range(1900..2000)
    );
    let place = PLACES.choose(rng).unwrap().to_string();
    let occupation = OCCUPATIONS.choose(rng).unwrap().to_string();
    let summary = match rng.gen_range(0..3) {
        0 => format!("{name} ( born {date} in {place} ) is a {occupation} ."),
        1 => format!("{name} was a {occupation} , born in {place} on {date} ."),
        _ => format!("Born on {date} in {place} , {name} works as a {occupation} ."),
    };
    Planted {
        summary,
        facts: vec![
            ("name".into(), name),
            ("birth_date".into(), date),
            ("birth_place".into(), place),
            ("occupation".into(), occupation),
        ],
    }
}

/// Inserts one character at the end of the value, so no window of a
/// summary that holds the original reproduces it exactly.
pub fn perturb(value: &str) -> String {
    format!("{value}q")
}
