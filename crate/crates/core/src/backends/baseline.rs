//! Deterministic extractive stand-in for the template and slot models.
//!
//! Documents are split into sentences at tokens ending in `.`, `!` or `?`.
//!
//! Slot requests pick the sentence whose token set has the highest Jaccard
//! overlap with the entity name plus the words of the slot key (ties go to the
//! earliest sentence; zero overlap everywhere yields an empty answer). Within
//! that sentence the key decides the rule:
//!
//! * keys ending in `date`: the longest run of at most five date-like tokens
//!   (digits, month names, commas) that starts and ends with a digit-bearing
//!   token;
//! * name keys: the window of at most five tokens most similar to the entity
//!   name, kept only if it clears the threshold;
//! * anything else: the key is mapped to the closest entry of a small cue
//!   lexicon, and the answer is the run of capitalised tokens nearest to the
//!   first cue word, searching forward before backward.
//!
//! Template requests take the first sentence of the document overlapping the
//! entity name most and replace the entity name span with a `name` slot.

use std::collections::BTreeSet;
use std::time::Instant;

use super::{Backend, BackendError, BackendRequest, BackendResponse, Task};
use crate::simtext::{jaccard_sets, sorted_indel_sim, token_spans, tokenize};
use crate::templater::{best_matching_span, make_slot_markup};
use crate::types::{DEFAULT_DELTA, DEFAULT_SLACK};

const MAX_WINDOW: usize = 5;
const BACKEND_ID: &str = "extractive-baseline";

const MONTHS: [&str; 24] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
    "jan",
    "feb",
    "mar",
    "apr",
    "jun",
    "jul",
    "aug",
    "sep",
    "sept",
    "oct",
    "nov",
    "dec",
];

enum Cue {
    Name,
    Words(&'static [&'static str]),
}

const CUE_LEXICON: &[(&str, Cue)] = &[
    ("birth_place", Cue::Words(&["born"])),
    ("clubs", Cue::Words(&["for", "plays", "played"])),
    ("currentclub", Cue::Words(&["for", "plays", "club"])),
    ("death_place", Cue::Words(&["died"])),
    ("fullname", Cue::Name),
    ("genre", Cue::Words(&["genre", "genres", "style"])),
    ("label", Cue::Words(&["label", "signed"])),
    ("name", Cue::Name),
    ("nationality", Cue::Words(&["is", "was"])),
    ("origin", Cue::Words(&["from"])),
    ("position", Cue::Words(&["as", "plays"])),
    ("spouse", Cue::Words(&["married"])),
];

const NON_NAMES: [&str; 12] = [
    "a", "an", "the", "he", "she", "it", "they", "his", "her", "in", "on", "at",
];

/// Heuristic backend; a pure function of the request.
#[derive(Debug, Clone)]
pub struct ExtractiveBaseline {
    delta: f64,
    slack: usize,
}

impl Default for ExtractiveBaseline {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            slack: DEFAULT_SLACK,
        }
    }
}

struct Sentence<'a> {
    tokens: Vec<&'a str>,
}

impl<'a> Sentence<'a> {
    fn text(&self) -> String {
        self.tokens.join(" ")
    }

    fn token_set(&self) -> BTreeSet<String> {
        self.tokens.iter().map(|t| t.to_lowercase()).collect()
    }
}

fn sentences(doc: &str) -> Vec<Sentence<'_>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for span in token_spans(doc) {
        let tok = &doc[span];
        cur.push(tok);
        if tok.ends_with(['.', '!', '?']) {
            out.push(Sentence {
                tokens: std::mem::take(&mut cur),
            });
        }
    }
    if !cur.is_empty() {
        out.push(Sentence { tokens: cur });
    }
    out
}

fn trim_punct(tok: &str) -> &str {
    tok.trim_end_matches(['.', ',', ';', ':', '!', '?', ')'])
        .trim_start_matches('(')
}

fn has_digit(tok: &str) -> bool {
    tok.chars().any(|c| c.is_ascii_digit())
}

fn is_date_like(tok: &str) -> bool {
    let bare = trim_punct(tok).to_lowercase();
    has_digit(tok) || tok == "," || MONTHS.contains(&bare.as_str())
}

fn finish(tokens: &[&str]) -> String {
    let joined = tokens.join(" ");
    joined
        .trim_end_matches(['.', ',', ';', ':', '!', '?'])
        .trim_end()
        .to_string()
}

impl ExtractiveBaseline {
    pub fn new(delta: f64, slack: usize) -> Self {
        Self { delta, slack }
    }

    pub fn slot(&self, request: &BackendRequest) -> BackendResponse {
        let started = Instant::now();
        let output = request
            .slot_key
            .as_deref()
            .map(|key| self.predict_slot(&request.entity_name, key, &request.documents))
            .unwrap_or_default();
        respond(output, started)
    }

    pub fn template(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let started = Instant::now();
        let name_tokens: BTreeSet<String> = tokenize(&request.entity_name).into_iter().collect();
        let mut best: Option<(f64, &str)> = None;
        for doc in request.documents.iter().filter(|d| !d.trim().is_empty()) {
            let doc_tokens: BTreeSet<String> = tokenize(doc).into_iter().collect();
            let score = jaccard_sets(&doc_tokens, &name_tokens);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, doc));
            }
        }
        let Some((_, doc)) = best else {
            return Err(BackendError::NoEvidence(
                "template request without any non-empty document".into(),
            ));
        };
        let first = sentences(doc)
            .into_iter()
            .next()
            .map(|s| s.text())
            .unwrap_or_default();
        let output = match best_matching_span(&first, &request.entity_name, self.slack) {
            Some(m) if m.score >= self.delta => format!(
                "{}{}{}",
                &first[..m.start],
                make_slot_markup("name").expect("static key"),
                &first[m.end..]
            ),
            _ => first,
        };
        Ok(respond(output, started))
    }

    fn predict_slot(&self, entity: &str, key: &str, documents: &[String]) -> String {
        let mut query: BTreeSet<String> = tokenize(entity).into_iter().collect();
        query.extend(
            key.split('_')
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty()),
        );

        let mut best: Option<(f64, Sentence<'_>)> = None;
        for doc in documents {
            for sentence in sentences(doc) {
                let score = jaccard_sets(&sentence.token_set(), &query);
                if score > 0.0 && best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, sentence));
                }
            }
        }
        let Some((_, sentence)) = best else {
            return String::new();
        };

        let norm_key = key.trim().to_lowercase();
        if norm_key.ends_with("date") {
            return date_window(&sentence.tokens);
        }
        match self.nearest_cue(&norm_key) {
            Some(Cue::Name) => self.name_window(&sentence, entity),
            Some(Cue::Words(words)) => proper_noun_near_cue(&sentence.tokens, words, entity),
            None => {
                let words: Vec<&str> = norm_key.split('_').filter(|w| !w.is_empty()).collect();
                proper_noun_near_cue(&sentence.tokens, &words, entity)
            }
        }
    }

    fn nearest_cue(&self, key: &str) -> Option<&'static Cue> {
        let mut best: Option<(f64, &'static Cue)> = None;
        // lexicon is sorted, so strict improvement breaks ties lexicographically
        for (entry, cue) in CUE_LEXICON {
            let score = sorted_indel_sim(key, entry);
            if score >= self.delta && best.is_none_or(|(s, _)| score > s) {
                best = Some((score, cue));
            }
        }
        best.map(|(_, c)| c)
    }

    fn name_window(&self, sentence: &Sentence<'_>, entity: &str) -> String {
        let text = sentence.text();
        let slack = self.slack.min(MAX_WINDOW);
        match best_matching_span(&text, entity, slack) {
            Some(m) if m.score >= self.delta && tokenize(&m.matched_text).len() <= MAX_WINDOW => {
                let toks: Vec<&str> = m.matched_text.split(' ').collect();
                finish(&toks)
            }
            _ => String::new(),
        }
    }
}

fn respond(output: String, started: Instant) -> BackendResponse {
    BackendResponse {
        output,
        latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        backend_id: BACKEND_ID.to_string(),
    }
}

fn date_window(tokens: &[&str]) -> String {
    let mut best: Option<(usize, usize)> = None;
    for start in 0..tokens.len() {
        if !has_digit(tokens[start]) {
            continue;
        }
        let mut end = start;
        let mut last_digit = start;
        while end < tokens.len() && end - start < MAX_WINDOW && is_date_like(tokens[end]) {
            if has_digit(tokens[end]) {
                last_digit = end;
            }
            end += 1;
        }
        let len = last_digit - start + 1;
        if best.is_none_or(|(_, l)| len > l) {
            best = Some((start, len));
        }
    }
    best.map(|(s, l)| finish(&tokens[s..s + l]))
        .unwrap_or_default()
}

fn proper_noun_near_cue(tokens: &[&str], cues: &[&str], entity: &str) -> String {
    let entity_tokens: BTreeSet<String> = tokenize(entity)
        .iter()
        .map(|t| trim_punct(t).to_string())
        .collect();
    let is_name = |tok: &str| {
        let bare = trim_punct(tok);
        let lower = bare.to_lowercase();
        bare.chars().next().is_some_and(char::is_uppercase)
            && !MONTHS.contains(&lower.as_str())
            && !NON_NAMES.contains(&lower.as_str())
            && !entity_tokens.contains(&lower)
    };
    let Some(cue) = tokens
        .iter()
        .position(|t| cues.contains(&trim_punct(t).to_lowercase().as_str()))
    else {
        return String::new();
    };

    if let Some(start) = (cue + 1..tokens.len()).find(|&i| is_name(tokens[i])) {
        let mut end = start + 1;
        // punctuation attached to a token closes the run
        while end < tokens.len()
            && end - start < MAX_WINDOW
            && is_name(tokens[end])
            && trim_punct(tokens[end - 1]) == tokens[end - 1]
        {
            end += 1;
        }
        return finish(&tokens[start..end]);
    }
    if let Some(last) = (0..cue).rev().find(|&i| is_name(tokens[i])) {
        let mut start = last;
        while start > 0
            && last - start + 1 < MAX_WINDOW
            && is_name(tokens[start - 1])
            && trim_punct(tokens[start - 1]) == tokens[start - 1]
        {
            start -= 1;
        }
        return finish(&tokens[start..=last]);
    }
    String::new()
}

impl Backend for ExtractiveBaseline {
    fn id(&self) -> &str {
        BACKEND_ID
    }

    fn generate(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        match request.task {
            Task::Slot => Ok(self.slot(request)),
            Task::Template => self.template(request),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(entity: &str, key: &str, docs: &[&str]) -> String {
        let docs: Vec<String> = docs.iter().map(|d| d.to_string()).collect();
        ExtractiveBaseline::default()
            .generate(&BackendRequest::slot(entity, key, &docs))
            .unwrap()
            .output
    }

    fn template(entity: &str, docs: &[&str]) -> Result<String, BackendError> {
        let docs: Vec<String> = docs.iter().map(|d| d.to_string()).collect();
        ExtractiveBaseline::default()
            .generate(&BackendRequest::template(entity, &docs))
            .map(|r| r.output)
    }

    #[test]
    fn date_rule() {
        assert_eq!(
            slot("peter", "birth_date", &["peter was born on 5 june 1979 ."]),
            "5 june 1979"
        );
        // two separate years: the longer date window wins
        assert_eq!(
            slot("x", "death_date", &["x died in 2001 , on 3 March 2004 ."]),
            "3 March 2004"
        );
    }

    #[test]
    fn no_evidence_yields_empty() {
        assert_eq!(slot("peter wichers", "name", &[]), "");
        assert_eq!(slot("zz", "genre", &["nothing relevant here ."]), "");
    }

    #[test]
    fn name_rule() {
        assert_eq!(
            slot(
                "peter wichers",
                "name",
                &["peter wichers is a swedish guitarist ."]
            ),
            "peter wichers"
        );
    }

    #[test]
    fn cue_rule_searches_forward_first() {
        assert_eq!(
            slot(
                "peter wichers",
                "birth_place",
                &["Peter Wichers was born in Stockholm, Sweden ."]
            ),
            "Stockholm"
        );
        assert_eq!(
            slot(
                "marc muniesa",
                "currentclub",
                &["Marc Muniesa plays for Stoke City ."]
            ),
            "Stoke City"
        );
    }

    #[test]
    fn template_replaces_entity_name() {
        assert_eq!(
            template(
                "peter wichers",
                &[
                    "unrelated text . more .",
                    "peter wichers is a guitarist . he plays ."
                ]
            )
            .unwrap(),
            "[SLT] name [/SLT] is a guitarist ."
        );
        // name absent: first sentence verbatim
        assert_eq!(
            template("zz top", &["a band formed in texas . b ."]).unwrap(),
            "a band formed in texas ."
        );
        assert!(matches!(
            template("x", &[]),
            Err(BackendError::NoEvidence(_))
        ));
    }

    #[test]
    fn baseline_is_pure() {
        let docs = ["peter was born on 5 june 1979 in Uppsala ."];
        let a = slot("peter", "birth_place", &docs);
        let b = slot("peter", "birth_place", &docs);
        assert_eq!(a, b);
        assert_eq!(a, "Uppsala");
    }
}
