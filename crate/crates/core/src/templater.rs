//! Golden template construction and slot markup handling.
//!
//! A golden template is the reference summary with every sufficiently
//! well-matched fact value replaced by `[SLT] key [/SLT]`. Matching is fuzzy:
//! each fact value is compared against contiguous token windows of the summary
//! with [`sorted_indel_sim`], and the best window is replaced when its score
//! reaches the configured threshold.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::simtext::{sorted_indel_sim, token_spans, tokenize, SimScore};
use crate::types::{
    Config, FactSet, Segment, Slot, Template, ValidationError, SLOT_CLOSE, SLOT_OPEN,
};

/// Best window of the summary for one fact value. Offsets are byte offsets
/// into the summary and always fall on token boundaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanMatch {
    pub start: usize,
    pub end: usize,
    pub matched_text: String,
    pub score: SimScore,
    pub fact_key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TemplateBuildReport {
    /// Spans turned into slots, sorted by start offset.
    pub replaced: Vec<SpanMatch>,
    /// Facts whose best span scored below the threshold (or had no span).
    pub skipped_facts: Vec<String>,
    /// Facts that cleared the threshold but lost an overlap to a better match.
    pub overlap_dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("closing {SLOT_CLOSE} without an open slot at offset {0}")]
    UnexpectedClose(usize),
    #[error("nested {SLOT_OPEN} at offset {0}")]
    NestedOpen(usize),
    #[error("slot opened at offset {0} is never closed")]
    Unclosed(usize),
    #[error("empty slot key at offset {0}")]
    EmptyKey(usize),
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match *self {
            ParseError::UnexpectedClose(o)
            | ParseError::NestedOpen(o)
            | ParseError::Unclosed(o)
            | ParseError::EmptyKey(o) => o,
        }
    }
}

/// How [`parse_template_with`] treats malformed markup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Strict,
    /// Stray delimiters are dropped and the surrounding text kept as literal;
    /// each repair is reported as a warning.
    Recover,
}

/// `[SLT] key [/SLT]` with single-space padding.
pub fn make_slot_markup(key: &str) -> Result<String, ValidationError> {
    if key.contains(SLOT_OPEN) || key.contains(SLOT_CLOSE) {
        return Err(ValidationError::MarkupInjection(key.to_string()));
    }
    Ok(format!("{SLOT_OPEN} {key} {SLOT_CLOSE}"))
}

/// Searches token windows of `summary` whose length lies within `slack` of
/// the value's token count and returns the one most similar to `value`.
/// Ties go to the earlier start, then the shorter window.
pub fn best_matching_span(summary: &str, value: &str, slack: usize) -> Option<SpanMatch> {
    let spans = token_spans(summary);
    if spans.is_empty() {
        return None;
    }
    let value_len = tokenize(value).len().max(1);
    let min_len = value_len.saturating_sub(slack).max(1);
    let max_len = (value_len + slack).min(spans.len());

    let mut best: Option<(SimScore, usize, usize)> = None;
    for start in 0..spans.len() {
        for len in min_len..=max_len {
            let last = start + len - 1;
            if last >= spans.len() {
                break;
            }
            let text = &summary[spans[start].start..spans[last].end];
            let score = sorted_indel_sim(value, text);
            // strict improvement only, so the first (earliest, shortest) wins ties
            if best.is_none_or(|(s, _, _)| score > s) {
                best = Some((score, start, last));
            }
        }
    }
    best.map(|(score, first, last)| {
        let (start, end) = (spans[first].start, spans[last].end);
        SpanMatch {
            start,
            end,
            matched_text: summary[start..end].to_string(),
            score,
            fact_key: String::new(),
        }
    })
}

/// Replaces fact values found in `summary` with slots.
pub fn build_golden_template(
    summary: &str,
    facts: &FactSet,
    config: &Config,
) -> (Template, TemplateBuildReport) {
    let delta = config.delta();
    let mut report = TemplateBuildReport::default();
    let mut candidates = Vec::new();
    for fact in facts {
        match best_matching_span(summary, &fact.value, config.span_window_slack) {
            Some(mut m) if m.score >= delta => {
                m.fact_key = fact.key.clone();
                candidates.push((m, fact.value.chars().count()));
            }
            _ => report.skipped_facts.push(fact.key.clone()),
        }
    }

    candidates.sort_by(|(a, a_len), (b, b_len)| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(b_len.cmp(a_len))
            .then_with(|| a.fact_key.cmp(&b.fact_key))
    });
    for (m, _) in candidates {
        let overlaps = report
            .replaced
            .iter()
            .any(|r| m.start < r.end && r.start < m.end);
        if overlaps {
            report.overlap_dropped.push(m.fact_key);
        } else {
            report.replaced.push(m);
        }
    }
    report.replaced.sort_by_key(|m| m.start);

    let mut segments = Vec::with_capacity(report.replaced.len() * 2 + 1);
    let mut cursor = 0;
    for m in &report.replaced {
        segments.push(Segment::Literal(summary[cursor..m.start].to_string()));
        segments.push(Segment::Slot(
            Slot::new(m.fact_key.as_str()).expect("fact keys are valid slot keys"),
        ));
        cursor = m.end;
    }
    segments.push(Segment::Literal(summary[cursor..].to_string()));
    let template = match Template::new(segments) {
        Ok(t) => t,
        // a summary that itself contains delimiter text: fall back to markup
        // recovery so the result is still a valid template
        Err(_) => {
            let markup = render_spans(summary, &report.replaced);
            parse_template_with(&markup, ParseMode::Recover)
                .map(|(t, _)| t)
                .unwrap_or_default()
        }
    };
    (template, report)
}

fn render_spans(summary: &str, replaced: &[SpanMatch]) -> String {
    let mut out = String::new();
    let mut cursor = 0;
    for m in replaced {
        out.push_str(&summary[cursor..m.start]);
        out.push_str(&format!("{SLOT_OPEN} {} {SLOT_CLOSE}", m.fact_key));
        cursor = m.end;
    }
    out.push_str(&summary[cursor..]);
    out
}

/// Strict parse of slot markup.
pub fn parse_template(markup: &str) -> Result<Template, ParseError> {
    parse_template_with(markup, ParseMode::Strict).map(|(t, _)| t)
}

/// Parses slot markup, returning the template and any recovery warnings.
pub fn parse_template_with(
    markup: &str,
    mode: ParseMode,
) -> Result<(Template, Vec<String>), ParseError> {
    let mut segments = Vec::new();
    let mut warnings = Vec::new();
    let mut literal = String::new();
    let mut pos = 0;

    let fail = |err: ParseError, warnings: &mut Vec<String>| -> Result<(), ParseError> {
        match mode {
            ParseMode::Strict => Err(err),
            ParseMode::Recover => {
                warnings.push(format!("recovered malformed markup: {err}"));
                Ok(())
            }
        }
    };

    while pos < markup.len() {
        let rest = &markup[pos..];
        let next_open = rest.find(SLOT_OPEN);
        let next_close = rest.find(SLOT_CLOSE);
        match (next_open, next_close) {
            (None, None) => {
                literal.push_str(rest);
                break;
            }
            (_, Some(c)) if next_open.is_none_or(|o| c < o) => {
                literal.push_str(&rest[..c]);
                fail(ParseError::UnexpectedClose(pos + c), &mut warnings)?;
                pos += c + SLOT_CLOSE.len();
            }
            (Some(o), close) => {
                literal.push_str(&rest[..o]);
                let open_at = pos + o;
                let inner_start = open_at + SLOT_OPEN.len();
                let after = &markup[inner_start..];
                let inner_open = after.find(SLOT_OPEN);
                let inner_close = close.map(|c| c - o - SLOT_OPEN.len());
                match (inner_open, inner_close) {
                    (_, None) => {
                        fail(ParseError::Unclosed(open_at), &mut warnings)?;
                        pos = inner_start;
                    }
                    (Some(n), Some(c)) if n < c => {
                        fail(ParseError::NestedOpen(inner_start + n), &mut warnings)?;
                        pos = inner_start;
                    }
                    (_, Some(c)) => {
                        let key = after[..c].trim();
                        pos = inner_start + c + SLOT_CLOSE.len();
                        if key.is_empty() {
                            fail(ParseError::EmptyKey(open_at), &mut warnings)?;
                            continue;
                        }
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                        segments.push(Segment::Slot(
                            Slot::new(key).expect("key is trimmed and free of delimiters"),
                        ));
                    }
                }
            }
            (None, Some(_)) => unreachable!("handled by the close-first arm"),
        }
    }
    segments.push(Segment::Literal(literal));
    let template = Template::new(segments).expect("literals never contain delimiters");
    Ok((template, warnings))
}

const ATTACHING_PUNCT: [char; 4] = ['.', ',', ';', ':'];

/// Fills the template. A slot with an empty (or missing) fill is removed and
/// the whitespace around it repaired: the gap collapses to one space, or to
/// nothing before `.`, `,`, `;`, `:` and at either end of the text. Text not
/// adjacent to an empty slot is copied verbatim.
pub fn render(template: &Template, fills: &HashMap<String, String>) -> String {
    let mut out = String::new();
    let mut gap = false;
    for seg in template.segments() {
        let piece: &str = match seg {
            Segment::Literal(text) => text,
            Segment::Slot(slot) => fills.get(slot.key()).map(String::as_str).unwrap_or(""),
        };
        if piece.is_empty() {
            gap |= matches!(seg, Segment::Slot(_));
            continue;
        }
        if gap {
            let trimmed = piece.trim_start();
            if trimmed.is_empty() {
                continue;
            }
            let kept = out.trim_end().len();
            out.truncate(kept);
            if !out.is_empty() && !trimmed.starts_with(ATTACHING_PUNCT) {
                out.push(' ');
            }
            out.push_str(trimmed);
            gap = false;
        } else {
            out.push_str(piece);
        }
    }
    if gap {
        let kept = out.trim_end().len();
        out.truncate(kept);
    }
    out
}
