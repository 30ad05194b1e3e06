//! Domain vocabulary shared by the templater, slot filler, dataset builder and
//! evaluation code.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opening slot delimiter.
pub const SLOT_OPEN: &str = "[SLT]";
/// Closing slot delimiter.
pub const SLOT_CLOSE: &str = "[/SLT]";

/// Default similarity threshold for span replacement and key correction.
pub const DEFAULT_DELTA: f64 = 0.8;
/// Default token slack around the value length when searching spans.
pub const DEFAULT_SLACK: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("entity name is empty")]
    EmptyEntity,
    #[error("fact key is empty")]
    EmptyKey,
    #[error("fact `{0}` has an empty value")]
    EmptyValue(String),
    #[error("duplicate fact key `{0}`")]
    DuplicateKey(String),
    #[error("key `{0}` contains a slot delimiter")]
    MarkupInjection(String),
    #[error("literal text contains a slot delimiter: {0:?}")]
    LiteralWithDelimiter(String),
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("unknown strategy `{0}` (expected discard, predict or all_predict)")]
    UnknownStrategy(String),
    #[error("unknown split `{0}` (expected train, valid or test)")]
    UnknownSplit(String),
}

/// The entity a summary describes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entity {
    name: String,
}

impl Entity {
    pub fn new(name: impl Into<String>) -> Result<Self, ValidationError> {
        let name = name.into().trim().to_string();
        if name.is_empty() {
            return Err(ValidationError::EmptyEntity);
        }
        Ok(Self { name })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Canonical form used when comparing fact keys.
pub fn normalize_key(key: &str) -> String {
    key.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactPair {
    pub key: String,
    pub value: String,
}

impl FactPair {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
        }
    }
}

/// Ordered facts with keys unique under [`normalize_key`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactSet {
    pairs: Vec<FactPair>,
}

impl FactSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Strict construction: a repeated key is an error.
    pub fn new(pairs: impl IntoIterator<Item = FactPair>) -> Result<Self, ValidationError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for pair in pairs {
            let pair = Self::check(pair)?;
            if !seen.insert(normalize_key(&pair.key)) {
                return Err(ValidationError::DuplicateKey(pair.key));
            }
            out.push(pair);
        }
        Ok(Self { pairs: out })
    }

    /// Ingestion of raw tables: repeated keys keep their first occurrence and
    /// each dropped duplicate produces a warning. Empty keys or values still
    /// fail.
    pub fn from_raw(
        pairs: impl IntoIterator<Item = FactPair>,
    ) -> Result<(Self, Vec<String>), ValidationError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut warnings = Vec::new();
        for pair in pairs {
            let pair = Self::check(pair)?;
            if seen.insert(normalize_key(&pair.key)) {
                out.push(pair);
            } else {
                warnings.push(format!("duplicate fact key `{}` ignored", pair.key));
            }
        }
        Ok((Self { pairs: out }, warnings))
    }

    fn check(pair: FactPair) -> Result<FactPair, ValidationError> {
        let key = pair.key.trim().to_string();
        let value = pair.value.trim().to_string();
        if key.is_empty() {
            return Err(ValidationError::EmptyKey);
        }
        if value.is_empty() {
            return Err(ValidationError::EmptyValue(key));
        }
        Ok(FactPair { key, value })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let key = normalize_key(key);
        self.pairs
            .iter()
            .find(|p| normalize_key(&p.key) == key)
            .map(|p| p.value.as_str())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FactPair> {
        self.pairs.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.key.as_str())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn as_slice(&self) -> &[FactPair] {
        &self.pairs
    }
}

impl<'a> IntoIterator for &'a FactSet {
    type Item = &'a FactPair;
    type IntoIter = std::slice::Iter<'a, FactPair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

/// A named placeholder inside a template.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Slot {
    key: String,
}

impl Slot {
    pub fn new(key: impl Into<String>) -> Result<Self, ValidationError> {
        let key = key.into().trim().to_string();
        if key.contains(SLOT_OPEN) || key.contains(SLOT_CLOSE) {
            return Err(ValidationError::MarkupInjection(key));
        }
        if key.is_empty() {
            return Err(ValidationError::EmptyKey);
        }
        Ok(Self { key })
    }

    pub fn key(&self) -> &str {
        &self.key
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Slot(Slot),
}

/// Literal text interleaved with slots.
///
/// Adjacent literals are merged and empty literals dropped on construction, so
/// two templates that render to the same markup compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn new(segments: impl IntoIterator<Item = Segment>) -> Result<Self, ValidationError> {
        let mut out: Vec<Segment> = Vec::new();
        for seg in segments {
            match seg {
                Segment::Literal(text) => {
                    if text.contains(SLOT_OPEN) || text.contains(SLOT_CLOSE) {
                        return Err(ValidationError::LiteralWithDelimiter(text));
                    }
                    if text.is_empty() {
                        continue;
                    }
                    if let Some(Segment::Literal(prev)) = out.last_mut() {
                        prev.push_str(&text);
                    } else {
                        out.push(Segment::Literal(text));
                    }
                }
                slot @ Segment::Slot(_) => out.push(slot),
            }
        }
        Ok(Self { segments: out })
    }

    /// A template made of a single literal (or nothing, for empty text).
    pub fn literal(text: impl Into<String>) -> Result<Self, ValidationError> {
        Self::new([Segment::Literal(text.into())])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(slot) => Some(slot),
            Segment::Literal(_) => None,
        })
    }

    /// Distinct slot keys in first-appearance order.
    pub fn slot_keys(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.slots()
            .map(Slot::key)
            .filter(|k| seen.insert(*k))
            .collect()
    }

    pub fn slot_count(&self) -> usize {
        self.slots().count()
    }

    /// Slot markup form, e.g. `[SLT] name [/SLT] is a painter`.
    pub fn to_markup(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(slot) => {
                    out.push_str(SLOT_OPEN);
                    out.push(' ');
                    out.push_str(slot.key());
                    out.push(' ');
                    out.push_str(SLOT_CLOSE);
                }
            }
        }
        out
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_markup())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(ValidationError::UnknownSplit(other.to_string())),
        }
    }
}

/// One corpus example: source documents, reference summary, facts and an
/// optional golden template.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub id: String,
    pub entity: Entity,
    pub documents: Vec<String>,
    pub summary: String,
    pub facts: FactSet,
    pub template: Option<Template>,
    pub split: Split,
    /// Template slot keys with no counterpart in `facts`.
    pub unmatched_slots: Vec<String>,
}

impl CorpusRecord {
    /// Slot keys of the template that are neither in `facts` nor annotated as
    /// unmatched. Empty for a consistent record.
    pub fn dangling_slots(&self) -> Vec<String> {
        let Some(template) = &self.template else {
            return Vec::new();
        };
        template
            .slot_keys()
            .into_iter()
            .filter(|k| {
                self.facts.get(k).is_none()
                    && !self
                        .unmatched_slots
                        .iter()
                        .any(|u| normalize_key(u) == normalize_key(k))
            })
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Only corrected slots are filled; everything else becomes empty.
    Discard,
    /// Corrected value when available, predicted value otherwise.
    Predict,
    /// Predicted values only; external knowledge is not consulted.
    AllPredict,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Discard => "discard",
            Strategy::Predict => "predict",
            Strategy::AllPredict => "all_predict",
        }
    }
}

impl FromStr for Strategy {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "discard" => Ok(Strategy::Discard),
            "predict" => Ok(Strategy::Predict),
            "all_predict" | "allpredict" => Ok(Strategy::AllPredict),
            _ => Err(ValidationError::UnknownStrategy(s.to_string())),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Config {
    delta: f64,
    pub span_window_slack: usize,
    pub strategy: Strategy,
}

impl Config {
    pub fn new(
        delta: f64,
        span_window_slack: usize,
        strategy: Strategy,
    ) -> Result<Self, ValidationError> {
        check_threshold(delta)?;
        Ok(Self {
            delta,
            span_window_slack,
            strategy,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(self, delta: f64) -> Result<Self, ValidationError> {
        Self::new(delta, self.span_window_slack, self.strategy)
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            span_window_slack: DEFAULT_SLACK,
            strategy: Strategy::Discard,
        }
    }
}

pub(crate) fn check_threshold(value: f64) -> Result<(), ValidationError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(ValidationError::BadThreshold(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_must_be_non_blank() {
        assert_eq!(Entity::new("   "), Err(ValidationError::EmptyEntity));
        assert_eq!(Entity::new(" peter ").unwrap().name(), "peter");
    }

    #[test]
    fn duplicate_keys_rejected_case_insensitively() {
        let err = FactSet::new([FactPair::new("Name", "a"), FactPair::new(" name ", "b")]);
        assert_eq!(err, Err(ValidationError::DuplicateKey("name".into())));
    }

    #[test]
    fn raw_ingestion_keeps_first_duplicate() {
        let (facts, warnings) =
            FactSet::from_raw([FactPair::new("name", "a"), FactPair::new("NAME", "b")]).unwrap();
        assert_eq!(facts.len(), 1);
        assert_eq!(facts.get("name"), Some("a"));
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn repeated_values_across_keys_are_allowed() {
        let facts = FactSet::new([
            FactPair::new("name", "x y"),
            FactPair::new("fullname", "x y"),
        ])
        .unwrap();
        assert_eq!(facts.len(), 2);
    }

    #[test]
    fn empty_value_rejected() {
        assert_eq!(
            FactSet::new([FactPair::new("genre", "  ")]),
            Err(ValidationError::EmptyValue("genre".into()))
        );
    }

    #[test]
    fn underscores_preserved_in_keys() {
        let facts = FactSet::new([FactPair::new("Birth_Date", "1990")]).unwrap();
        assert_eq!(facts.get("birth_date"), Some("1990"));
        assert_eq!(facts.keys().next(), Some("Birth_Date"));
    }

    #[test]
    fn slot_rejects_delimiters() {
        assert!(matches!(
            Slot::new("a[SLT]b"),
            Err(ValidationError::MarkupInjection(_))
        ));
        assert!(matches!(
            Slot::new("x[/SLT]"),
            Err(ValidationError::MarkupInjection(_))
        ));
    }

    #[test]
    fn template_merges_adjacent_literals() {
        let t = Template::new([
            Segment::Literal("a ".into()),
            Segment::Literal(String::new()),
            Segment::Literal("b".into()),
        ])
        .unwrap();
        assert_eq!(t.segments(), &[Segment::Literal("a b".into())]);
    }

    #[test]
    fn template_rejects_delimiter_in_literal() {
        assert!(Template::literal("x [SLT] y").is_err());
    }

    #[test]
    fn slot_keys_are_distinct_in_order() {
        let t = Template::new([
            Segment::Slot(Slot::new("b").unwrap()),
            Segment::Literal(" ".into()),
            Segment::Slot(Slot::new("a").unwrap()),
            Segment::Slot(Slot::new("b").unwrap()),
        ])
        .unwrap();
        assert_eq!(t.slot_keys(), vec!["b", "a"]);
        assert_eq!(t.slot_count(), 3);
    }

    #[test]
    fn config_threshold_bounds() {
        assert!(Config::new(0.0, 2, Strategy::Discard).is_err());
        assert!(Config::new(1.0, 2, Strategy::Discard).is_ok());
        assert!(Config::new(1.01, 2, Strategy::Discard).is_err());
        assert_eq!(Config::default().delta(), 0.8);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("all-predict".parse::<Strategy>(), Ok(Strategy::AllPredict));
        assert_eq!("Predict".parse::<Strategy>(), Ok(Strategy::Predict));
        assert!("guess".parse::<Strategy>().is_err());
    }

    #[test]
    fn dangling_slots_respect_annotation() {
        let template = Template::new([
            Segment::Slot(Slot::new("name").unwrap()),
            Segment::Slot(Slot::new("genre").unwrap()),
        ])
        .unwrap();
        let mut rec = CorpusRecord {
            id: "r".into(),
            entity: Entity::new("e").unwrap(),
            documents: vec![],
            summary: String::new(),
            facts: FactSet::new([FactPair::new("name", "e")]).unwrap(),
            template: Some(template),
            split: Split::Train,
            unmatched_slots: vec![],
        };
        assert_eq!(rec.dangling_slots(), vec!["genre".to_string()]);
        rec.unmatched_slots.push("Genre".into());
        assert!(rec.dangling_slots().is_empty());
    }
}
