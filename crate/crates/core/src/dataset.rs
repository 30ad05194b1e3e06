//! Corpus construction: align a summarization corpus with a fact-table corpus
//! by abstract similarity, join them into [`CorpusRecord`]s, split, serialize
//! fact tables for ablation inputs, and count corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simtext::{jaccard_sets, tokenize, SimScore};
use crate::templater::parse_template;
use crate::types::{check_threshold, CorpusRecord, Entity, FactPair, FactSet, Split};

/// Default alignment threshold; a pair must score strictly above it.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", .path.display())]
    Json {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("record `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("matches reference unknown ids: {}", .0.join(", "))]
    DanglingIds(Vec<String>),
    #[error("ids occur more than once: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("corpus has no examples")]
    EmptyCorpus,
    #[error("bad split ratios: {0}")]
    BadRatios(String),
    #[error("match threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("malformed serialized facts at offset {offset}: {reason}")]
    Serialized { offset: usize, reason: String },
}

// ---------------------------------------------------------------------------
// JSONL schema

/// One corpus line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub id: String,
    pub entity_name: String,
    pub documents: Vec<String>,
    pub summary: String,
    pub facts: Vec<FactPair>,
    pub template: Option<String>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmatched_slots: Vec<String>,
}

impl From<&CorpusRecord> for RecordJson {
    fn from(r: &CorpusRecord) -> Self {
        Self {
            id: r.id.clone(),
            entity_name: r.entity.name().to_string(),
            documents: r.documents.clone(),
            summary: r.summary.clone(),
            facts: r.facts.as_slice().to_vec(),
            template: r.template.as_ref().map(|t| t.to_markup()),
            split: r.split,
            unmatched_slots: r.unmatched_slots.clone(),
        }
    }
}

impl TryFrom<RecordJson> for CorpusRecord {
    type Error = DatasetError;

    fn try_from(j: RecordJson) -> Result<Self, Self::Error> {
        let invalid = |reason: String| DatasetError::Invalid {
            id: j.id.clone(),
            reason,
        };
        let entity = Entity::new(j.entity_name.as_str()).map_err(|e| invalid(e.to_string()))?;
        let facts = FactSet::new(j.facts.iter().cloned()).map_err(|e| invalid(e.to_string()))?;
        let template = j
            .template
            .as_deref()
            .map(parse_template)
            .transpose()
            .map_err(|e| invalid(e.to_string()))?;
        let record = CorpusRecord {
            id: j.id.clone(),
            entity,
            documents: j.documents.clone(),
            summary: j.summary.clone(),
            facts,
            template,
            split: j.split,
            unmatched_slots: j.unmatched_slots.clone(),
        };
        let dangling = record.dangling_slots();
        if !dangling.is_empty() {
            return Err(invalid(format!(
                "template slots without facts: {}",
                dangling.join(", ")
            )));
        }
        Ok(record)
    }
}

/// Summarization-side input line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub id: String,
    pub entity_name: String,
    pub documents: Vec<String>,
    pub summary: String,
}

/// Fact-table-side input line; `abstract` is the text aligned against
/// summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactEntry {
    pub id: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub facts: Vec<FactPair>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| DatasetError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>, DatasetError> {
    read_jsonl::<RecordJson>(path)?
        .into_iter()
        .map(CorpusRecord::try_from)
        .collect()
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<(), DatasetError> {
    let lines: Vec<RecordJson> = records.iter().map(RecordJson::from).collect();
    write_jsonl(path, &lines)
}

// ---------------------------------------------------------------------------
// Alignment

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchCandidate {
    pub left_id: String,
    pub right_id: String,
    pub score: SimScore,
}

/// Pairs left and right entries whose abstracts have bag-of-words Jaccard
/// similarity strictly above `threshold`. Assignment is one-to-one, greedy by
/// descending score (ties by input position). Output follows left order.
pub fn match_entries(
    left: &[(&str, &str)],
    right: &[(&str, &str)],
    threshold: f64,
) -> Result<Vec<MatchCandidate>, DatasetError> {
    check_threshold(threshold).map_err(|_| DatasetError::BadThreshold(threshold))?;
    let right_sets: Vec<BTreeSet<String>> = right
        .iter()
        .map(|(_, text)| tokenize(text).into_iter().collect())
        .collect();
    let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, set) in right_sets.iter().enumerate() {
        for tok in set {
            index.entry(tok.as_str()).or_default().push(j);
        }
    }

    let mut pairs: Vec<(SimScore, usize, usize)> = left
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, (_, text))| {
            let set: BTreeSet<String> = tokenize(text).into_iter().collect();
            let mut seen = HashSet::new();
            let candidates: Vec<usize> = set
                .iter()
                .filter_map(|t| index.get(t.as_str()))
                .flatten()
                .copied()
                .filter(|j| seen.insert(*j))
                .collect();
            candidates
                .into_iter()
                .map(|j| (jaccard_sets(&set, &right_sets[j]), i, j))
                .filter(|(s, _, _)| *s > threshold)
                .collect::<Vec<_>>()
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut left_taken = vec![false; left.len()];
    let mut right_taken = vec![false; right.len()];
    let mut chosen = Vec::new();
    for (score, i, j) in pairs {
        if !left_taken[i] && !right_taken[j] {
            left_taken[i] = true;
            right_taken[j] = true;
            chosen.push((i, j, score));
        }
    }
    chosen.sort_by_key(|&(i, _, _)| i);
    Ok(chosen
        .into_iter()
        .map(|(i, j, score)| MatchCandidate {
            left_id: left[i].0.to_string(),
            right_id: right[j].0.to_string(),
            score,
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JoinOutput {
    pub records: Vec<CorpusRecord>,
    /// `(left id, reason)` for joins rejected by record validation.
    pub dropped: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

/// One record per match: documents and summary from the left entry, facts
/// from the right. Every record starts in the train split.
pub fn join_corpora(
    summaries: &[SummaryEntry],
    fact_tables: &[FactEntry],
    matches: &[MatchCandidate],
) -> Result<JoinOutput, DatasetError> {
    let mut seen = HashSet::new();
    let mut duplicates: Vec<String> = summaries
        .iter()
        .map(|s| ("left", s.id.as_str()))
        .chain(fact_tables.iter().map(|f| ("right", f.id.as_str())))
        .filter(|key| !seen.insert(*key))
        .map(|(_, id)| id.to_string())
        .collect();
    if !duplicates.is_empty() {
        duplicates.sort();
        duplicates.dedup();
        return Err(DatasetError::DuplicateIds(duplicates));
    }

    let left: HashMap<&str, &SummaryEntry> = summaries.iter().map(|s| (s.id.as_str(), s)).collect();
    let right: HashMap<&str, &FactEntry> = fact_tables.iter().map(|f| (f.id.as_str(), f)).collect();

    let mut dangling: Vec<String> = matches
        .iter()
        .flat_map(|m| {
            let l = (!left.contains_key(m.left_id.as_str())).then(|| m.left_id.clone());
            let r = (!right.contains_key(m.right_id.as_str())).then(|| m.right_id.clone());
            l.into_iter().chain(r)
        })
        .collect();
    if !dangling.is_empty() {
        dangling.sort();
        dangling.dedup();
        return Err(DatasetError::DanglingIds(dangling));
    }

    let mut out = JoinOutput::default();
    for m in matches {
        let summ = left[m.left_id.as_str()];
        let table = right[m.right_id.as_str()];
        let built = Entity::new(summ.entity_name.as_str()).and_then(|entity| {
            FactSet::from_raw(table.facts.iter().cloned()).map(|fw| (entity, fw))
        });
        match built {
            Ok((entity, (facts, warnings))) => {
                out.warnings
                    .extend(warnings.into_iter().map(|w| format!("{}: {w}", summ.id)));
                out.records.push(CorpusRecord {
                    id: summ.id.clone(),
                    entity,
                    documents: summ.documents.clone(),
                    summary: summ.summary.clone(),
                    facts,
                    template: None,
                    split: Split::Train,
                    unmatched_slots: Vec::new(),
                });
            }
            Err(e) => {
                log::warn!("dropping {}: {e}", summ.id);
                out.dropped.push((summ.id.clone(), e.to_string()));
            }
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Fact serialization

const KEY_VALUE_SEP: char = '|';
const PAIR_SEP: char = '#';

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, '\\' | KEY_VALUE_SEP | PAIR_SEP) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Keys joined with ` | `.
pub fn serialize_keys(facts: &FactSet) -> String {
    facts.keys().map(escape).collect::<Vec<_>>().join(" | ")
}

/// `key | value` pairs joined with ` # `. Literal `|`, `#` and `\` inside
/// keys or values are backslash-escaped.
pub fn serialize_kv(facts: &FactSet) -> String {
    facts
        .iter()
        .map(|p| format!("{} | {}", escape(&p.key), escape(&p.value)))
        .collect::<Vec<_>>()
        .join(" # ")
}

/// Inverse of [`serialize_kv`].
pub fn parse_kv(text: &str) -> Result<FactSet, DatasetError> {
    if text.trim().is_empty() {
        return Ok(FactSet::empty());
    }
    let bad = |offset, reason: &str| DatasetError::Serialized {
        offset,
        reason: reason.to_string(),
    };
    let mut pairs = Vec::new();
    let mut fields: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut chars = text.char_indices();
    let mut close_pair = |fields: &mut Vec<String>, cur: &mut String, at| {
        fields.push(std::mem::take(cur).trim().to_string());
        if fields.len() != 2 {
            return Err(bad(at, "expected exactly one `|` per pair"));
        }
        let value = fields.pop().unwrap_or_default();
        let key = fields.pop().unwrap_or_default();
        pairs.push(FactPair::new(key, value));
        Ok(())
    };
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some((_, n)) => cur.push(n),
                None => return Err(bad(i, "dangling escape")),
            },
            KEY_VALUE_SEP => fields.push(std::mem::take(&mut cur).trim().to_string()),
            PAIR_SEP => close_pair(&mut fields, &mut cur, i)?,
            _ => cur.push(c),
        }
    }
    close_pair(&mut fields, &mut cur, text.len())?;
    FactSet::new(pairs).map_err(|e| bad(0, &e.to_string()))
}

/// `[CLS] serialized [SEP] document [SEP]`.
pub fn augment_input(serialized: &str, document: &str) -> String {
    format!("[CLS] {serialized} [SEP] {document} [SEP]")
}

// ---------------------------------------------------------------------------
// Splits

/// Shuffles record indices with a seeded ChaCha8 generator and labels the
/// first `round(n * train)` records train, the next `round(n * valid)` valid
/// and the rest test. Records keep their input order.
pub fn split_corpus(
    mut records: Vec<CorpusRecord>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<Vec<CorpusRecord>, DatasetError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(DatasetError::BadRatios(format!(
            "{ratios:?} has a negative entry"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(DatasetError::BadRatios(format!("{ratios:?} sums to {sum}")));
    }
    let n = records.len();
    let n_train = ((n as f64) * ratios[0]).round() as usize;
    let n_train = n_train.min(n);
    let n_valid = (((n as f64) * ratios[1]).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (rank, idx) in order.into_iter().enumerate() {
        records[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotFrequency {
    pub slot: String,
    /// Number of examples whose template contains the slot.
    pub frequency: usize,
    /// `frequency / example_count`.
    pub popularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub example_count: usize,
    pub split_counts: BTreeMap<Split, usize>,
    pub slot_count: usize,
    pub avg_slots_per_example: f64,
    pub key_count: usize,
    pub avg_keys_per_example: f64,
    pub value_token_count: usize,
    /// Mean tokens per fact value.
    pub avg_value_len: f64,
    pub src_token_count: usize,
    pub avg_src_len: f64,
    pub tgt_token_count: usize,
    pub avg_tgt_len: f64,
    pub slot_frequency: Vec<SlotFrequency>,
}

fn ratio(total: usize, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        total as f64 / count as f64
    }
}

/// Counts every report field directly over the records. Token counts use
/// [`tokenize`]; source length covers all documents of an example.
pub fn corpus_stats(records: &[CorpusRecord]) -> Result<StatsReport, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let n = records.len();
    let mut split_counts: BTreeMap<Split, usize> = Split::ALL.iter().map(|s| (*s, 0)).collect();
    let mut slot_count = 0;
    let mut key_count = 0;
    let mut value_tokens = 0;
    let mut src_tokens = 0;
    let mut tgt_tokens = 0;
    let mut per_slot: HashMap<String, usize> = HashMap::new();
    for r in records {
        *split_counts.entry(r.split).or_default() += 1;
        key_count += r.facts.len();
        value_tokens += r
            .facts
            .iter()
            .map(|p| tokenize(&p.value).len())
            .sum::<usize>();
        src_tokens += r.documents.iter().map(|d| tokenize(d).len()).sum::<usize>();
        tgt_tokens += tokenize(&r.summary).len();
        if let Some(t) = &r.template {
            slot_count += t.slot_count();
            for key in t.slot_keys() {
                *per_slot.entry(key.to_string()).or_default() += 1;
            }
        }
    }
    let mut slot_frequency: Vec<SlotFrequency> = per_slot
        .into_iter()
        .map(|(slot, frequency)| SlotFrequency {
            popularity: ratio(frequency, n),
            slot,
            frequency,
        })
        .collect();
    slot_frequency.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.slot.cmp(&b.slot)));

    Ok(StatsReport {
        example_count: n,
        split_counts,
        slot_count,
        avg_slots_per_example: ratio(slot_count, n),
        key_count,
        avg_keys_per_example: ratio(key_count, n),
        value_token_count: value_tokens,
        avg_value_len: ratio(value_tokens, key_count),
        src_token_count: src_tokens,
        avg_src_len: ratio(src_tokens, n),
        tgt_token_count: tgt_tokens,
        avg_tgt_len: ratio(tgt_tokens, n),
        slot_frequency,
    })
}

/// Percentage rounded to two decimals in shortest form: `79.44%`, `17.6%`,
/// `12.0%`.
pub fn format_popularity(fraction: f64) -> String {
    let pct = (fraction * 10_000.0).round() / 100.0;
    if pct.fract() == 0.0 {
        format!("{pct:.1}%")
    } else {
        format!("{pct}%")
    }
}

impl StatsReport {
    /// Two plain-text tables: corpus features, then slot frequencies
    /// (at most `top` rows; all when `None`).
    pub fn to_table(&self, top: Option<usize>) -> String {
        let count = |s| self.split_counts.get(&s).copied().unwrap_or(0);
        let rows = [
            ("# Examples", self.example_count.to_string()),
            (
                "Train/Valid/Test",
                format!(
                    "{}/{}/{}",
                    count(Split::Train),
                    count(Split::Valid),
                    count(Split::Test)
                ),
            ),
            ("# Slots", self.slot_count.to_string()),
            ("Avg. Slots", format!("{:.2}", self.avg_slots_per_example)),
            ("# Keys", self.key_count.to_string()),
            ("Avg. Keys", format!("{:.2}", self.avg_keys_per_example)),
            ("Avg. Value Len", format!("{:.2}", self.avg_value_len)),
            ("Avg. Src Length", format!("{:.2}", self.avg_src_len)),
            ("Avg. Tgt Length", format!("{:.2}", self.avg_tgt_len)),
        ];
        let mut out = String::new();
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let _ = writeln!(out, "{:<w$}  Value", "Feature");
        for (k, v) in &rows {
            let _ = writeln!(out, "{k:<w$}  {v}");
        }

        let shown = &self.slot_frequency[..top
            .unwrap_or(self.slot_frequency.len())
            .min(self.slot_frequency.len())];
        let sw = shown.iter().map(|s| s.slot.len()).max().unwrap_or(0).max(4);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<sw$}  {:>9}  {:>10}",
            "Slot", "Frequency", "Popularity"
        );
        for s in shown {
            let _ = writeln!(
                out,
                "{:<sw$}  {:>9}  {:>10}",
                s.slot,
                s.frequency,
                format_popularity(s.popularity)
            );
        }
        out
    }
}
