//! ROUGE-1/2/L and slot-level fact accuracy, aggregated over a corpus.
//!
//! ROUGE here is fixed to one definition: lowercased whitespace tokens with
//! punctuation-only tokens removed, no stemming, clipped n-gram counts and a
//! balanced F1.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::simtext::{lcs_len, sorted_indel_sim, tokenize};
use crate::slotfill::{best_external_fact, FillPlan};
use crate::types::{CorpusRecord, FactSet};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("no records to evaluate")]
    Empty,
    #[error("record and output ids differ; missing outputs: [{}], unknown outputs: [{}]", .missing.join(", "), .unknown.join(", "))]
    IdMismatch {
        missing: Vec<String>,
        unknown: Vec<String>,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, cand: usize, reference: usize) -> Self {
        let precision = if cand == 0 {
            0.0
        } else {
            overlap as f64 / cand as f64
        };
        let recall = if reference == 0 {
            0.0
        } else {
            overlap as f64 / reference as f64
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Lowercased tokens with punctuation-only tokens dropped.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<RougeScore, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroOrder);
    }
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let overlap = cand_counts
        .iter()
        .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(RougeScore::from_counts(
        overlap,
        cand_counts.values().sum(),
        ref_counts.values().sum(),
    ))
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    RougeScore::from_counts(lcs_len(&cand, &refr), cand.len(), refr.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FactAccuracyScore {
    pub exact_correct: usize,
    pub fuzzy_correct: usize,
    pub filled: usize,
    pub total_slots: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Checks each non-empty fill against the golden fact whose key best matches
/// the slot name (same rule as knowledge correction). Precision over zero
/// fills and recall over zero slots are reported as 1.
pub fn slot_fact_accuracy(plan: &FillPlan, golden: &FactSet, delta: f64) -> FactAccuracyScore {
    let mut score = FactAccuracyScore {
        total_slots: plan.fills().len(),
        ..Default::default()
    };
    for fill in plan.fills().iter().filter(|f| !f.value.is_empty()) {
        score.filled += 1;
        let Some(gold) = best_external_fact(&fill.key, golden, delta) else {
            continue;
        };
        if fill.value == gold.value {
            score.exact_correct += 1;
        }
        if sorted_indel_sim(&fill.value, &gold.value) >= delta {
            score.fuzzy_correct += 1;
        }
    }
    score.precision = vacuous_ratio(score.fuzzy_correct, score.filled);
    score.recall = vacuous_ratio(score.fuzzy_correct, score.total_slots);
    score
}

fn vacuous_ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Output to be scored against one record.
#[derive(Debug, Clone)]
pub struct SystemOutput {
    pub id: String,
    pub summary: String,
    pub plan: FillPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordScores {
    pub id: String,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub facts: FactAccuracyScore,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MacroAverages {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub fact_precision: f64,
    pub fact_recall: f64,
    pub exact_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub records: usize,
    pub f_measure: &'static str,
    pub macro_avg: MacroAverages,
    pub per_record: Vec<RecordScores>,
}

pub fn score_record(record: &CorpusRecord, output: &SystemOutput, delta: f64) -> RecordScores {
    RecordScores {
        id: record.id.clone(),
        rouge1: rouge_n(&output.summary, &record.summary, 1).expect("order 1"),
        rouge2: rouge_n(&output.summary, &record.summary, 2).expect("order 2"),
        rouge_l: rouge_l(&output.summary, &record.summary),
        facts: slot_fact_accuracy(&output.plan, &record.facts, delta),
    }
}

/// Scores every record against its output (matched by id) and macro-averages.
/// Per-record rows are sorted by id, so the report does not depend on input
/// order.
pub fn evaluate_corpus(
    records: &[CorpusRecord],
    outputs: &[SystemOutput],
    delta: f64,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_id: BTreeMap<&str, &SystemOutput> = BTreeMap::new();
    for o in outputs {
        if by_id.insert(o.id.as_str(), o).is_some() {
            return Err(EvalError::DuplicateId(o.id.clone()));
        }
    }
    let mut record_ids = HashSet::new();
    for r in records {
        if !record_ids.insert(r.id.as_str()) {
            return Err(EvalError::DuplicateId(r.id.clone()));
        }
    }
    let mut missing: Vec<String> = record_ids
        .iter()
        .filter(|id| !by_id.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    let mut unknown: Vec<String> = by_id
        .keys()
        .filter(|id| !record_ids.contains(*id))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        missing.sort();
        unknown.sort();
        return Err(EvalError::IdMismatch { missing, unknown });
    }

    let mut per_record: Vec<RecordScores> = records
        .iter()
        .map(|r| score_record(r, by_id[r.id.as_str()], delta))
        .collect();
    per_record.sort_by(|a, b| a.id.cmp(&b.id));

    let n = per_record.len() as f64;
    let mean = |f: &dyn Fn(&RecordScores) -> f64| per_record.iter().map(f).sum::<f64>() / n;
    let mean_rouge = |f: &dyn Fn(&RecordScores) -> RougeScore| RougeScore {
        precision: mean(&|r| f(r).precision),
        recall: mean(&|r| f(r).recall),
        f1: mean(&|r| f(r).f1),
    };
    let macro_avg = MacroAverages {
        rouge1: mean_rouge(&|r| r.rouge1),
        rouge2: mean_rouge(&|r| r.rouge2),
        rouge_l: mean_rouge(&|r| r.rouge_l),
        fact_precision: mean(&|r| r.facts.precision),
        fact_recall: mean(&|r| r.facts.recall),
        exact_rate: mean(&|r| vacuous_ratio(r.facts.exact_correct, r.facts.filled)),
    };
    Ok(EvalReport {
        records: per_record.len(),
        f_measure: "balanced F1",
        macro_avg,
        per_record,
    })
}

impl EvalReport {
    /// Aligned plain-text table of the macro averages.
    pub fn to_table(&self) -> String {
        let a = &self.macro_avg;
        let mut out = String::new();
        let _ = writeln!(out, "records: {}  (F = {})", self.records, self.f_measure);
        let _ = writeln!(out, "{:<16}{:>10}{:>10}{:>10}", "metric", "P", "R", "F");
        for (name, s) in [
            ("ROUGE-1", a.rouge1),
            ("ROUGE-2", a.rouge2),
            ("ROUGE-L", a.rouge_l),
        ] {
            let _ = writeln!(
                out,
                "{:<16}{:>10.4}{:>10.4}{:>10.4}",
                name, s.precision, s.recall, s.f1
            );
        }
        let _ = writeln!(
            out,
            "{:<16}{:>10.4}{:>10.4}{:>10}",
            "slot facts", a.fact_precision, a.fact_recall, "-"
        );
        let _ = writeln!(out, "{:<16}{:>10.4}", "exact rate", a.exact_rate);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slotfill::{Fill, Provenance};
    use crate::types::{Entity, FactPair, Split};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn rouge_identity() {
        let s = rouge_n("the cat sat", "the cat sat", 1).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_l("a b c", "a b c").f1, 1.0);
    }

    #[test]
    fn rouge1_partial() {
        let s = rouge_n("the cat", "the cat sat", 1).unwrap();
        assert_eq!(s.precision, 1.0);
        assert!(close(s.recall, 2.0 / 3.0));
        assert!(close(s.f1, 0.8));
    }

    #[test]
    fn rouge_disjoint_and_empty() {
        assert_eq!(rouge_n("a", "b", 1).unwrap(), RougeScore::default());
        assert_eq!(rouge_l("", "a b"), RougeScore::default());
        assert_eq!(rouge_n("a", "b", 0), Err(EvalError::ZeroOrder));
    }

    #[test]
    fn rouge_clips_repeats() {
        let s = rouge_n("the the the", "the cat", 1).unwrap();
        assert!(close(s.precision, 1.0 / 3.0));
        assert!(close(s.recall, 0.5));
    }

    #[test]
    fn rouge_drops_punctuation_tokens() {
        assert_eq!(rouge_tokens("Hello , world ."), vec!["hello", "world"]);
        assert_eq!(rouge_n("a b .", "a b", 2).unwrap().f1, 1.0);
    }

    #[test]
    fn rouge_l_subsequence() {
        let s = rouge_l("a c", "a b c");
        assert_eq!(s.precision, 1.0);
        assert!(close(s.recall, 2.0 / 3.0));
        assert!(close(s.f1, 0.8));
    }

    fn plan(pairs: &[(&str, &str)]) -> FillPlan {
        FillPlan::new(
            pairs
                .iter()
                .map(|(k, v)| Fill {
                    key: k.to_string(),
                    value: v.to_string(),
                    provenance: if v.is_empty() {
                        Provenance::Empty
                    } else {
                        Provenance::Corrected
                    },
                })
                .collect(),
        )
    }

    fn golden() -> FactSet {
        FactSet::new([
            FactPair::new("name", "peter wichers"),
            FactPair::new("birth_date", "5 june 1979"),
        ])
        .unwrap()
    }

    #[test]
    fn fact_accuracy_all_golden() {
        let s = slot_fact_accuracy(
            &plan(&[("name", "peter wichers"), ("birth_date", "5 june 1979")]),
            &golden(),
            0.8,
        );
        assert_eq!(
            (s.exact_correct, s.fuzzy_correct, s.filled, s.total_slots),
            (2, 2, 2, 2)
        );
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn fact_accuracy_all_empty() {
        let s = slot_fact_accuracy(&plan(&[("name", ""), ("birth_date", "")]), &golden(), 0.8);
        assert_eq!(s.filled, 0);
        assert_eq!((s.precision, s.recall), (1.0, 0.0));
    }

    #[test]
    fn fact_accuracy_fuzzy_not_exact() {
        // "5 june 1979." vs "5 june 1979": L = 1, lengths 12 + 11
        let s = slot_fact_accuracy(&plan(&[("birth_date", "5 june 1979.")]), &golden(), 0.8);
        assert_eq!((s.exact_correct, s.fuzzy_correct), (0, 1));
        assert!(close(
            sorted_indel_sim("5 june 1979.", "5 june 1979"),
            1.0 - 1.0 / 23.0
        ));
    }

    fn rec(id: &str, summary: &str) -> CorpusRecord {
        CorpusRecord {
            id: id.into(),
            entity: Entity::new("peter wichers").unwrap(),
            documents: vec![],
            summary: summary.into(),
            facts: golden(),
            template: None,
            split: Split::Test,
            unmatched_slots: vec![],
        }
    }

    fn out(id: &str, summary: &str) -> SystemOutput {
        SystemOutput {
            id: id.into(),
            summary: summary.into(),
            plan: plan(&[("name", "peter wichers")]),
        }
    }

    #[test]
    fn single_record_report_equals_record_scores() {
        let recs = [rec("a", "the cat sat")];
        let report = evaluate_corpus(&recs, &[out("a", "the cat")], 0.8).unwrap();
        assert_eq!(report.macro_avg.rouge1, report.per_record[0].rouge1);
        assert!(close(report.macro_avg.rouge1.f1, 0.8));
    }

    #[test]
    fn report_is_permutation_invariant() {
        let recs = [rec("a", "the cat sat"), rec("b", "x y z")];
        let outs = [out("a", "the cat"), out("b", "x z")];
        let r1 = evaluate_corpus(&recs, &outs, 0.8).unwrap();
        let recs_rev = [recs[1].clone(), recs[0].clone()];
        let outs_rev = [outs[1].clone(), outs[0].clone()];
        let r2 = evaluate_corpus(&recs_rev, &outs_rev, 0.8).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn mismatched_ids_error() {
        let err = evaluate_corpus(&[rec("a", "x")], &[out("b", "x")], 0.8).unwrap_err();
        assert_eq!(
            err,
            EvalError::IdMismatch {
                missing: vec!["a".into()],
                unknown: vec!["b".into()]
            }
        );
    }
}
