//! Slot prediction, knowledge correction and the three fill strategies.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, BackendRequest};
use crate::simtext::{sorted_indel_sim, SimScore};
use crate::templater::{parse_template_with, render, ParseError, ParseMode};
use crate::types::{Config, Entity, FactSet, Strategy, Template};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlotFillError {
    #[error("backend failed: {0}")]
    Backend(#[from] BackendError),
    #[error("backend answered none of {} slot queries: {}", .failures.len(), describe(.failures))]
    PredictionUnavailable { failures: Vec<(String, String)> },
    #[error("backend template markup: {0}")]
    Markup(#[from] ParseError),
}

fn describe(failures: &[(String, String)]) -> String {
    failures
        .iter()
        .map(|(k, e)| format!("{k}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// `[CLS] name key [SEP] documents [SEP]`, documents joined by newlines.
pub fn format_slot_query(entity_name: &str, key: &str, documents: &[String]) -> String {
    format!(
        "[CLS] {entity_name} {key} [SEP] {} [SEP]",
        documents.join("\n")
    )
}

/// Values predicted from the source documents, keyed by slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PredictionMap {
    pub values: BTreeMap<String, String>,
    /// Slot keys whose query failed, with the error text.
    pub failures: Vec<(String, String)>,
}

impl PredictionMap {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub value: String,
    pub external_key: String,
    pub score: SimScore,
}

/// Slots backed by trusted external facts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrectionMap {
    entries: BTreeMap<String, Correction>,
}

impl CorrectionMap {
    pub fn insert(&mut self, slot_key: impl Into<String>, correction: Correction) {
        self.entries.insert(slot_key.into(), correction);
    }

    pub fn get(&self, key: &str) -> Option<&Correction> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn corrected_keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Correction)> {
        self.entries.iter().map(|(k, c)| (k.as_str(), c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Corrected,
    Predicted,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}

/// One resolved value per distinct template slot, in template order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FillPlan {
    fills: Vec<Fill>,
}

impl FillPlan {
    pub fn new(fills: Vec<Fill>) -> Self {
        Self { fills }
    }

    pub fn fills(&self) -> &[Fill] {
        &self.fills
    }

    pub fn get(&self, key: &str) -> Option<&Fill> {
        self.fills.iter().find(|f| f.key == key)
    }

    pub fn to_map(&self) -> HashMap<String, String> {
        self.fills
            .iter()
            .map(|f| (f.key.clone(), f.value.clone()))
            .collect()
    }
}

/// Queries the backend once per distinct slot key. Individual failures are
/// recorded in the result; the call fails only when every query failed.
pub fn predict_slots<B: Backend + ?Sized>(
    entity: &Entity,
    template: &Template,
    documents: &[String],
    backend: &B,
) -> Result<PredictionMap, SlotFillError> {
    let keys = template.slot_keys();
    if keys.is_empty() {
        return Ok(PredictionMap::default());
    }
    let answers: Vec<(String, Result<String, BackendError>)> = keys
        .par_iter()
        .map(|key| {
            let request = BackendRequest::slot(entity.name(), key, documents);
            let answer = backend.generate(&request).map(|r| r.output);
            (key.to_string(), answer)
        })
        .collect();

    let mut out = PredictionMap::default();
    for (key, answer) in answers {
        match answer {
            Ok(value) => {
                let value = value.trim();
                if !value.is_empty() {
                    out.values.insert(key, value.to_string());
                }
            }
            Err(err) => out.failures.push((key, err.to_string())),
        }
    }
    if out.failures.len() == keys.len() {
        return Err(SlotFillError::PredictionUnavailable {
            failures: out.failures,
        });
    }
    Ok(out)
}

/// Maps each slot to the external fact whose key is most similar to the slot
/// name, when that similarity reaches `config.delta()`. Ties go to the
/// lexicographically smallest external key.
pub fn correct_slots(template: &Template, external: &FactSet, config: &Config) -> CorrectionMap {
    let mut out = CorrectionMap::default();
    for key in template.slot_keys() {
        if let Some(correction) = best_external_fact(key, external, config.delta()) {
            out.insert(key, correction);
        }
    }
    out
}

pub(crate) fn best_external_fact(key: &str, facts: &FactSet, delta: f64) -> Option<Correction> {
    let mut best: Option<(SimScore, &crate::types::FactPair)> = None;
    for fact in facts {
        let score = sorted_indel_sim(key, &fact.key);
        let better = match best {
            None => true,
            Some((s, b)) => score > s || (score == s && fact.key < b.key),
        };
        if better {
            best = Some((score, fact));
        }
    }
    best.filter(|(score, _)| *score >= delta)
        .map(|(score, fact)| Correction {
            value: fact.value.clone(),
            external_key: fact.key.clone(),
            score,
        })
}

/// Resolves every slot of `template` under `strategy`:
///
/// * discard: corrected value, otherwise empty;
/// * predict: corrected value, otherwise the prediction;
/// * all_predict: the prediction, corrections ignored.
///
/// A missing or empty prediction yields an empty fill.
pub fn apply_strategy(
    strategy: Strategy,
    template: &Template,
    predictions: &PredictionMap,
    corrections: &CorrectionMap,
) -> FillPlan {
    let predicted = |key: &str| match predictions.get(key) {
        Some(v) if !v.is_empty() => (v.to_string(), Provenance::Predicted),
        _ => (String::new(), Provenance::Empty),
    };
    let corrected = |key: &str| {
        corrections
            .get(key)
            .map(|c| (c.value.clone(), Provenance::Corrected))
    };
    let fills = template
        .slot_keys()
        .into_iter()
        .map(|key| {
            let (value, provenance) = match strategy {
                Strategy::Discard => corrected(key).unwrap_or((String::new(), Provenance::Empty)),
                Strategy::Predict => corrected(key).unwrap_or_else(|| predicted(key)),
                Strategy::AllPredict => predicted(key),
            };
            Fill {
                key: key.to_string(),
                value,
                provenance,
            }
        })
        .collect();
    FillPlan { fills }
}

/// Where [`summarize`] gets its template from.
#[derive(Debug, Clone)]
pub enum TemplateSource {
    Given(Template),
    Backend(ParseMode),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub text: String,
    #[serde(serialize_with = "as_markup")]
    pub template: Template,
    pub predictions: PredictionMap,
    pub corrections: CorrectionMap,
    pub plan: FillPlan,
    pub warnings: Vec<String>,
}

fn as_markup<S: serde::Serializer>(t: &Template, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_markup())
}

/// Template, then predict, correct, fill and render.
///
/// Correction is skipped under all_predict; prediction is skipped under
/// discard once every slot is corrected.
pub fn summarize<B: Backend + ?Sized>(
    entity: &Entity,
    documents: &[String],
    external: &FactSet,
    backend: &B,
    config: &Config,
    source: TemplateSource,
) -> Result<Summary, SlotFillError> {
    let mut warnings = Vec::new();
    let template = match source {
        TemplateSource::Given(t) => t,
        TemplateSource::Backend(mode) => {
            let request = BackendRequest::template(entity.name(), documents);
            let markup = backend.generate(&request)?.output;
            let (t, w) = parse_template_with(&markup, mode)?;
            warnings.extend(w);
            t
        }
    };

    let corrections = match config.strategy {
        Strategy::AllPredict => CorrectionMap::default(),
        _ => correct_slots(&template, external, config),
    };
    let all_corrected = template.slot_keys().iter().all(|k| corrections.contains(k));
    let predictions = if config.strategy == Strategy::Discard && all_corrected {
        PredictionMap::default()
    } else {
        predict_slots(entity, &template, documents, backend)?
    };
    warnings.extend(
        predictions
            .failures
            .iter()
            .map(|(k, e)| format!("slot `{k}` prediction failed: {e}")),
    );

    let plan = apply_strategy(config.strategy, &template, &predictions, &corrections);
    let text = render(&template, &plan.to_map());
    Ok(Summary {
        text,
        template,
        predictions,
        corrections,
        plan,
        warnings,
    })
}
