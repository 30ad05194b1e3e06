//! Fact/template decomposition of entity summaries.
//!
//! A reference summary is split into a fact-agnostic template (slots named by
//! fact keys) and the facts that fill it. At inference time a template is
//! generated from the source documents, slots are predicted from the same
//! documents, trusted external facts overwrite predictions where a slot name
//! matches a fact key, and one of three strategies decides what gets rendered.
//!
//! Modules:
//! * [`simtext`]: token-sort Indel similarity and bag-of-words Jaccard;
//! * [`templater`]: golden templates and `[SLT] key [/SLT]` markup;
//! * [`slotfill`]: prediction, correction, fill strategies, `summarize`;
//! * [`backends`]: extractive baseline and HTTP model-server client;
//! * [`dataset`]: corpus alignment, serialization, splits and statistics;
//! * [`evalkit`]: ROUGE and slot-level fact accuracy;
//! * [`cli`]: the `factslot` command line.

pub mod backends;
pub mod cli;
pub mod dataset;
pub mod evalkit;
pub mod simtext;
pub mod slotfill;
pub mod templater;
pub mod types;

pub use simtext::{indel_distance, jaccard_bow, sorted_indel_sim, tokenize, SimScore};
pub use types::{
    Config, CorpusRecord, Entity, FactPair, FactSet, Segment, Slot, Split, Strategy, Template,
    ValidationError,
};
