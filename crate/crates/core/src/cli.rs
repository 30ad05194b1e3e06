//! `factslot` command line: dataset construction, golden templates, slot
//! filling, evaluation and statistics over JSONL corpora.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backends::{Backend, BackendSpec, ExtractiveBaseline, RemoteBackend, BACKEND_URL_ENV};
use crate::dataset::{
    self, corpus_stats, join_corpora, match_entries, read_corpus, read_jsonl, split_corpus,
    write_corpus, write_jsonl, DatasetError, FactEntry, SummaryEntry,
};
use crate::evalkit::{evaluate_corpus, SystemOutput};
use crate::slotfill::{summarize, CorrectionMap, FillPlan, SlotFillError, TemplateSource};
use crate::templater::{build_golden_template, ParseMode, TemplateBuildReport};
use crate::types::{Config, Strategy, DEFAULT_DELTA, DEFAULT_SLACK};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => m,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "factslot",
    version,
    about = "Template/slot summarization toolkit"
)]
pub struct Cli {
    /// Where to write the run manifest (defaults next to the main output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align a summarization corpus with fact tables and write a split corpus.
    BuildDataset(BuildDatasetArgs),
    /// Add golden templates to every record of a corpus.
    MakeTemplates(MakeTemplatesArgs),
    /// Generate summaries by template prediction and slot filling.
    Fill(FillArgs),
    /// Score fill outputs against corpus references.
    Evaluate(EvaluateArgs),
    /// Print corpus statistics and slot frequencies.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct BuildDatasetArgs {
    /// Summarization entries: {"id","entity_name","documents","summary"} per line.
    #[arg(long)]
    left: PathBuf,
    /// Fact tables: {"id","abstract","facts"} per line.
    #[arg(long)]
    right: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = dataset::DEFAULT_MATCH_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// train,valid,test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
}

#[derive(Debug, Args)]
struct MakeTemplatesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    slack: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TemplateFrom {
    /// Ask the backend for a template.
    Backend,
    /// Use the golden template stored in the corpus.
    Golden,
}

#[derive(Debug, Args)]
struct FillArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// discard, predict or all_predict.
    #[arg(long, default_value = "discard")]
    strategy: String,
    /// builtin or remote:ADDRESS.
    #[arg(long, default_value = "builtin")]
    backend: String,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    slack: usize,
    #[arg(long, value_enum, default_value_t = TemplateFrom::Backend)]
    templates: TemplateFrom,
    /// Repair malformed backend template markup instead of failing.
    #[arg(long)]
    recover_markup: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    outputs: PathBuf,
    /// JSON report path; a plain-text table is written alongside as .txt.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Show only the N most frequent slots.
    #[arg(long)]
    top: Option<usize>,
}

/// One line of `fill` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FillLine {
    pub id: String,
    pub entity_name: String,
    pub strategy: Strategy,
    pub summary: String,
    pub template: String,
    pub fills: FillPlan,
    pub predictions: BTreeMap<String, String>,
    pub corrections: CorrectionMap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: Option<u64>,
    started_unix_ms: u128,
    elapsed_ms: f64,
    counts: BTreeMap<&'static str, usize>,
}

struct Run {
    command: &'static str,
    started: Instant,
    started_unix_ms: u128,
}

impl Run {
    fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    fn finish(
        self,
        config: serde_json::Value,
        inputs: &[&Path],
        outputs: &[&Path],
        seed: Option<u64>,
        counts: BTreeMap<&'static str, usize>,
    ) -> RunManifest {
        RunManifest {
            command: self.command,
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            started_unix_ms: self.started_unix_ms,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1000.0,
            counts,
        }
    }
}

/// `<path><suffix>`, e.g. `out.jsonl` → `out.jsonl.manifest.json`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_manifest(manifest: &RunManifest, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    match path {
        Some(p) => write_text(p, &text),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "input not found: {}",
            path.display()
        )))
    }
}

fn config(delta: f64, slack: usize, strategy: Strategy) -> Result<Config, CliError> {
    Config::new(delta, slack, strategy).map_err(|e| CliError::Usage(e.to_string()))
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let manifest = cli.manifest;
    match cli.command {
        Command::BuildDataset(a) => cmd_build_dataset(a, manifest),
        Command::MakeTemplates(a) => cmd_make_templates(a, manifest),
        Command::Fill(a) => cmd_fill(a, manifest),
        Command::Evaluate(a) => cmd_evaluate(a, manifest),
        Command::Stats(a) => cmd_stats(a, manifest),
    }
}

fn parse_ratios(text: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--ratios: {e}")))?;
    <[f64; 3]>::try_from(parts)
        .map_err(|_| CliError::Usage("--ratios needs exactly three values".into()))
}

fn cmd_build_dataset(a: BuildDatasetArgs, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let run = Run::start("build-dataset");
    let ratios = parse_ratios(&a.ratios)?;
    if !(a.threshold > 0.0 && a.threshold <= 1.0) {
        return Err(CliError::Usage(format!(
            "--threshold must lie in (0, 1], got {}",
            a.threshold
        )));
    }
    require_file(&a.left)?;
    require_file(&a.right)?;
    let left: Vec<SummaryEntry> = read_jsonl(&a.left)?;
    let right: Vec<FactEntry> = read_jsonl(&a.right)?;

    let left_abs: Vec<(&str, &str)> = left
        .iter()
        .map(|e| (e.id.as_str(), e.summary.as_str()))
        .collect();
    let right_abs: Vec<(&str, &str)> = right
        .iter()
        .map(|e| (e.id.as_str(), e.abstract_text.as_str()))
        .collect();
    let matches = match_entries(&left_abs, &right_abs, a.threshold)?;
    let joined = join_corpora(&left, &right, &matches)?;
    let records = split_corpus(joined.records, ratios, a.seed)?;
    write_corpus(&a.out, &records)?;

    let counts = BTreeMap::from([
        ("left_entries", left.len()),
        ("right_entries", right.len()),
        ("matches", matches.len()),
        ("dropped", joined.dropped.len()),
        ("warnings", joined.warnings.len()),
        ("records", records.len()),
    ]);
    let m = run.finish(
        json!({ "threshold": a.threshold, "ratios": ratios }),
        &[&a.left, &a.right],
        &[&a.out],
        Some(a.seed),
        counts,
    );
    write_manifest(
        &m,
        Some(&manifest.unwrap_or_else(|| sidecar(&a.out, ".manifest.json"))),
    )
}

#[derive(Serialize)]
struct ReportLine<'a> {
    id: &'a str,
    #[serde(flatten)]
    report: &'a TemplateBuildReport,
}

fn cmd_make_templates(a: MakeTemplatesArgs, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let run = Run::start("make-templates");
    let cfg = config(a.delta, a.slack, Strategy::Discard)?;
    require_file(&a.corpus)?;
    let mut records = read_corpus(&a.corpus)?;
    let built: Vec<_> = records
        .par_iter()
        .map(|r| build_golden_template(&r.summary, &r.facts, &cfg))
        .collect();
    let mut reports = Vec::with_capacity(built.len());
    for (record, (template, report)) in records.iter_mut().zip(built) {
        record.template = Some(template);
        record.unmatched_slots.clear();
        reports.push(report);
    }
    write_corpus(&a.out, &records)?;
    let report_path = sidecar(&a.out, ".reports.jsonl");
    let lines: Vec<ReportLine<'_>> = records
        .iter()
        .zip(&reports)
        .map(|(r, report)| ReportLine { id: &r.id, report })
        .collect();
    write_jsonl(&report_path, &lines)?;

    let counts = BTreeMap::from([
        ("records", records.len()),
        ("slots", reports.iter().map(|r| r.replaced.len()).sum()),
        (
            "skipped_facts",
            reports.iter().map(|r| r.skipped_facts.len()).sum(),
        ),
        (
            "overlap_dropped",
            reports.iter().map(|r| r.overlap_dropped.len()).sum(),
        ),
    ]);
    let m = run.finish(
        json!({ "delta": cfg.delta(), "slack": cfg.span_window_slack }),
        &[&a.corpus],
        &[&a.out, &report_path],
        None,
        counts,
    );
    write_manifest(
        &m,
        Some(&manifest.unwrap_or_else(|| sidecar(&a.out, ".manifest.json"))),
    )
}

fn make_backend(spec: &str, cfg: &Config) -> Result<Box<dyn Backend>, CliError> {
    let spec: BackendSpec = spec.parse().map_err(CliError::Usage)?;
    let addr = spec
        .resolve(std::env::var(BACKEND_URL_ENV).ok())
        .map_err(CliError::Usage)?;
    Ok(match addr {
        None => Box::new(ExtractiveBaseline::new(cfg.delta(), cfg.span_window_slack)),
        Some(addr) => Box::new(RemoteBackend::new(&addr)),
    })
}

fn fill_error(id: &str, e: SlotFillError) -> CliError {
    match e {
        SlotFillError::Markup(_) => CliError::Data(format!("record `{id}`: {e}")),
        _ => CliError::Backend(format!("record `{id}`: {e}")),
    }
}

fn cmd_fill(a: FillArgs, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let run = Run::start("fill");
    let strategy: Strategy = a
        .strategy
        .parse()
        .map_err(|e: crate::ValidationError| CliError::Usage(e.to_string()))?;
    let cfg = config(a.delta, a.slack, strategy)?;
    let backend = make_backend(&a.backend, &cfg)?;
    require_file(&a.corpus)?;
    let records = read_corpus(&a.corpus)?;
    let mode = if a.recover_markup {
        ParseMode::Recover
    } else {
        ParseMode::Strict
    };

    let lines: Vec<FillLine> = records
        .par_iter()
        .map(|r| {
            let source = match (a.templates, &r.template) {
                (TemplateFrom::Golden, Some(t)) => TemplateSource::Given(t.clone()),
                (TemplateFrom::Golden, None) => {
                    return Err(CliError::Data(format!(
                        "record `{}` has no golden template",
                        r.id
                    )))
                }
                (TemplateFrom::Backend, _) => TemplateSource::Backend(mode),
            };
            let out = summarize(
                &r.entity,
                &r.documents,
                &r.facts,
                backend.as_ref(),
                &cfg,
                source,
            )
            .map_err(|e| fill_error(&r.id, e))?;
            Ok(FillLine {
                id: r.id.clone(),
                entity_name: r.entity.name().to_string(),
                strategy,
                summary: out.text,
                template: out.template.to_markup(),
                fills: out.plan,
                predictions: out.predictions.values,
                corrections: out.corrections,
                warnings: out.warnings,
            })
        })
        .collect::<Result<_, _>>()?;
    write_jsonl(&a.out, &lines)?;

    let filled = |p: crate::slotfill::Provenance| {
        lines
            .iter()
            .flat_map(|l| l.fills.fills())
            .filter(|f| f.provenance == p)
            .count()
    };
    let counts = BTreeMap::from([
        ("records", lines.len()),
        ("corrected", filled(crate::slotfill::Provenance::Corrected)),
        ("predicted", filled(crate::slotfill::Provenance::Predicted)),
        ("empty", filled(crate::slotfill::Provenance::Empty)),
    ]);
    let m = run.finish(
        json!({
            "delta": cfg.delta(),
            "slack": cfg.span_window_slack,
            "strategy": strategy,
            "backend": backend.id(),
            "templates": a.templates,
            "recover_markup": a.recover_markup,
        }),
        &[&a.corpus],
        &[&a.out],
        None,
        counts,
    );
    write_manifest(
        &m,
        Some(&manifest.unwrap_or_else(|| sidecar(&a.out, ".manifest.json"))),
    )
}

fn cmd_evaluate(a: EvaluateArgs, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let run = Run::start("evaluate");
    if !(a.delta > 0.0 && a.delta <= 1.0) {
        return Err(CliError::Usage(format!(
            "--delta must lie in (0, 1], got {}",
            a.delta
        )));
    }
    require_file(&a.corpus)?;
    require_file(&a.outputs)?;
    let records = read_corpus(&a.corpus)?;
    let outputs: Vec<SystemOutput> = read_jsonl::<FillLine>(&a.outputs)?
        .into_iter()
        .map(|l| SystemOutput {
            id: l.id,
            summary: l.summary,
            plan: l.fills,
        })
        .collect();
    let report =
        evaluate_corpus(&records, &outputs, a.delta).map_err(|e| CliError::Data(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_text(&a.report, &json)?;
    let table = report.to_table();
    let table_path = a.report.with_extension("txt");
    write_text(&table_path, &table)?;
    print!("{table}");

    let m = run.finish(
        json!({ "delta": a.delta }),
        &[&a.corpus, &a.outputs],
        &[&a.report, &table_path],
        None,
        BTreeMap::from([("records", report.records)]),
    );
    write_manifest(
        &m,
        Some(&manifest.unwrap_or_else(|| sidecar(&a.report, ".manifest.json"))),
    )
}

fn cmd_stats(a: StatsArgs, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let run = Run::start("stats");
    require_file(&a.corpus)?;
    let records = read_corpus(&a.corpus)?;
    let report = corpus_stats(&records)?;
    print!("{}", report.to_table(a.top));
    let mut outputs = Vec::new();
    if let Some(path) = &a.json {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        write_text(path, &json)?;
        outputs.push(path.as_path());
    }
    let m = run.finish(
        json!({ "top": a.top }),
        &[&a.corpus],
        &outputs,
        None,
        BTreeMap::from([("records", report.example_count)]),
    );
    write_manifest(&m, manifest.as_deref())
}
