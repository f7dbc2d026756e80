//! Experiment lifecycle: prepare → run → score → report.
//!
//! Every command reads the same experiment config. `prepare` writes the
//! sampled test set and a manifest; `run` executes prompts against a backend
//! into a resumable response archive; `score` turns the archive into metrics
//! and cost files; `report` renders a comparison table across runs.
//!
//! Archives store raw response text, so scoring policy changes never require
//! re-running (or re-billing). All outputs are deterministic for a given
//! config and stub backend.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::client::{cached_complete, ClientError, CompletionRequest, CompletionResponse};
use crate::config::{ConfigError, ExperimentConfig, RunConfig};
use crate::corpus::{
    augment_gold, load_records, load_test_cases, sample_test_set, split_dataset, write_jsonl,
    CorpusError, GoldOverrides, TestCase,
};
use crate::eval::{
    aggregate_cost, compute_metrics, judge_closed, judge_open, CostReport, GoldClosed, Judgement,
    JudgementCounts, Matcher, Metrics, OpenEvalMode,
};
use crate::norm::{NormError, Normalizer};
use crate::parse::{parse_closed, parse_open};
use crate::prompt::{
    demo_seed_for_case, select_demonstrations, AssembledPrompt, DemoContext, DemoKind, PromptError,
    Prompter, TemplateError, TemplateSet,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("missing input {path}: {hint}")]
    MissingInput { path: PathBuf, hint: String },
    #[error("archive {path} contains no scoreable entries")]
    EmptyArchive { path: PathBuf },
    #[error("test set is empty; nothing to do")]
    EmptyTestSet,
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        source: serde_json::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 for configuration/setup problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingInput { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

/// Well-known output locations under the config's output directory.
pub struct OutputPaths;

impl OutputPaths {
    pub fn test_set(config: &ExperimentConfig) -> PathBuf {
        config.output_dir.join("test_set.jsonl")
    }
    pub fn manifest(config: &ExperimentConfig) -> PathBuf {
        config.output_dir.join("manifest.json")
    }
    pub fn run_dir(config: &ExperimentConfig, run: &str) -> PathBuf {
        config.output_dir.join("runs").join(run)
    }
    pub fn archive(config: &ExperimentConfig, run: &str) -> PathBuf {
        Self::run_dir(config, run).join("archive.jsonl")
    }
    pub fn metrics(config: &ExperimentConfig, run: &str) -> PathBuf {
        Self::run_dir(config, run).join("metrics.json")
    }
    pub fn cost(config: &ExperimentConfig, run: &str) -> PathBuf {
        Self::run_dir(config, run).join("cost.json")
    }
    pub fn report_csv(config: &ExperimentConfig) -> PathBuf {
        config.output_dir.join("report.csv")
    }
    pub fn report_txt(config: &ExperimentConfig) -> PathBuf {
        config.output_dir.join("report.txt")
    }
}

fn load_normalizer(config: &ExperimentConfig) -> Result<Normalizer, PipelineError> {
    Ok(match &config.normalization_rules {
        Some(path) => Normalizer::from_file(path)?,
        None => Normalizer::with_default_rules(),
    })
}

fn load_templates(config: &ExperimentConfig) -> Result<TemplateSet, PipelineError> {
    Ok(match &config.templates {
        Some(path) => TemplateSet::from_file(path)?,
        None => TemplateSet::default(),
    })
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct Manifest {
    records_file: String,
    records_digest: String,
    split: SplitSummary,
    sampling: SamplingSummary,
    test_cases: usize,
    cells: Vec<CellCount>,
    normalization: NormalizationSummary,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SplitSummary {
    ratio: [u64; 3],
    seed: u64,
    train: usize,
    validation: usize,
    test_pool: usize,
}

#[derive(Debug, Serialize)]
struct SamplingSummary {
    max_positive_per_cell: usize,
    max_negative_per_cell: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellCount {
    pub category: String,
    pub attribute: String,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Serialize)]
struct NormalizationSummary {
    positive_cases: usize,
    augmented_cases: usize,
    coverage: f64,
}

#[derive(Debug)]
pub struct PrepareSummary {
    pub test_cases: usize,
    pub coverage: f64,
    pub warnings: Vec<String>,
}

/// Loads the corpus, splits it, samples and augments the test set, and writes
/// `test_set.jsonl` plus `manifest.json`.
pub fn prepare(config: &ExperimentConfig) -> Result<PrepareSummary, PipelineError> {
    let records_path = &config.dataset.records;
    if !records_path.exists() {
        return Err(PipelineError::MissingInput {
            path: records_path.clone(),
            hint: "dataset file not found".into(),
        });
    }
    let records = load_records(records_path)?;
    let split = split_dataset(
        &records,
        config.dataset.split.ratio,
        config.dataset.split.seed,
    )?;
    let mut cases = sample_test_set(&split.test_pool, &config.categories, &config.sampling);
    let normalizer = load_normalizer(config)?;
    let overrides = match &config.gold_overrides {
        Some(path) => GoldOverrides::from_file(path)?,
        None => GoldOverrides::default(),
    };
    let report = augment_gold(&mut cases, &normalizer, &overrides);

    let mut cell_counts: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for (category, attributes) in &config.categories {
        for attribute in attributes {
            cell_counts.insert((category.clone(), attribute.clone()), (0, 0));
        }
    }
    for case in &cases {
        let key = (case.record.category.clone(), case.target_attribute.clone());
        let entry = cell_counts.entry(key).or_insert((0, 0));
        if case.is_positive() {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    let mut warnings = report.warnings.clone();
    for ((category, attribute), (pos, neg)) in &cell_counts {
        if pos + neg == 0 {
            warnings.push(format!(
                "cell {category}/{attribute}: no test cases sampled"
            ));
        }
    }
    let cells: Vec<CellCount> = cell_counts
        .into_iter()
        .map(
            |((category, attribute), (positives, negatives))| CellCount {
                category,
                attribute,
                positives,
                negatives,
            },
        )
        .collect();

    std::fs::create_dir_all(&config.output_dir)
        .map_err(io_err("cannot create output directory"))?;
    write_jsonl(&OutputPaths::test_set(config), &cases)?;
    let manifest = Manifest {
        records_file: records_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| records_path.display().to_string()),
        records_digest: file_digest(records_path)?,
        split: SplitSummary {
            ratio: config.dataset.split.ratio,
            seed: config.dataset.split.seed,
            train: split.train.len(),
            validation: split.validation.len(),
            test_pool: split.test_pool.len(),
        },
        sampling: SamplingSummary {
            max_positive_per_cell: config.sampling.max_positive_per_cell,
            max_negative_per_cell: config.sampling.max_negative_per_cell,
            seed: config.sampling.seed,
        },
        test_cases: cases.len(),
        cells,
        normalization: NormalizationSummary {
            positive_cases: report.positive_cases,
            augmented_cases: report.augmented_cases,
            coverage: report.coverage,
        },
        warnings: warnings.clone(),
    };
    write_json_pretty(&OutputPaths::manifest(config), &manifest)?;
    Ok(PrepareSummary {
        test_cases: cases.len(),
        coverage: report.coverage,
        warnings,
    })
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(format!("cannot read {}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let body = serde_json::to_string_pretty(value).map_err(|source| PipelineError::Json {
        context: format!("cannot serialize {}", path.display()),
        source,
    })?;
    std::fs::write(path, body + "\n").map_err(io_err(format!("cannot write {}", path.display())))
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// One archive line: the raw outcome for one test case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub case_id: String,
    pub prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<CompletionResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub total_cases: usize,
    pub completed: usize,
    pub errors: usize,
    pub cached: usize,
    pub backend_calls: u64,
    pub warnings: Vec<String>,
}

struct PreparedCase {
    index: usize,
    case_id: String,
    request: CompletionRequest,
    prompt_hash: String,
}

/// Executes one configured run over the prepared test set.
///
/// Prompts are built deterministically, completions go through the response
/// cache with bounded concurrency, and every outcome (response or error) is
/// appended to the run archive as it lands. Existing archive entries are
/// skipped, so an interrupted run resumes where it stopped; the final archive
/// is rewritten in test-set order.
pub fn run(
    config: &ExperimentConfig,
    run_name: &str,
    backend_override: Option<&str>,
) -> Result<RunSummary, PipelineError> {
    let run_cfg = config.run(run_name)?;
    let backend_name = backend_override.unwrap_or(&run_cfg.backend);
    let backend_cfg = config.backend_config(backend_name)?;
    let backend = backend_cfg.build()?;

    let test_set_path = OutputPaths::test_set(config);
    if !test_set_path.exists() {
        return Err(PipelineError::MissingInput {
            path: test_set_path,
            hint: "run `prepare` first".into(),
        });
    }
    let cases = load_test_cases(&test_set_path)?;
    if cases.is_empty() {
        return Err(PipelineError::EmptyTestSet);
    }

    let archive_path = OutputPaths::archive(config, run_name);
    std::fs::create_dir_all(archive_path.parent().expect("archive path has a parent"))
        .map_err(io_err("cannot create run directory"))?;
    let mut existing = read_archive(&archive_path);
    let known_ids: Vec<String> = cases.iter().map(|c| c.case_id()).collect();
    existing.retain(|id, _| {
        let keep = known_ids.contains(id);
        if !keep {
            log::warn!("dropping archive entry for unknown case {id}");
        }
        keep
    });

    let mut warnings = Vec::new();
    let prepared = build_prompts(config, run_cfg, &cases, &existing, &mut warnings)?;

    let mut error_entries: Vec<(usize, ArchiveEntry)> = Vec::new();
    let mut work: VecDeque<PreparedCase> = VecDeque::new();
    let mut followers: Vec<PreparedCase> = Vec::new();
    let mut seen_keys: std::collections::HashSet<String> = std::collections::HashSet::new();
    for item in prepared {
        match item {
            // cases sharing an identical request ride on the leader's cache
            // entry instead of racing it to the backend
            Ok(p) if seen_keys.insert(p.request.cache_key()) => work.push_back(p),
            Ok(p) => followers.push(p),
            Err((index, entry)) => error_entries.push((index, entry)),
        }
    }

    let appender = ArchiveAppender::open(&archive_path)?;
    for (_, entry) in &error_entries {
        appender.append(entry)?;
    }

    let workers = backend_cfg.max_concurrent_requests.min(work.len().max(1));
    let queue = Mutex::new(work);
    let (tx, rx) = mpsc::channel::<(usize, ArchiveEntry)>();
    let mut completed_entries: Vec<(usize, ArchiveEntry)> = error_entries;
    std::thread::scope(|scope| -> Result<(), PipelineError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            let backend = &backend;
            let cache_dir = &config.cache_dir;
            scope.spawn(move || loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some(item) = next else { break };
                let entry = match cached_complete(&item.request, backend, cache_dir) {
                    Ok(response) => ArchiveEntry {
                        case_id: item.case_id,
                        prompt_hash: item.prompt_hash,
                        response: Some(response),
                        error: None,
                    },
                    Err(err) => ArchiveEntry {
                        case_id: item.case_id,
                        prompt_hash: item.prompt_hash,
                        response: None,
                        error: Some(err.to_string()),
                    },
                };
                if tx.send((item.index, entry)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (index, entry) in rx.iter() {
            appender.append(&entry)?;
            completed_entries.push((index, entry));
        }
        Ok(())
    })?;

    for item in followers {
        let entry = match cached_complete(&item.request, &backend, &config.cache_dir) {
            Ok(response) => ArchiveEntry {
                case_id: item.case_id,
                prompt_hash: item.prompt_hash,
                response: Some(response),
                error: None,
            },
            Err(err) => ArchiveEntry {
                case_id: item.case_id,
                prompt_hash: item.prompt_hash,
                response: None,
                error: Some(err.to_string()),
            },
        };
        appender.append(&entry)?;
        completed_entries.push((item.index, entry));
    }

    // canonical rewrite: existing + new, in test-set order
    let mut by_id: BTreeMap<String, ArchiveEntry> = existing;
    for (_, entry) in completed_entries {
        by_id.insert(entry.case_id.clone(), entry);
    }
    let ordered: Vec<&ArchiveEntry> = known_ids.iter().filter_map(|id| by_id.get(id)).collect();
    rewrite_archive(&archive_path, &ordered)?;

    let completed = ordered.iter().filter(|e| e.response.is_some()).count();
    let cached = ordered
        .iter()
        .filter(|e| e.response.as_ref().map(|r| r.from_cache).unwrap_or(false))
        .count();
    Ok(RunSummary {
        total_cases: cases.len(),
        completed,
        errors: cases.len() - completed,
        cached,
        backend_calls: backend.call_count(),
        warnings,
    })
}

type PromptOutcome = Result<PreparedCase, (usize, ArchiveEntry)>;

/// Builds the exact prompt and completion request a run would issue for a
/// test case. This is the single source of prompts for `run`, so external
/// tooling (stub-script generation, debugging) sees byte-identical text.
pub struct PromptPlan {
    prompter: Prompter,
    run: RunConfig,
    train: Vec<crate::corpus::ProductRecord>,
    normalizer: Normalizer,
    categories: crate::corpus::CategoryMap,
}

impl PromptPlan {
    pub fn new(
        config: &ExperimentConfig,
        run_cfg: &RunConfig,
    ) -> Result<PromptPlan, PipelineError> {
        let templates = load_templates(config)?;
        let prompter = Prompter::new(templates)
            .with_unknown_marker(run_cfg.unknown_marker.clone())
            .with_layout(run_cfg.message_layout);
        let train = if run_cfg.shots > 0 {
            let records = load_records(&config.dataset.records)?;
            split_dataset(
                &records,
                config.dataset.split.ratio,
                config.dataset.split.seed,
            )?
            .train
        } else {
            Vec::new()
        };
        Ok(PromptPlan {
            prompter,
            run: run_cfg.clone(),
            train,
            normalizer: load_normalizer(config)?,
            categories: config.categories.clone(),
        })
    }

    /// The assembled prompt for one case, plus selection warnings.
    pub fn prompt_for(
        &self,
        case: &TestCase,
    ) -> Result<(AssembledPrompt, Vec<String>), PromptError> {
        let attribute = if self.run.design.is_open() {
            None
        } else {
            Some(case.target_attribute.as_str())
        };
        if self.run.shots == 0 {
            let prompt = self
                .prompter
                .zero_shot(self.run.design, &case.record.title, attribute)?;
            let notes = prompt.notes.clone();
            return Ok((prompt.with_query_id(&case.record.product_id), notes));
        }
        let kind = if self.run.design.is_open() {
            DemoKind::Open
        } else {
            DemoKind::Closed
        };
        let ctx = DemoContext {
            normalizer: &self.normalizer,
            unknown_marker: &self.run.unknown_marker,
            categories: &self.categories,
        };
        let selection = select_demonstrations(
            &self.train,
            case,
            self.run.shots,
            demo_seed_for_case(self.run.demo_seed, &case.case_id()),
            kind,
            &ctx,
        )?;
        let prompt = self.prompter.few_shot(
            self.run.design,
            &selection.demos,
            &case.record.title,
            attribute,
        )?;
        let mut warnings = selection.warnings;
        warnings.extend(prompt.notes.iter().cloned());
        Ok((prompt.with_query_id(&case.record.product_id), warnings))
    }

    /// The completion request for an assembled prompt.
    pub fn request_for(&self, prompt: &AssembledPrompt) -> CompletionRequest {
        let mut request = CompletionRequest::new(
            self.run.model.clone(),
            self.run.temperature,
            prompt.messages.clone(),
        );
        request.max_output_tokens = self.run.max_output_tokens;
        request
    }
}

fn build_prompts(
    config: &ExperimentConfig,
    run_cfg: &RunConfig,
    cases: &[TestCase],
    existing: &BTreeMap<String, ArchiveEntry>,
    warnings: &mut Vec<String>,
) -> Result<Vec<PromptOutcome>, PipelineError> {
    let plan = PromptPlan::new(config, run_cfg)?;
    let mut outcomes = Vec::new();
    for (index, case) in cases.iter().enumerate() {
        let case_id = case.case_id();
        if existing.contains_key(&case_id) {
            continue;
        }
        match plan.prompt_for(case) {
            Ok((prompt, notes)) => {
                warnings.extend(notes);
                let request = plan.request_for(&prompt);
                let prompt_hash = request.prompt_hash();
                outcomes.push(Ok(PreparedCase {
                    index,
                    case_id,
                    request,
                    prompt_hash,
                }));
            }
            Err(err) => {
                outcomes.push(Err((
                    index,
                    ArchiveEntry {
                        case_id,
                        prompt_hash: String::new(),
                        response: None,
                        error: Some(format!("prompt assembly failed: {err}")),
                    },
                )));
            }
        }
    }
    Ok(outcomes)
}

struct ArchiveAppender {
    file: Mutex<std::fs::File>,
}

impl ArchiveAppender {
    fn open(path: &Path) -> Result<ArchiveAppender, PipelineError> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(format!("cannot open archive {}", path.display())))?;
        Ok(ArchiveAppender {
            file: Mutex::new(file),
        })
    }

    fn append(&self, entry: &ArchiveEntry) -> Result<(), PipelineError> {
        let line = serde_json::to_string(entry).expect("archive entry serializes");
        let mut file = self.file.lock().expect("archive lock");
        writeln!(file, "{line}").map_err(io_err("cannot append to archive"))?;
        file.flush().map_err(io_err("cannot flush archive"))
    }
}

/// Reads whatever valid entries an archive holds; a trailing partial line
/// (crash artifact) is skipped with a warning.
fn read_archive(path: &Path) -> BTreeMap<String, ArchiveEntry> {
    let mut entries = BTreeMap::new();
    let Ok(text) = std::fs::read_to_string(path) else {
        return entries;
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ArchiveEntry>(line) {
            Ok(entry) => {
                entries.insert(entry.case_id.clone(), entry);
            }
            Err(err) => log::warn!("skipping unreadable archive line: {err}"),
        }
    }
    entries
}

fn rewrite_archive(path: &Path, entries: &[&ArchiveEntry]) -> Result<(), PipelineError> {
    let dir = path.parent().expect("archive path has a parent");
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).map_err(io_err("cannot create archive temp file"))?;
    for entry in entries {
        let line = serde_json::to_string(entry).expect("archive entry serializes");
        writeln!(tmp, "{line}").map_err(io_err("cannot write archive"))?;
    }
    tmp.persist(path)
        .map_err(|e| PipelineError::Io {
            context: format!("cannot persist archive {}", path.display()),
            source: e.error,
        })
        .map(|_| ())
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeMetrics {
    /// "closed" for closed designs, else the open evaluation mode.
    pub mode: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseStats {
    pub pairs_total: usize,
    pub unparsed_lines: usize,
    pub duplicate_attributes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerAttributeCounts {
    pub category: String,
    pub attribute: String,
    #[serde(flatten)]
    pub counts: JudgementCounts,
}

/// `metrics.json` for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub configuration: String,
    pub design: String,
    pub shots: usize,
    pub modes: Vec<ModeMetrics>,
    pub error_cases: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_stats: Option<ParseStats>,
    pub per_attribute: Vec<PerAttributeCounts>,
}

/// `cost.json` for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostFile {
    #[serde(flatten)]
    pub report: CostReport,
    pub cost_per_title_cents: String,
}

#[derive(Debug)]
pub struct ScoreSummary {
    pub metrics: Metrics,
    pub cost_per_title_cents: String,
    pub error_cases: usize,
}

/// Parses a run's archive, judges every case and writes `metrics.json` and
/// `cost.json`.
pub fn score(
    config: &ExperimentConfig,
    run_name: &str,
    both_modes: bool,
) -> Result<ScoreSummary, PipelineError> {
    let run_cfg = config.run(run_name)?;
    let test_set_path = OutputPaths::test_set(config);
    if !test_set_path.exists() {
        return Err(PipelineError::MissingInput {
            path: test_set_path,
            hint: "run `prepare` first".into(),
        });
    }
    let cases = load_test_cases(&test_set_path)?;
    let archive_path = OutputPaths::archive(config, run_name);
    if !archive_path.exists() {
        return Err(PipelineError::MissingInput {
            path: archive_path,
            hint: "run `run` first".into(),
        });
    }
    let archive = read_archive(&archive_path);
    if archive.values().all(|e| e.response.is_none()) {
        return Err(PipelineError::EmptyArchive { path: archive_path });
    }

    let matcher = Matcher {
        case_insensitive: run_cfg.case_insensitive_match,
    };
    let mut error_cases = 0usize;
    let mut responses: Vec<CompletionResponse> = Vec::new();
    let mut primary: Vec<(String, String, Judgement)> = Vec::new();
    let mut secondary: Vec<Judgement> = Vec::new();
    let mut parse_stats = ParseStats::default();

    for case in &cases {
        let entry = archive.get(&case.case_id());
        let Some(response) = entry.and_then(|e| e.response.as_ref()) else {
            error_cases += 1;
            continue;
        };
        responses.push(response.clone());
        let category = case.record.category.clone();
        if run_cfg.design.is_open() {
            let parsed = parse_open(&response.text);
            parse_stats.pairs_total += parsed.pairs.len();
            parse_stats.unparsed_lines += parsed.unparsed_lines;
            parse_stats.duplicate_attributes += parsed.duplicate_attributes.len();
            let gold = configured_annotations(config, case);
            for (attribute, judgement) in judge_open(&parsed, &gold, run_cfg.open_mode, &matcher) {
                primary.push((category.clone(), attribute, judgement));
            }
            if both_modes {
                let other = match run_cfg.open_mode {
                    OpenEvalMode::Restricted => OpenEvalMode::Unrestricted,
                    OpenEvalMode::Unrestricted => OpenEvalMode::Restricted,
                };
                secondary.extend(
                    judge_open(&parsed, &gold, other, &matcher)
                        .into_iter()
                        .map(|(_, j)| j),
                );
            }
        } else {
            let answer = parse_closed(&response.text, &run_cfg.unknown_marker);
            let gold = GoldClosed::from_annotation(case.gold());
            let judgement = judge_closed(&answer, gold, &matcher);
            primary.push((category, case.target_attribute.clone(), judgement));
        }
    }

    if responses.is_empty() {
        return Err(PipelineError::EmptyArchive { path: archive_path });
    }

    let metrics = compute_metrics(primary.iter().map(|(_, _, j)| *j));
    let mut modes = vec![ModeMetrics {
        mode: if run_cfg.design.is_open() {
            run_cfg.open_mode.as_str().to_string()
        } else {
            "closed".to_string()
        },
        metrics: metrics.clone(),
    }];
    if both_modes && run_cfg.design.is_open() {
        let other = match run_cfg.open_mode {
            OpenEvalMode::Restricted => OpenEvalMode::Unrestricted,
            OpenEvalMode::Unrestricted => OpenEvalMode::Restricted,
        };
        modes.push(ModeMetrics {
            mode: other.as_str().to_string(),
            metrics: compute_metrics(secondary.iter().copied()),
        });
    }

    let mut per_attribute: BTreeMap<(String, String), JudgementCounts> = BTreeMap::new();
    for (category, attribute, judgement) in &primary {
        per_attribute
            .entry((category.clone(), attribute.clone()))
            .or_default()
            .add(*judgement);
    }
    let per_attribute: Vec<PerAttributeCounts> = per_attribute
        .into_iter()
        .map(|((category, attribute), counts)| PerAttributeCounts {
            category,
            attribute,
            counts,
        })
        .collect();

    let titles = responses.len() as u64;
    let cost = aggregate_cost(&responses, config.price_per_1k, titles);
    let metrics_file = MetricsFile {
        configuration: run_name.to_string(),
        design: run_cfg.design.label().to_string(),
        shots: run_cfg.shots,
        modes,
        error_cases,
        parse_stats: run_cfg.design.is_open().then_some(parse_stats),
        per_attribute,
    };
    let cost_file = CostFile {
        cost_per_title_cents: cost.cost_per_title_cents(),
        report: cost,
    };
    write_json_pretty(&OutputPaths::metrics(config, run_name), &metrics_file)?;
    write_json_pretty(&OutputPaths::cost(config, run_name), &cost_file)?;
    Ok(ScoreSummary {
        metrics,
        cost_per_title_cents: cost_file.cost_per_title_cents,
        error_cases,
    })
}

/// The record's gold annotations restricted to the configured attribute
/// schema for its category.
fn configured_annotations(
    config: &ExperimentConfig,
    case: &TestCase,
) -> Vec<crate::corpus::AttributeAnnotation> {
    match config.categories.get(&case.record.category) {
        Some(list) => case
            .record
            .annotations
            .iter()
            .filter(|a| list.contains(&a.attribute))
            .cloned()
            .collect(),
        None => case.record.annotations.clone(),
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub configuration: String,
    pub shots: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Percentage points against the reference run; `None` renders blank.
    pub delta_f1: Option<f64>,
    pub cost_cents_per_title: String,
}

#[derive(Debug)]
pub struct ReportSummary {
    pub rows: Vec<ReportRow>,
    pub reference: String,
    pub table: String,
}

/// Renders the comparison table over previously scored runs and writes
/// `report.csv` and `report.txt`.
pub fn report(
    config: &ExperimentConfig,
    run_names: &[String],
) -> Result<ReportSummary, PipelineError> {
    if run_names.is_empty() {
        return Err(ConfigError::Invalid("report needs at least one run name".into()).into());
    }
    let reference = config
        .report
        .reference
        .clone()
        .unwrap_or_else(|| run_names[0].clone());

    let mut loaded: BTreeMap<String, (MetricsFile, CostFile)> = BTreeMap::new();
    let mut load = |name: &String| -> Result<(), PipelineError> {
        if loaded.contains_key(name) {
            return Ok(());
        }
        let metrics_path = OutputPaths::metrics(config, name);
        if !metrics_path.exists() {
            return Err(PipelineError::MissingInput {
                path: metrics_path,
                hint: format!("run `score {name}` first"),
            });
        }
        let metrics: MetricsFile = read_json(&metrics_path)?;
        let cost: CostFile = read_json(&OutputPaths::cost(config, name))?;
        loaded.insert(name.clone(), (metrics, cost));
        Ok(())
    };
    for name in run_names {
        load(name)?;
    }
    load(&reference)?;
    let reference_f1 = loaded[&reference].0.modes[0].metrics.f1;

    let mut rows = Vec::new();
    for name in run_names {
        let (metrics_file, cost_file) = &loaded[name];
        let m = &metrics_file.modes[0].metrics;
        let delta = if name == &reference || run_names.len() == 1 {
            None
        } else {
            Some((m.f1 - reference_f1) * 100.0)
        };
        rows.push(ReportRow {
            configuration: name.clone(),
            shots: metrics_file.shots,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            delta_f1: delta,
            cost_cents_per_title: cost_file.cost_per_title_cents.clone(),
        });
    }

    let csv = render_csv(&rows);
    let table = render_table(&rows, &reference);
    std::fs::write(OutputPaths::report_csv(config), &csv)
        .map_err(io_err("cannot write report.csv"))?;
    std::fs::write(OutputPaths::report_txt(config), &table)
        .map_err(io_err("cannot write report.txt"))?;
    Ok(ReportSummary {
        rows,
        reference,
        table,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text =
        std::fs::read_to_string(path).map_err(io_err(format!("cannot read {}", path.display())))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        context: format!("cannot parse {}", path.display()),
        source,
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn delta_str(delta: Option<f64>) -> String {
    match delta {
        Some(d) => format!("{d:+.2}"),
        None => String::new(),
    }
}

fn render_csv(rows: &[ReportRow]) -> String {
    let mut out =
        String::from("configuration,shots,precision,recall,f1,delta_f1,cost_cents_per_title\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.configuration,
            row.shots,
            pct(row.precision),
            pct(row.recall),
            pct(row.f1),
            delta_str(row.delta_f1),
            row.cost_cents_per_title,
        ));
    }
    out
}

fn render_table(rows: &[ReportRow], reference: &str) -> String {
    let header = [
        "Configuration".to_string(),
        "Shots".to_string(),
        "P".to_string(),
        "R".to_string(),
        "F1".to_string(),
        format!("dF1 vs {reference}"),
        "Cost (c)/Title".to_string(),
    ];
    let mut body: Vec<[String; 7]> = Vec::new();
    for row in rows {
        body.push([
            row.configuration.clone(),
            row.shots.to_string(),
            pct(row.precision),
            pct(row.recall),
            pct(row.f1),
            if row.delta_f1.is_some() {
                delta_str(row.delta_f1)
            } else {
                "-".to_string()
            },
            row.cost_cents_per_title.clone(),
        ]);
    }
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &body {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_row = |cells: &[String]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{:<width$}", c, width = widths[i])
                } else {
                    format!("{:>width$}", c, width = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = render_row(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out
}
