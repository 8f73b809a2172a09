//! Benchmark harness: JSONL dataset loading with a reject log, k-shot
//! exemplar assembly, strategy evaluation over a worker pool, and report
//! construction.

pub mod parajumble;

pub use parajumble::{make_parajumble, ParajumbleError};

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Backend;
use crate::iep::{Answer, Problem, TaskKind};
use crate::prompts::{context_block, ExemplarPair, TemplateSet};
use crate::strategy::{run_strategy, ReasoningTrace, RunContext, StrategyName, StrategySpec};

/// Fraction of malformed lines a dataset may contain before loading fails
/// outright rather than silently evaluating a fragment.
pub const REJECT_TOLERANCE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{rejected} of {total} dataset lines are malformed (tolerance {REJECT_TOLERANCE})")]
    TooManyRejects { rejected: usize, total: usize },
    #[error("dataset contains no usable problems")]
    EmptyDataset,
    #[error("problem {id} has no gold answer")]
    MissingGold { id: String },
    #[error("exemplar pool has {have} usable items, need {need}")]
    ExemplarPoolTooSmall { need: usize, have: usize },
    #[error("aborted after {consecutive} consecutive transport failures")]
    TransportAborted { consecutive: u32 },
    #[error("no strategies requested")]
    NoStrategies,
    #[error("no problems selected")]
    NoProblems,
}

/// One dataset line that failed validation, kept for the run manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub line_number: usize,
    pub reason: String,
}

/// A loaded problem plus its optional worked rationale (exemplar material).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub problem: Problem,
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub items: Vec<DatasetItem>,
    pub rejects: Vec<RejectedLine>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    id: String,
    task: String,
    #[serde(default)]
    context: String,
    question: String,
    #[serde(default)]
    options: Option<IndexMap<String, String>>,
    #[serde(default)]
    sentences: Option<IndexMap<String, String>>,
    answer: serde_json::Value,
    #[serde(default)]
    rationale: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

fn normalize_labels(map: IndexMap<String, String>) -> Result<IndexMap<String, String>, String> {
    let mut out = IndexMap::new();
    for (label, text) in map {
        let norm = label.trim().to_ascii_uppercase();
        if norm.len() != 1 || !norm.chars().all(|c| c.is_ascii_uppercase()) {
            return Err(format!("label `{label}` is not a single letter"));
        }
        if text.trim().is_empty() {
            return Err(format!("option {norm} has empty text"));
        }
        if out.insert(norm.clone(), text.trim().to_string()).is_some() {
            return Err(format!("duplicate label {norm}"));
        }
    }
    Ok(out)
}

fn parse_answer(value: &serde_json::Value, kind: TaskKind, labels: &[String]) -> Result<Answer, String> {
    match kind {
        TaskKind::MultipleChoice => {
            let s = value.as_str().ok_or("answer must be an option label string")?;
            let label = s.trim().to_ascii_uppercase();
            if !labels.contains(&label) {
                return Err(format!("answer label {label} not among options"));
            }
            Ok(Answer::MultipleChoice(label))
        }
        TaskKind::Boolean => match value {
            serde_json::Value::Bool(b) => Ok(Answer::Boolean(*b)),
            serde_json::Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                "yes" | "true" => Ok(Answer::Boolean(true)),
                "no" | "false" => Ok(Answer::Boolean(false)),
                other => Err(format!("`{other}` is not a yes/no answer")),
            },
            _ => Err("answer must be a boolean or yes/no string".into()),
        },
        TaskKind::Ordering => {
            let arr = value.as_array().ok_or("answer must be an array of labels")?;
            let mut order = Vec::with_capacity(arr.len());
            for v in arr {
                let s = v.as_str().ok_or("ordering answer entries must be strings")?;
                order.push(s.trim().to_ascii_uppercase());
            }
            let mut sorted = order.clone();
            sorted.sort();
            let mut want = labels.to_vec();
            want.sort();
            if sorted != want {
                return Err("ordering answer is not a permutation of the labels".into());
            }
            Ok(Answer::Ordering(order))
        }
        TaskKind::FreeForm => {
            let s = value.as_str().ok_or("answer must be a string")?;
            if s.trim().is_empty() {
                return Err("answer is empty".into());
            }
            Ok(Answer::FreeForm(s.trim().to_string()))
        }
    }
}

fn parse_line(line: &str) -> Result<DatasetItem, String> {
    let raw: RawLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.id.trim().is_empty() {
        return Err("id is empty".into());
    }
    if raw.question.trim().is_empty() {
        return Err("question is empty".into());
    }
    let kind = TaskKind::parse(&raw.task).ok_or_else(|| format!("unknown task `{}`", raw.task))?;
    if raw.options.is_some() && raw.sentences.is_some() {
        return Err("line has both options and sentences".into());
    }
    let options = match kind {
        TaskKind::MultipleChoice => {
            let map = raw.options.ok_or("multiple_choice line has no options")?;
            let map = normalize_labels(map)?;
            if map.len() < 2 {
                return Err("multiple_choice needs at least 2 options".into());
            }
            map
        }
        TaskKind::Ordering => {
            let map = raw
                .sentences
                .or(raw.options)
                .ok_or("ordering line has no sentences")?;
            let map = normalize_labels(map)?;
            if map.len() < 2 {
                return Err("ordering needs at least 2 sentences".into());
            }
            map
        }
        TaskKind::Boolean | TaskKind::FreeForm => {
            if raw.options.is_some() || raw.sentences.is_some() {
                return Err(format!("{kind} line must not carry options"));
            }
            IndexMap::new()
        }
    };
    let labels: Vec<String> = options.keys().cloned().collect();
    let gold = parse_answer(&raw.answer, kind, &labels)?;
    let rationale = raw.rationale.filter(|r| !r.trim().is_empty());
    Ok(DatasetItem {
        problem: Problem {
            id: raw.id.trim().to_string(),
            task_kind: kind,
            context: raw.context.trim().to_string(),
            question: raw.question.trim().to_string(),
            options,
            gold: Some(gold),
            source: raw.source.unwrap_or_default(),
        },
        rationale,
    })
}

/// Parses a JSONL dataset. Malformed lines are rejected with a reason and
/// the load fails when more than [`REJECT_TOLERANCE`] of the lines are bad,
/// so a mangled file cannot quietly shrink a benchmark.
pub fn parse_dataset(text: &str) -> Result<LoadedDataset, BenchError> {
    let mut items: Vec<DatasetItem> = Vec::new();
    let mut rejects = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    let mut total = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        total += 1;
        match parse_line(line) {
            Ok(item) => {
                if !seen_ids.insert(item.problem.id.clone()) {
                    rejects.push(RejectedLine {
                        line_number: idx + 1,
                        reason: format!("duplicate id {}", item.problem.id),
                    });
                } else {
                    items.push(item);
                }
            }
            Err(reason) => rejects.push(RejectedLine { line_number: idx + 1, reason }),
        }
    }
    if total == 0 || items.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    if rejects.len() as f64 / total as f64 > REJECT_TOLERANCE {
        return Err(BenchError::TooManyRejects { rejected: rejects.len(), total });
    }
    Ok(LoadedDataset { items, rejects })
}

pub fn load_dataset(path: &std::path::Path) -> Result<LoadedDataset, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

/// Serializes an item back to one dataset line (stable field layout).
pub fn dataset_line(item: &DatasetItem) -> String {
    let mut obj = serde_json::Map::new();
    let p = &item.problem;
    obj.insert("id".into(), p.id.clone().into());
    obj.insert("task".into(), p.task_kind.as_str().into());
    if !p.context.is_empty() {
        obj.insert("context".into(), p.context.clone().into());
    }
    obj.insert("question".into(), p.question.clone().into());
    if !p.options.is_empty() {
        let key = if p.task_kind == TaskKind::Ordering { "sentences" } else { "options" };
        let map: serde_json::Map<String, serde_json::Value> = p
            .options
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::from(v.clone())))
            .collect();
        obj.insert(key.into(), map.into());
    }
    let answer = match p.gold.as_ref().expect("dataset item has gold") {
        Answer::MultipleChoice(label) => serde_json::Value::from(label.clone()),
        Answer::Boolean(b) => serde_json::Value::from(*b),
        Answer::Ordering(order) => serde_json::Value::from(order.clone()),
        Answer::FreeForm(text) => serde_json::Value::from(text.clone()),
    };
    obj.insert("answer".into(), answer);
    if let Some(rationale) = &item.rationale {
        obj.insert("rationale".into(), rationale.clone().into());
    }
    if !p.source.is_empty() {
        obj.insert("source".into(), p.source.clone().into());
    }
    serde_json::Value::Object(obj).to_string()
}

/// Seeded selection: optional shuffle, then an optional head cut. The same
/// seed and limit always pick the same slice in the same order.
pub fn select_items(
    items: &[DatasetItem],
    seed: u64,
    shuffle: bool,
    limit: Option<usize>,
) -> Vec<DatasetItem> {
    let mut picked: Vec<DatasetItem> = items.to_vec();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        picked.shuffle(&mut rng);
    }
    if let Some(limit) = limit {
        picked.truncate(limit);
    }
    picked
}

fn normalize_free_form(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c| c == '"' || c == '\'')
        .trim_end_matches('.')
        .trim()
        .to_ascii_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Score {
    pub correct: bool,
    /// Prediction answered a different task shape than the gold.
    pub kind_mismatch: bool,
}

/// Exact-match scoring with light normalization: labels compare
/// case-insensitively, orderings element-wise, free-form after whitespace,
/// quote, case, and trailing-period normalization.
pub fn score_prediction(prediction: &Answer, gold: &Answer) -> Score {
    if prediction.kind() != gold.kind() {
        return Score { correct: false, kind_mismatch: true };
    }
    let correct = match (prediction, gold) {
        (Answer::MultipleChoice(a), Answer::MultipleChoice(b)) => a.eq_ignore_ascii_case(b),
        (Answer::Boolean(a), Answer::Boolean(b)) => a == b,
        (Answer::Ordering(a), Answer::Ordering(b)) => {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| x.eq_ignore_ascii_case(y))
        }
        (Answer::FreeForm(a), Answer::FreeForm(b)) => {
            normalize_free_form(a) == normalize_free_form(b)
        }
        _ => false,
    };
    Score { correct, kind_mismatch: false }
}

/// A worked example available for k-shot prompting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub user: String,
    pub assistant: String,
}

/// Items carrying a rationale become exemplars: the rendered problem on the
/// user side, the rationale plus a marker-formatted answer line on the
/// assistant side, teaching both the reasoning style and the reply format.
pub fn exemplar_pool(items: &[DatasetItem]) -> Vec<Exemplar> {
    items
        .iter()
        .filter_map(|item| {
            let rationale = item.rationale.as_deref()?;
            let gold = item.problem.gold.as_ref()?;
            let user = format!(
                "{}{}",
                context_block(&item.problem.context),
                item.problem.question_block()
            );
            let assistant = format!("{rationale}\nSo the final answer is: {gold}");
            Some(Exemplar { id: item.problem.id.clone(), user, assistant })
        })
        .collect()
}

/// FNV-1a, used to fold problem ids into per-problem exemplar seeds.
fn hash_id(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in id.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Samples `shots` exemplars without replacement, never including the
/// problem being solved. Deterministic in (pool order, seed).
pub fn assemble_kshot(
    pool: &[Exemplar],
    shots: usize,
    exclude_id: &str,
    seed: u64,
) -> Result<Vec<ExemplarPair>, BenchError> {
    if shots == 0 {
        return Ok(Vec::new());
    }
    let eligible: Vec<&Exemplar> = pool.iter().filter(|e| e.id != exclude_id).collect();
    if eligible.len() < shots {
        return Err(BenchError::ExemplarPoolTooSmall { need: shots, have: eligible.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, eligible.len(), shots);
    Ok(picked
        .iter()
        .map(|i| ExemplarPair {
            user: eligible[i].user.clone(),
            assistant: eligible[i].assistant.clone(),
        })
        .collect())
}

/// Knobs for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    pub shuffle: bool,
    pub limit: Option<usize>,
    /// Exemplars prepended per problem (0 disables few-shot prompting).
    pub shots: usize,
    /// Worker threads; 1 keeps strictly sequential, reproducible call order.
    pub concurrency: usize,
    /// Consecutive transport failures that abort the whole run.
    pub abort_after: u32,
    pub run_id: String,
    pub model_id: String,
    pub max_tokens: u32,
}

impl EvalConfig {
    pub fn new(run_id: impl Into<String>, model_id: impl Into<String>) -> Self {
        EvalConfig {
            seed: 0,
            shuffle: false,
            limit: None,
            shots: 0,
            concurrency: 1,
            abort_after: 3,
            run_id: run_id.into(),
            model_id: model_id.into(),
            max_tokens: 512,
        }
    }
}

/// One (strategy, problem) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem_id: String,
    pub task: TaskKind,
    pub strategy: StrategyName,
    pub correct: bool,
    pub prediction: Option<Answer>,
    pub gold: Answer,
    pub model_calls: u64,
    pub flags: Vec<String>,
    /// Present when the strategy failed outright; such rows count as
    /// errored, not merely incorrect.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Disjoint counts: `loaded = correct + incorrect + errored`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskCell {
    pub loaded: u64,
    pub correct: u64,
    pub incorrect: u64,
    pub errored: u64,
    pub model_calls: u64,
    /// correct / loaded; 0 when nothing loaded.
    pub accuracy: f64,
}

impl TaskCell {
    fn add(&mut self, row: &ResultRow) {
        self.loaded += 1;
        if row.error.is_some() {
            self.errored += 1;
        } else if row.correct {
            self.correct += 1;
        } else {
            self.incorrect += 1;
        }
        self.model_calls += row.model_calls;
        self.accuracy = self.correct as f64 / self.loaded as f64;
    }
}

impl Default for TaskCell {
    fn default() -> Self {
        TaskCell { loaded: 0, correct: 0, incorrect: 0, errored: 0, model_calls: 0, accuracy: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalsRow {
    pub strategy: StrategyName,
    /// A task kind, or "all" for the per-strategy rollup.
    pub task: String,
    #[serde(flatten)]
    pub cell: TaskCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub created_at: String,
    pub model_id: String,
    pub template_digest: String,
    pub seed: u64,
    pub shots: usize,
    pub strategies: Vec<StrategySpec>,
    pub rejects: Vec<RejectedLine>,
    pub totals: Vec<TotalsRow>,
    pub rows: Vec<ResultRow>,
}

impl EvalReport {
    /// Plain-text accuracy table, strategies by task.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:<16} {:>7} {:>8} {:>10} {:>8} {:>9} {:>7}\n",
            "strategy", "task", "loaded", "correct", "incorrect", "errored", "accuracy", "calls"
        ));
        for row in &self.totals {
            let c = &row.cell;
            out.push_str(&format!(
                "{:<10} {:<16} {:>7} {:>8} {:>10} {:>8} {:>9.3} {:>7}\n",
                row.strategy, row.task, c.loaded, c.correct, c.incorrect, c.errored,
                c.accuracy, c.model_calls
            ));
        }
        out
    }
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Traces for completed runs, in row order (errored runs have none).
    pub traces: Vec<ReasoningTrace>,
}

struct TaskSlot {
    strategy_idx: usize,
    item_idx: usize,
}

/// Runs every strategy over every selected problem and assembles the
/// report. Problems run on a pool of `cfg.concurrency` workers; rows are
/// ordered by (strategy, problem id) regardless of completion order. A run
/// of `cfg.abort_after` consecutive transport failures aborts the whole
/// evaluation, since every later call would most likely fail too.
pub fn evaluate(
    items: &[DatasetItem],
    strategies: &[StrategySpec],
    backend: &dyn Backend,
    judge_backend: Option<&dyn Backend>,
    templates: &TemplateSet,
    cfg: &EvalConfig,
) -> Result<EvalOutcome, BenchError> {
    if strategies.is_empty() {
        return Err(BenchError::NoStrategies);
    }
    let selected = select_items(items, cfg.seed, cfg.shuffle, cfg.limit);
    if selected.is_empty() {
        return Err(BenchError::NoProblems);
    }
    for item in &selected {
        if item.problem.gold.is_none() {
            return Err(BenchError::MissingGold { id: item.problem.id.clone() });
        }
    }
    let pool = exemplar_pool(items);
    if cfg.shots > 0 {
        // Surface an undersized pool before any model call is spent.
        let worst = selected
            .iter()
            .map(|i| pool.iter().filter(|e| e.id != i.problem.id).count())
            .min()
            .unwrap_or(0);
        if worst < cfg.shots {
            return Err(BenchError::ExemplarPoolTooSmall { need: cfg.shots, have: worst });
        }
    }

    let tasks: Vec<TaskSlot> = strategies
        .iter()
        .enumerate()
        .flat_map(|(strategy_idx, _)| {
            (0..selected.len()).map(move |item_idx| TaskSlot { strategy_idx, item_idx })
        })
        .collect();

    type TaskOutput = (ResultRow, Option<ReasoningTrace>);
    let results: Mutex<Vec<Option<TaskOutput>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next_task = AtomicUsize::new(0);
    let consecutive_failures = AtomicU32::new(0);
    let abort = AtomicBool::new(false);

    let run_one = |slot: &TaskSlot| -> Result<TaskOutput, BenchError> {
        let spec = &strategies[slot.strategy_idx];
        let item = &selected[slot.item_idx];
        let problem = &item.problem;
        let gold = problem.gold.clone().expect("checked above");

        let exemplars = assemble_kshot(
            &pool,
            cfg.shots,
            &problem.id,
            cfg.seed ^ hash_id(&problem.id),
        )?;
        let mut ctx = RunContext::new(backend, templates, &cfg.model_id);
        ctx.judge_backend = judge_backend;
        ctx.max_tokens = cfg.max_tokens;
        ctx.exemplars = &exemplars;

        let mut spec = spec.clone();
        spec.shots = cfg.shots;

        match run_strategy(problem, &spec, &ctx) {
            Ok((answer, trace)) => {
                consecutive_failures.store(0, Ordering::SeqCst);
                let score = score_prediction(&answer, &gold);
                let mut flags: Vec<String> = trace.flags.iter().cloned().collect();
                if score.kind_mismatch {
                    flags.push("kind_mismatch".to_string());
                }
                flags.sort();
                Ok((
                    ResultRow {
                        problem_id: problem.id.clone(),
                        task: problem.task_kind,
                        strategy: spec.name,
                        correct: score.correct,
                        prediction: Some(answer),
                        gold,
                        model_calls: trace.model_calls,
                        flags,
                        error: None,
                    },
                    Some(trace),
                ))
            }
            Err(err) => {
                if err.is_transport() {
                    let seen = consecutive_failures.fetch_add(1, Ordering::SeqCst) + 1;
                    if seen >= cfg.abort_after {
                        abort.store(true, Ordering::SeqCst);
                    }
                } else {
                    consecutive_failures.store(0, Ordering::SeqCst);
                }
                Ok((
                    ResultRow {
                        problem_id: problem.id.clone(),
                        task: problem.task_kind,
                        strategy: spec.name,
                        correct: false,
                        prediction: None,
                        gold,
                        model_calls: 0,
                        flags: vec![format!(
                            "error:{}",
                            if err.is_transport() { "transport" } else { "strategy" }
                        )],
                        error: Some(err.to_string()),
                    },
                    None,
                ))
            }
        }
    };

    let worker_error: Mutex<Option<BenchError>> = Mutex::new(None);
    let workers = cfg.concurrency.max(1).min(tasks.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let idx = next_task.fetch_add(1, Ordering::SeqCst);
                if idx >= tasks.len() {
                    return;
                }
                match run_one(&tasks[idx]) {
                    Ok(output) => {
                        results.lock().unwrap()[idx] = Some(output);
                    }
                    Err(e) => {
                        *worker_error.lock().unwrap() = Some(e);
                        abort.store(true, Ordering::SeqCst);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = worker_error.into_inner().unwrap() {
        return Err(e);
    }
    if abort.load(Ordering::SeqCst) {
        return Err(BenchError::TransportAborted {
            consecutive: consecutive_failures.load(Ordering::SeqCst),
        });
    }

    let mut outputs: Vec<TaskOutput> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("all tasks completed"))
        .collect();
    // Strategy order as requested, problems by id within each strategy.
    let strategy_rank: std::collections::HashMap<StrategyName, usize> = strategies
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name, i))
        .collect();
    outputs.sort_by(|(a, _), (b, _)| {
        strategy_rank[&a.strategy]
            .cmp(&strategy_rank[&b.strategy])
            .then_with(|| a.problem_id.cmp(&b.problem_id))
    });

    let mut totals: IndexMap<(StrategyName, String), TaskCell> = IndexMap::new();
    for (row, _) in &outputs {
        totals
            .entry((row.strategy, row.task.to_string()))
            .or_default()
            .add(row);
        totals
            .entry((row.strategy, "all".to_string()))
            .or_default()
            .add(row);
    }
    let totals: Vec<TotalsRow> = totals
        .into_iter()
        .map(|((strategy, task), cell)| TotalsRow { strategy, task, cell })
        .collect();

    let mut rows = Vec::with_capacity(outputs.len());
    let mut traces = Vec::new();
    for (row, trace) in outputs {
        rows.push(row);
        if let Some(trace) = trace {
            traces.push(trace);
        }
    }

    let report = EvalReport {
        run_id: cfg.run_id.clone(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        model_id: cfg.model_id.clone(),
        template_digest: templates.version_digest(),
        seed: cfg.seed,
        shots: cfg.shots,
        strategies: strategies.to_vec(),
        rejects: Vec::new(),
        totals,
        rows,
    };
    Ok(EvalOutcome { report, traces })
}
