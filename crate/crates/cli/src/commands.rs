//! Subcommand implementations and run-artifact writing.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use indexmap::IndexMap;
use serde_json::json;

use exclusion::backend::{Backend, BackendConfig, CachedBackend};
use exclusion::bench::{
    dataset_line, evaluate, load_dataset, make_parajumble as build_parajumble, DatasetItem,
    EvalConfig,
};
use exclusion::errorsim::{simulate_chain, simulate_elimination, ChainModel, SimResult};
use exclusion::iep::{Problem, TaskKind};
use exclusion::prompts::TemplateSet;
use exclusion::strategy::{run_strategy, RunContext, StrategyName, StrategySpec};

use crate::config::{resolve_backend, CliError, FileConfig, ResolvedRun};
use crate::{AskArgs, BenchArgs, CommonFlags, MakeArgs, SimulateArgs};

const STRATEGY_CHOICES: &str = "standard, cot, iep, iep-cot";
const TASK_CHOICES: &str = "multiple_choice, boolean, ordering, free_form";

fn run_err<E>(err: E) -> CliError
where
    E: std::error::Error + Send + Sync + 'static,
{
    CliError::Run(anyhow::Error::new(err))
}

/// Settings that resolve to a single value regardless of strategy.
struct Knobs {
    model: String,
    shots: usize,
    seed: u64,
    max_tokens: u32,
}

fn resolve_knobs(common: &CommonFlags, file: &FileConfig) -> Knobs {
    Knobs {
        model: common
            .model
            .clone()
            .or_else(|| file.model.clone())
            .unwrap_or_else(|| "default".to_string()),
        shots: common.shots.or(file.shots).unwrap_or(0),
        seed: common.seed.or(file.seed).unwrap_or(0),
        max_tokens: common.max_tokens.or(file.max_tokens).unwrap_or(512),
    }
}

fn parse_strategy(raw: &str, command: &'static str) -> Result<StrategyName, CliError> {
    StrategyName::parse(raw).ok_or_else(|| {
        CliError::usage(
            command,
            format!("unknown strategy `{raw}`; expected one of {STRATEGY_CHOICES}"),
        )
    })
}

fn build_specs(
    names: &[StrategyName],
    common: &CommonFlags,
    file: &FileConfig,
    shots: usize,
) -> Vec<StrategySpec> {
    names
        .iter()
        .map(|name| {
            let mut spec = StrategySpec::new(*name);
            if let Some(k) = common.k.or(file.k) {
                spec.plan_k = k;
            }
            if let Some(m) = common.max_premises.or(file.max_premises) {
                spec.max_premises = m;
            }
            if let Some(t) = common.temperature.or(file.temperature) {
                spec.temperature = t;
            }
            spec.shots = shots;
            spec
        })
        .collect()
}

fn resolve_judge(
    flag: Option<&str>,
    file: Option<&str>,
    model_id: &str,
    max_tokens: u32,
    command: &'static str,
) -> Result<Option<BackendConfig>, CliError> {
    let Some(selector) = flag.or(file) else { return Ok(None) };
    let mut cfg = BackendConfig::from_selector(selector, model_id)
        .map_err(|e| CliError::usage(command, e.to_string()))?;
    cfg.max_tokens = max_tokens;
    Ok(Some(cfg))
}

/// Builds the backend, wrapping it in the response cache when a cache
/// directory is configured.
fn build_backend(cfg: &BackendConfig, cache_dir: Option<&Path>) -> Result<Box<dyn Backend>, CliError> {
    let inner = cfg.build().map_err(run_err)?;
    match cache_dir {
        Some(dir) => {
            let cached = CachedBackend::new(Arc::from(inner), dir).map_err(run_err)?;
            Ok(Box::new(cached))
        }
        None => Ok(inner),
    }
}

fn load_templates(dir: Option<&Path>, command: &'static str) -> Result<TemplateSet, CliError> {
    match dir {
        Some(d) => TemplateSet::from_dir(d).map_err(|e| CliError::usage(command, e.to_string())),
        None => Ok(TemplateSet::builtin()),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Keeps ids safe as file names without losing their readable shape.
fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn ask(args: AskArgs) -> Result<(), CliError> {
    const CMD: &str = "ask";
    let file = FileConfig::load(args.common.config.as_deref(), CMD)?;
    let strategy = parse_strategy(&args.strategy, CMD)?;
    let task = TaskKind::parse(&args.task).ok_or_else(|| {
        CliError::usage(CMD, format!("unknown task `{}`; expected one of {TASK_CHOICES}", args.task))
    })?;

    let mut options: IndexMap<String, String> = IndexMap::new();
    for raw in &args.options {
        let Some((label, text)) = raw.split_once('=') else {
            return Err(CliError::usage(CMD, format!("bad --option `{raw}`; expected LABEL=TEXT")));
        };
        let label = label.trim().to_ascii_uppercase();
        let text = text.trim().to_string();
        if label.is_empty() || text.is_empty() {
            return Err(CliError::usage(CMD, format!("bad --option `{raw}`; expected LABEL=TEXT")));
        }
        if options.insert(label.clone(), text).is_some() {
            return Err(CliError::usage(CMD, format!("duplicate option label `{label}`")));
        }
    }
    match task {
        TaskKind::MultipleChoice | TaskKind::Ordering if options.len() < 2 => {
            return Err(CliError::usage(
                CMD,
                format!("{} questions need at least two --option values", task.as_str()),
            ));
        }
        TaskKind::Boolean | TaskKind::FreeForm if !options.is_empty() => {
            return Err(CliError::usage(
                CMD,
                format!("{} questions take no --option values", task.as_str()),
            ));
        }
        _ => {}
    }

    let knobs = resolve_knobs(&args.common, &file);
    let backend_cfg = resolve_backend(
        args.common.backend.as_deref(),
        file.backend.as_deref(),
        &knobs.model,
        knobs.max_tokens,
        CMD,
    )?;
    let judge_cfg = resolve_judge(
        args.common.judge_backend.as_deref(),
        file.judge_backend.as_deref(),
        &knobs.model,
        knobs.max_tokens,
        CMD,
    )?;
    let cache_dir = args.common.cache_dir.clone().or_else(|| file.cache_dir.clone());
    let template_dir = args.common.template_dir.clone().or_else(|| file.template_dir.clone());
    let templates = load_templates(template_dir.as_deref(), CMD)?;

    let specs = build_specs(&[strategy], &args.common, &file, knobs.shots);
    let spec = specs.into_iter().next().expect("one strategy");
    let resolved = ResolvedRun {
        command: CMD,
        strategies: vec![spec.clone()],
        backend: backend_cfg.clone(),
        judge_backend: judge_cfg.clone(),
        dataset: None,
        cache_dir: cache_dir.clone(),
        out_dir: file.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs")),
        template_dir,
        seed: knobs.seed,
        shuffle: false,
        limit: None,
        shots: knobs.shots,
        concurrency: 1,
        abort_after: 3,
        max_tokens: knobs.max_tokens,
    };
    let digest = resolved.digest();

    let backend = build_backend(&backend_cfg, cache_dir.as_deref())?;
    let judge = match &judge_cfg {
        Some(cfg) => Some(build_backend(cfg, cache_dir.as_deref())?),
        None => None,
    };

    let problem = Problem {
        id: "ask".to_string(),
        task_kind: task,
        context: args.context.clone().unwrap_or_default(),
        question: args.question.clone(),
        options,
        gold: None,
        source: "cli".to_string(),
    };

    let mut ctx = RunContext::new(backend.as_ref(), &templates, &knobs.model);
    ctx.judge_backend = judge.as_deref();
    ctx.max_tokens = knobs.max_tokens;
    let (answer, trace) = run_strategy(&problem, &spec, &ctx).map_err(run_err)?;

    println!("answer: {answer}");
    println!("strategy: {}", spec.name);
    println!("model calls: {}", trace.model_calls);
    if !trace.flags.is_empty() {
        let flags: Vec<&str> = trace.flags.iter().map(String::as_str).collect();
        println!("flags: {}", flags.join(", "));
    }
    if let Some(path) = &args.trace_out {
        let body = json!({ "config_digest": digest, "config": resolved, "trace": trace });
        write_json(path, &body)?;
        println!("trace: {}", path.display());
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    const CMD: &str = "bench";
    let file = FileConfig::load(args.common.config.as_deref(), CMD)?;

    let mut names: Vec<StrategyName> = Vec::new();
    if args.strategy.is_empty() {
        names = file.strategy_names(CMD)?;
    } else {
        for raw in &args.strategy {
            names.push(parse_strategy(raw, CMD)?);
        }
    }
    if names.is_empty() {
        names.push(StrategyName::Iep);
    }

    let dataset = args.dataset.clone().or_else(|| file.dataset.clone()).ok_or_else(|| {
        CliError::usage(CMD, "no dataset; pass --dataset <FILE> or set \"dataset\" in the config file")
    })?;

    let knobs = resolve_knobs(&args.common, &file);
    let shuffle = args.shuffle || file.shuffle.unwrap_or(false);
    let limit = args.limit.or(file.limit);
    let concurrency = args.concurrency.or(file.concurrency).unwrap_or(1).max(1);
    let abort_after = args.abort_after.or(file.abort_after).unwrap_or(3);
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));

    let backend_cfg = resolve_backend(
        args.common.backend.as_deref(),
        file.backend.as_deref(),
        &knobs.model,
        knobs.max_tokens,
        CMD,
    )?;
    let judge_cfg = resolve_judge(
        args.common.judge_backend.as_deref(),
        file.judge_backend.as_deref(),
        &knobs.model,
        knobs.max_tokens,
        CMD,
    )?;
    let cache_dir = args.common.cache_dir.clone().or_else(|| file.cache_dir.clone());
    let template_dir = args.common.template_dir.clone().or_else(|| file.template_dir.clone());
    let templates = load_templates(template_dir.as_deref(), CMD)?;

    let specs = build_specs(&names, &args.common, &file, knobs.shots);
    let resolved = ResolvedRun {
        command: CMD,
        strategies: specs.clone(),
        backend: backend_cfg.clone(),
        judge_backend: judge_cfg.clone(),
        dataset: Some(dataset.clone()),
        cache_dir: cache_dir.clone(),
        out_dir: out_dir.clone(),
        template_dir,
        seed: knobs.seed,
        shuffle,
        limit,
        shots: knobs.shots,
        concurrency,
        abort_after,
        max_tokens: knobs.max_tokens,
    };
    let digest = resolved.digest();
    let run_id = resolved.run_id();

    let loaded = load_dataset(&dataset).map_err(run_err)?;
    let backend = build_backend(&backend_cfg, cache_dir.as_deref())?;
    let judge = match &judge_cfg {
        Some(cfg) => Some(build_backend(cfg, cache_dir.as_deref())?),
        None => None,
    };

    let mut cfg = EvalConfig::new(run_id.clone(), &knobs.model);
    cfg.seed = knobs.seed;
    cfg.shuffle = shuffle;
    cfg.limit = limit;
    cfg.shots = knobs.shots;
    cfg.concurrency = concurrency;
    cfg.abort_after = abort_after;
    cfg.max_tokens = knobs.max_tokens;

    let outcome = evaluate(
        &loaded.items,
        &specs,
        backend.as_ref(),
        judge.as_deref(),
        &templates,
        &cfg,
    )
    .map_err(run_err)?;
    let mut report = outcome.report;
    report.rejects = loaded.rejects;

    let run_dir = out_dir.join(&run_id);
    let traces_dir = run_dir.join("traces");
    std::fs::create_dir_all(&traces_dir)
        .with_context(|| format!("creating {}", traces_dir.display()))
        .map_err(CliError::Run)?;
    write_json(&run_dir.join("config.json"), &json!({ "digest": digest, "config": resolved }))?;
    write_json(
        &run_dir.join("templates.json"),
        &json!({ "digest": templates.version_digest(), "templates": templates.snapshot() }),
    )?;
    let mut report_value = serde_json::to_value(&report).map_err(run_err)?;
    report_value["config_digest"] = json!(digest);
    write_json(&run_dir.join("report.json"), &report_value)?;
    std::fs::write(run_dir.join("report.txt"), report.text_table())
        .with_context(|| format!("writing {}", run_dir.join("report.txt").display()))
        .map_err(CliError::Run)?;
    for trace in &outcome.traces {
        let name = format!("{}-{}.json", trace.strategy.name, sanitize(&trace.problem_id));
        let body = json!({ "run_id": run_id, "config_digest": digest, "trace": trace });
        write_json(&traces_dir.join(name), &body)?;
    }

    print!("{}", report.text_table());
    println!();
    println!("run {run_id}");
    println!("artifacts: {}", run_dir.display());
    Ok(())
}

fn chain_cell(n: usize, error: f64, args: &SimulateArgs, col: usize) -> Result<SimResult, CliError> {
    if n <= 1 {
        // A one-step chain is just the given opening step.
        return Ok(SimResult { estimate: 1.0, trials: args.trials, std_error: 0.0, closed_form: 1.0 });
    }
    let mut model = ChainModel::uniform(n - 1, error);
    model.window = args.window.clamp(1, n - 1);
    let seed = args
        .seed
        .wrapping_add((n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(col as u64);
    simulate_chain(&model, args.trials, seed).map_err(run_err)
}

pub fn simulate_errors(args: SimulateArgs) -> Result<(), CliError> {
    const CMD: &str = "simulate-errors";
    if args.steps == 0 {
        return Err(CliError::usage(CMD, "--steps must be at least 1"));
    }
    if args.trials == 0 {
        return Err(CliError::usage(CMD, "--trials must be at least 1"));
    }
    if args.error.is_empty() {
        return Err(CliError::usage(CMD, "--error needs at least one rate"));
    }
    for &e in &args.error {
        if !(0.0..=1.0).contains(&e) || e.is_nan() {
            return Err(CliError::usage(CMD, format!("error rate {e} is outside [0, 1]")));
        }
    }
    if let Some(c) = args.candidates {
        if c == 0 {
            return Err(CliError::usage(CMD, "--candidates must be at least 1"));
        }
        if args.checks == 0 {
            return Err(CliError::usage(CMD, "--checks must be at least 1"));
        }
    }

    let mut grid: Vec<(usize, Vec<SimResult>)> = Vec::with_capacity(args.steps);
    for n in 1..=args.steps {
        let mut row = Vec::with_capacity(args.error.len());
        for (col, &e) in args.error.iter().enumerate() {
            row.push(chain_cell(n, e, &args, col)?);
        }
        grid.push((n, row));
    }

    let elimination: Option<Vec<(f64, SimResult)>> = match args.candidates {
        Some(candidates) => {
            let mut rows = Vec::with_capacity(args.error.len());
            for (col, &e) in args.error.iter().enumerate() {
                let seed = args.seed.wrapping_add(0xE11_0000).wrapping_add(col as u64);
                let res = simulate_elimination(candidates, args.checks, e, args.trials, seed)
                    .map_err(run_err)?;
                rows.push((e, res));
            }
            Some(rows)
        }
        None => None,
    };

    if args.csv {
        println!("steps,error,estimate,std_error,exact");
        for (n, row) in &grid {
            for (&e, res) in args.error.iter().zip(row) {
                println!(
                    "{n},{e},{:.6},{:.6},{:.6}",
                    res.estimate, res.std_error, res.closed_form
                );
            }
        }
        if let Some(rows) = &elimination {
            println!();
            println!("candidates,checks,error,estimate,std_error,exact");
            for (e, res) in rows {
                println!(
                    "{},{},{e},{:.6},{:.6},{:.6}",
                    args.candidates.unwrap_or(0),
                    args.checks,
                    res.estimate,
                    res.std_error,
                    res.closed_form
                );
            }
        }
        return Ok(());
    }

    println!(
        "chain success by length, estimate (exact); trials={} seed={} window={}",
        args.trials, args.seed, args.window
    );
    let widths: Vec<usize> =
        args.error.iter().map(|e| format!("e={e}").len().max(19)).collect();
    let mut header = format!("{:>5}", "steps");
    for (e, w) in args.error.iter().zip(&widths) {
        header.push_str(&format!("  {:<w$}", format!("e={e}")));
    }
    println!("{header}");
    for (n, row) in &grid {
        let mut line = format!("{n:>5}");
        for (res, w) in row.iter().zip(&widths) {
            line.push_str(&format!(
                "  {:<w$}",
                format!("{:.6} ({:.6})", res.estimate, res.closed_form)
            ));
        }
        println!("{line}");
    }
    if let Some(rows) = &elimination {
        println!();
        println!(
            "elimination success with {} candidates, {} checks each, estimate (exact)",
            args.candidates.unwrap_or(0),
            args.checks
        );
        println!("{:>8}  {}", "error", "success");
        for (e, res) in rows {
            println!("{e:>8}  {:.6} ({:.6})", res.estimate, res.closed_form);
        }
    }
    Ok(())
}

/// Splits the input into paragraphs at blank lines, one sentence per line.
fn split_paragraphs(text: &str) -> Vec<Vec<String>> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
        } else {
            current.push(trimmed.to_string());
        }
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }
    paragraphs
}

pub fn make_parajumble(args: MakeArgs) -> Result<(), CliError> {
    const CMD: &str = "make-parajumble";
    let text = std::fs::read_to_string(&args.input).map_err(|e| {
        CliError::usage(CMD, format!("cannot read {}: {e}", args.input.display()))
    })?;
    let paragraphs = split_paragraphs(&text);
    if paragraphs.is_empty() {
        return Err(CliError::usage(
            CMD,
            "input has no paragraphs; separate them with blank lines, one sentence per line",
        ));
    }
    let mut lines = Vec::with_capacity(paragraphs.len());
    for (idx, sentences) in paragraphs.iter().enumerate() {
        let id = format!("{}-{:04}", args.id_prefix, idx + 1);
        let problem = build_parajumble(&id, sentences, args.seed.wrapping_add(idx as u64))
            .map_err(|e| CliError::usage(CMD, format!("paragraph {}: {e}", idx + 1)))?;
        lines.push(dataset_line(&DatasetItem { problem, rationale: None }));
    }
    let body = lines.join("\n") + "\n";
    match &args.out {
        Some(path) => {
            std::fs::write(path, body)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(CliError::Run)?;
            println!("wrote {} problems to {}", lines.len(), path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}
