//! The four answering strategies, sharing one trace format and one call
//! budget discipline: direct answering, step-by-step answering, elimination,
//! and elimination with step-by-step judging and selection.

mod trace;

pub use trace::{check_elimination_call_bound, ReasoningTrace, StageKind, StageRecord};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::backend::{Backend, BackendError, ModelRequest};
use crate::extract::{extract_final_answer, ExtractionPath};
use crate::iep::{
    self, Answer, IepContext, IepError, Problem, SelectionPath, DEFAULT_PLAN_K,
};
use crate::prompts::{self, names, ExemplarPair, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    /// One call, answer parsed from the reply.
    Standard,
    /// One call asking for step-by-step reasoning first.
    Cot,
    /// Plan, judge premises, eliminate, answer from survivors.
    Iep,
    /// Elimination with step-by-step judging and selection calls.
    IepCot,
}

impl StrategyName {
    pub const ALL: [StrategyName; 4] = [
        StrategyName::Standard,
        StrategyName::Cot,
        StrategyName::Iep,
        StrategyName::IepCot,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyName::Standard => "standard",
            StrategyName::Cot => "cot",
            StrategyName::Iep => "iep",
            StrategyName::IepCot => "iep-cot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Some(StrategyName::Standard),
            "cot" => Some(StrategyName::Cot),
            "iep" => Some(StrategyName::Iep),
            "iep-cot" | "iep_cot" | "iepcot" => Some(StrategyName::IepCot),
            _ => None,
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // pad, not write_str, so format widths apply in tables.
        f.pad(self.as_str())
    }
}

/// Tunable knobs for a strategy run. Serialized into every trace and report
/// so results are reproducible from their artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: StrategyName,
    /// Candidates requested from a planning call (generated pools only).
    pub plan_k: usize,
    /// Premises judged per candidate; extras are truncated.
    pub max_premises: usize,
    pub temperature: f64,
    /// Exemplar pairs prepended to answering-style calls.
    pub shots: usize,
}

impl StrategySpec {
    pub fn new(name: StrategyName) -> Self {
        StrategySpec {
            name,
            plan_k: DEFAULT_PLAN_K,
            max_premises: 3,
            temperature: 0.0,
            shots: 0,
        }
    }
}

/// Shared machinery for a run: where calls go and how prompts are built.
pub struct RunContext<'a> {
    pub backend: &'a dyn Backend,
    /// Separate backend for entailment judging, when configured.
    pub judge_backend: Option<&'a dyn Backend>,
    pub templates: &'a TemplateSet,
    pub model_id: &'a str,
    pub max_tokens: u32,
    pub exemplars: &'a [ExemplarPair],
}

impl<'a> RunContext<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a TemplateSet, model_id: &'a str) -> Self {
        RunContext {
            backend,
            judge_backend: None,
            templates,
            model_id,
            max_tokens: 512,
            exemplars: &[],
        }
    }

    fn iep_context(&self, spec: &StrategySpec, cot: bool) -> IepContext<'a> {
        let mut ctx = IepContext::new(self.backend, self.templates, self.model_id);
        ctx.judge_backend = self.judge_backend;
        ctx.max_tokens = self.max_tokens;
        ctx.temperature = spec.temperature;
        ctx.cot_judging = cot;
        ctx.cot_selection = cot;
        ctx.exemplars = self.exemplars;
        ctx
    }
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("reply contains no parseable answer")]
    NoAnswerFound { response: String },
    #[error(transparent)]
    Iep(#[from] IepError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("prompt template: {0}")]
    Template(#[from] crate::prompts::TemplateError),
}

impl StrategyError {
    /// True when retrying the whole problem could help (wire trouble rather
    /// than a model that answered badly).
    pub fn is_transport(&self) -> bool {
        match self {
            StrategyError::Backend(e) => e.is_transport(),
            StrategyError::Iep(IepError::Backend(e)) => e.is_transport(),
            _ => false,
        }
    }
}

fn single_call(
    problem: &Problem,
    spec: &StrategySpec,
    ctx: &RunContext,
    template: &str,
) -> Result<(String, String), StrategyError> {
    let prompt = ctx.templates.render(
        template,
        &[
            ("context", prompts::context_block(&problem.context).as_str()),
            ("question", problem.question_block().as_str()),
        ],
    )?;
    let mut messages = Vec::with_capacity(ctx.exemplars.len() * 2 + 1);
    for pair in ctx.exemplars {
        messages.push(crate::backend::Message::user(&pair.user));
        messages.push(crate::backend::Message::assistant(&pair.assistant));
    }
    messages.push(crate::backend::Message::user(&prompt));
    let request = ModelRequest {
        messages,
        model_id: ctx.model_id.to_string(),
        temperature: spec.temperature,
        max_tokens: ctx.max_tokens,
        seed_hint: None,
    };
    let response = ctx.backend.complete(&request)?;
    Ok((prompt, response.text))
}

/// Direct answering: one call, one trace stage.
pub fn run_standard(
    problem: &Problem,
    spec: &StrategySpec,
    ctx: &RunContext,
) -> Result<(Answer, ReasoningTrace), StrategyError> {
    let (prompt, response) = single_call(problem, spec, ctx, names::STANDARD)?;
    let extraction = extract_final_answer(&response, problem)
        .map_err(|_| StrategyError::NoAnswerFound { response: response.clone() })?;
    let mut trace = ReasoningTrace::new(&problem.id, spec.clone());
    trace.push(
        StageRecord::new(StageKind::Direct, extraction.answer.to_string())
            .with_exchange(prompt, response),
    );
    if extraction.path == ExtractionPath::Fallback {
        trace.flag("fallback_extraction");
    }
    trace.answer = Some(extraction.answer.clone());
    Ok((extraction.answer, trace))
}

/// Step-by-step answering: one reasoning call, then a zero-call extraction
/// stage recording what was read out of it.
pub fn run_cot(
    problem: &Problem,
    spec: &StrategySpec,
    ctx: &RunContext,
) -> Result<(Answer, ReasoningTrace), StrategyError> {
    let (prompt, response) = single_call(problem, spec, ctx, names::COT)?;
    let extraction = extract_final_answer(&response, problem)
        .map_err(|_| StrategyError::NoAnswerFound { response: response.clone() })?;
    let mut trace = ReasoningTrace::new(&problem.id, spec.clone());
    trace.push(
        StageRecord::new(StageKind::CotThink, "step-by-step reasoning")
            .with_exchange(prompt, response),
    );
    trace.push(StageRecord::new(StageKind::Select, extraction.answer.to_string()));
    if extraction.path == ExtractionPath::Fallback {
        trace.flag("fallback_extraction");
    }
    trace.answer = Some(extraction.answer.clone());
    Ok((extraction.answer, trace))
}

fn selection_path_name(path: SelectionPath) -> &'static str {
    match path {
        SelectionPath::SoleSurvivor => "sole survivor",
        SelectionPath::FinalCall => "final call",
        SelectionPath::FallbackAllEliminated => "fallback over all candidates",
    }
}

fn run_elimination(
    problem: &Problem,
    spec: &StrategySpec,
    ctx: &RunContext,
    cot: bool,
) -> Result<(Answer, ReasoningTrace), StrategyError> {
    let ictx = ctx.iep_context(spec, cot);
    let mut trace = ReasoningTrace::new(&problem.id, spec.clone());

    let (mut candidates, plan_exchange) = iep::plan_candidates(problem, spec.plan_k, &ictx)?;
    let origin = format!("{:?}", candidates[0].origin).to_lowercase();
    let mut plan_stage = StageRecord::new(
        StageKind::Plan,
        format!("{} candidates ({origin})", candidates.len()),
    );
    if let Some(ex) = plan_exchange {
        plan_stage = plan_stage.with_exchange(ex.prompt, ex.response);
    }
    trace.push(plan_stage);

    for idx in 0..candidates.len() {
        let label = candidates[idx].label.clone();
        match iep::extract_premises(&candidates[idx], problem, spec.max_premises, &ictx) {
            Ok((premises, exchange)) => {
                trace.push(
                    StageRecord::new(StageKind::Premise, format!("{} premises", premises.len()))
                        .with_exchange(exchange.prompt, exchange.response)
                        .for_candidate(&label),
                );
                candidates[idx].premises = premises;
            }
            Err(IepError::PremiseExtractionFailed { prompt, response }) => {
                // The call happened and must be accounted for; the candidate
                // is judged on nothing, which leaves it active.
                trace.push(
                    StageRecord::new(StageKind::Premise, "no usable premises")
                        .with_exchange(prompt, response)
                        .for_candidate(&label),
                );
                trace.flag(format!("premise_extraction_failed:{label}"));
            }
            Err(other) => return Err(other.into()),
        }

        let exchanges = iep::judge_candidate(&mut candidates[idx], problem, &ictx)?;
        for (premise_idx, exchange) in exchanges {
            let verdict = candidates[idx].premises[premise_idx]
                .verdict
                .as_ref()
                .expect("judged premise has a verdict");
            let parsed = if verdict.parsed_cleanly {
                verdict.judgment.to_string()
            } else {
                format!("{} (unparsed reply)", verdict.judgment)
            };
            trace.push(
                StageRecord::new(StageKind::Judge, parsed)
                    .with_exchange(exchange.prompt, exchange.response)
                    .for_candidate(&label)
                    .for_premise(premise_idx),
            );
        }
        if candidates[idx].premises.is_empty() {
            trace.flag(format!("vacuous_score:{label}"));
        }
    }

    iep::eliminate(&mut candidates);

    let outcome = iep::select_answer(&candidates, problem, &ictx)?;
    let parsed = format!("{} ({})", outcome.answer, selection_path_name(outcome.path));
    match outcome.exchange {
        Some(ex) if cot => {
            trace.push(
                StageRecord::new(StageKind::CotThink, "step-by-step selection")
                    .with_exchange(ex.prompt, ex.response),
            );
            trace.push(StageRecord::new(StageKind::Select, parsed));
        }
        Some(ex) => {
            trace.push(
                StageRecord::new(StageKind::Select, parsed).with_exchange(ex.prompt, ex.response),
            );
        }
        None => trace.push(StageRecord::new(StageKind::Select, parsed)),
    }
    for flag in outcome.flags {
        trace.flag(flag);
    }
    trace.answer = Some(outcome.answer.clone());
    Ok((outcome.answer, trace))
}

/// Elimination answering. See the crate docs for the pipeline shape.
pub fn run_iep(
    problem: &Problem,
    spec: &StrategySpec,
    ctx: &RunContext,
) -> Result<(Answer, ReasoningTrace), StrategyError> {
    run_elimination(problem, spec, ctx, false)
}

/// Elimination answering with step-by-step judging and selection.
pub fn run_iep_cot(
    problem: &Problem,
    spec: &StrategySpec,
    ctx: &RunContext,
) -> Result<(Answer, ReasoningTrace), StrategyError> {
    run_elimination(problem, spec, ctx, true)
}

/// Runs whichever strategy the spec names.
pub fn run_strategy(
    problem: &Problem,
    spec: &StrategySpec,
    ctx: &RunContext,
) -> Result<(Answer, ReasoningTrace), StrategyError> {
    match spec.name {
        StrategyName::Standard => run_standard(problem, spec, ctx),
        StrategyName::Cot => run_cot(problem, spec, ctx),
        StrategyName::Iep => run_iep(problem, spec, ctx),
        StrategyName::IepCot => run_iep_cot(problem, spec, ctx),
    }
}
