//! Reasoning traces: a faithful record of every prompt sent, every reply
//! received, and what was parsed from each, per problem.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::StrategySpec;
use crate::iep::Answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// Candidate set construction.
    Plan,
    /// Premise extraction for one candidate.
    Premise,
    /// One entailment judgment.
    Judge,
    /// A free-reasoning model call whose reply is parsed afterwards.
    CotThink,
    /// Final answer choice (a model call only when several candidates
    /// survive).
    Select,
    /// Single-call direct answering.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub kind: StageKind,
    /// Candidate label this stage concerns, when stage is per-candidate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    /// Index into the candidate's premises, for judge stages.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub premise_index: Option<usize>,
    pub prompt: String,
    pub response: String,
    /// Human-readable summary of what was parsed out of the response.
    pub parsed: String,
    /// Whether this stage consumed a model call.
    pub model_call: bool,
}

impl StageRecord {
    pub fn new(kind: StageKind, parsed: impl Into<String>) -> Self {
        StageRecord {
            kind,
            candidate: None,
            premise_index: None,
            prompt: String::new(),
            response: String::new(),
            parsed: parsed.into(),
            model_call: false,
        }
    }

    pub fn with_exchange(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.prompt = prompt.into();
        self.response = response.into();
        self.model_call = true;
        self
    }

    pub fn for_candidate(mut self, label: impl Into<String>) -> Self {
        self.candidate = Some(label.into());
        self
    }

    pub fn for_premise(mut self, index: usize) -> Self {
        self.premise_index = Some(index);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub problem_id: String,
    pub strategy: StrategySpec,
    pub stages: Vec<StageRecord>,
    /// Number of stages that consumed a model call. Kept explicit so a
    /// persisted trace can be audited without recounting.
    pub model_calls: u64,
    pub flags: BTreeSet<String>,
    pub answer: Option<Answer>,
}

impl ReasoningTrace {
    pub fn new(problem_id: impl Into<String>, strategy: StrategySpec) -> Self {
        ReasoningTrace {
            problem_id: problem_id.into(),
            strategy,
            stages: Vec::new(),
            model_calls: 0,
            flags: BTreeSet::new(),
            answer: None,
        }
    }

    pub fn push(&mut self, stage: StageRecord) {
        if stage.model_call {
            self.model_calls += 1;
        }
        self.stages.push(stage);
    }

    pub fn flag(&mut self, flag: impl Into<String>) {
        self.flags.insert(flag.into());
    }

    pub fn stage_count(&self, kind: StageKind) -> usize {
        self.stages.iter().filter(|s| s.kind == kind).count()
    }
}

/// Audits an elimination-strategy trace against its structural budget:
/// per candidate at most one premise call and at most `max_premises`
/// judgments with no judgment after a contradiction, at most one planning
/// and one selection call, and a call count that both matches the stage
/// records and stays within the worst-case bound.
pub fn check_elimination_call_bound(trace: &ReasoningTrace) -> Result<(), String> {
    let counted = trace.stages.iter().filter(|s| s.model_call).count() as u64;
    if counted != trace.model_calls {
        return Err(format!(
            "model_calls {} != {} stages marked as calls",
            trace.model_calls, counted
        ));
    }

    let max_premises = trace.strategy.max_premises;
    let mut candidates: Vec<&str> = trace
        .stages
        .iter()
        .filter_map(|s| s.candidate.as_deref())
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    for label in &candidates {
        let premise_calls = trace
            .stages
            .iter()
            .filter(|s| s.kind == StageKind::Premise && s.candidate.as_deref() == Some(*label))
            .count();
        if premise_calls > 1 {
            return Err(format!("candidate {label}: {premise_calls} premise calls"));
        }
        let judges: Vec<&StageRecord> = trace
            .stages
            .iter()
            .filter(|s| s.kind == StageKind::Judge && s.candidate.as_deref() == Some(*label))
            .collect();
        if judges.len() > max_premises {
            return Err(format!(
                "candidate {label}: {} judgments exceeds max premises {max_premises}",
                judges.len()
            ));
        }
        for early in judges.iter().take(judges.len().saturating_sub(1)) {
            if early.parsed.starts_with("contradict") {
                return Err(format!(
                    "candidate {label}: judgment after a contradiction (no short-circuit)"
                ));
            }
        }
    }

    let plan_calls = trace
        .stages
        .iter()
        .filter(|s| s.kind == StageKind::Plan && s.model_call)
        .count();
    if plan_calls > 1 {
        return Err(format!("{plan_calls} planning calls"));
    }
    let select_calls = trace
        .stages
        .iter()
        .filter(|s| {
            (s.kind == StageKind::Select || s.kind == StageKind::CotThink) && s.model_call
        })
        .count();
    if select_calls > 1 {
        return Err(format!("{select_calls} selection calls"));
    }

    let bound = plan_calls + candidates.len() * (1 + max_premises) + 1;
    if trace.model_calls > bound as u64 {
        return Err(format!(
            "{} calls exceeds bound {bound} for {} candidates",
            trace.model_calls,
            candidates.len()
        ));
    }
    Ok(())
}
