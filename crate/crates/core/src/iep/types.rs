//! Domain types for the plan / infer / eliminate / answer pipeline.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// What shape of answer a problem expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MultipleChoice,
    Boolean,
    Ordering,
    FreeForm,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::MultipleChoice => "multiple_choice",
            TaskKind::Boolean => "boolean",
            TaskKind::Ordering => "ordering",
            TaskKind::FreeForm => "free_form",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "multiple_choice" => Some(TaskKind::MultipleChoice),
            "boolean" => Some(TaskKind::Boolean),
            "ordering" => Some(TaskKind::Ordering),
            "free_form" => Some(TaskKind::FreeForm),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // pad, not write_str, so format widths apply in tables.
        f.pad(self.as_str())
    }
}

/// A final answer, shaped by the task kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    /// An option label, uppercase.
    MultipleChoice(String),
    Boolean(bool),
    /// A permutation of the problem's labels.
    Ordering(Vec<String>),
    FreeForm(String),
}

impl Answer {
    pub fn kind(&self) -> TaskKind {
        match self {
            Answer::MultipleChoice(_) => TaskKind::MultipleChoice,
            Answer::Boolean(_) => TaskKind::Boolean,
            Answer::Ordering(_) => TaskKind::Ordering,
            Answer::FreeForm(_) => TaskKind::FreeForm,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::MultipleChoice(label) => f.write_str(label),
            Answer::Boolean(true) => f.write_str("yes"),
            Answer::Boolean(false) => f.write_str("no"),
            Answer::Ordering(labels) => f.write_str(&labels.join(" → ")),
            Answer::FreeForm(text) => f.write_str(text),
        }
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub task_kind: TaskKind,
    /// Supporting passage; may be empty.
    pub context: String,
    pub question: String,
    /// Label → option text, in presentation order. For ordering tasks these
    /// are the shuffled sentences; empty for free-form.
    pub options: IndexMap<String, String>,
    pub gold: Option<Answer>,
    pub source: String,
}

impl Problem {
    pub fn labels(&self) -> Vec<String> {
        self.options.keys().cloned().collect()
    }

    /// Question plus a rendered option/sentence block, the form every prompt
    /// template receives as `{question}`.
    pub fn question_block(&self) -> String {
        if self.options.is_empty() {
            return self.question.clone();
        }
        let header = match self.task_kind {
            TaskKind::Ordering => "Sentences:",
            _ => "Options:",
        };
        let mut out = format!("{}\n{header}\n", self.question);
        for (label, text) in &self.options {
            out.push_str(&format!("{label}: {text}\n"));
        }
        out.trim_end().to_string()
    }
}

/// Convenience constructor for tests and fixtures.
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    problem: Problem,
}

impl ProblemBuilder {
    fn new(id: &str, question: &str, task_kind: TaskKind) -> Self {
        ProblemBuilder {
            problem: Problem {
                id: id.to_string(),
                task_kind,
                context: String::new(),
                question: question.to_string(),
                options: IndexMap::new(),
                gold: None,
                source: "inline".to_string(),
            },
        }
    }

    pub fn multiple_choice(id: &str, question: &str) -> Self {
        Self::new(id, question, TaskKind::MultipleChoice)
    }

    pub fn boolean(id: &str, question: &str) -> Self {
        Self::new(id, question, TaskKind::Boolean)
    }

    pub fn ordering(id: &str, question: &str) -> Self {
        Self::new(id, question, TaskKind::Ordering)
    }

    pub fn free_form(id: &str, question: &str) -> Self {
        Self::new(id, question, TaskKind::FreeForm)
    }

    pub fn context(mut self, context: &str) -> Self {
        self.problem.context = context.to_string();
        self
    }

    pub fn option(mut self, label: &str, text: &str) -> Self {
        self.problem.options.insert(label.to_string(), text.to_string());
        self
    }

    pub fn gold(mut self, answer: Answer) -> Self {
        self.problem.gold = Some(answer);
        self
    }

    pub fn source(mut self, source: &str) -> Self {
        self.problem.source = source.to_string();
        self
    }

    pub fn build(self) -> Problem {
        self.problem
    }
}

/// How a candidate entered the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    /// Taken from the problem's own options.
    Provided,
    /// Proposed by a planning model call.
    Generated,
    /// Exhaustively enumerated (small ordering tasks).
    Enumerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Active,
    Eliminated,
}

/// A possible answer under consideration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub content: String,
    pub origin: CandidateOrigin,
    pub premises: Vec<Premise>,
    /// Binary consistency score: product of judged premise scores.
    pub score: Option<u8>,
    pub status: CandidateStatus,
}

impl Candidate {
    pub fn new(label: impl Into<String>, content: impl Into<String>, origin: CandidateOrigin) -> Self {
        Candidate {
            label: label.into(),
            content: content.into(),
            origin,
            premises: Vec::new(),
            score: None,
            status: CandidateStatus::Active,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == CandidateStatus::Active
    }
}

/// A statement that must hold if its candidate is the correct answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Premise {
    pub text: String,
    pub verdict: Option<EntailmentVerdict>,
}

impl Premise {
    pub fn new(text: impl Into<String>) -> Self {
        Premise { text: text.into(), verdict: None }
    }
}

/// Three-way inference judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Entail,
    Contradict,
    Neutral,
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Judgment::Entail => f.write_str("entail"),
            Judgment::Contradict => f.write_str("contradict"),
            Judgment::Neutral => f.write_str("neutral"),
        }
    }
}

/// A judged premise: the three-way call, its binary collapse, and the raw
/// model text it was parsed from. Only a demonstrated contradiction scores 0;
/// neutral keeps the candidate and is recorded for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentVerdict {
    pub judgment: Judgment,
    pub binary_score: u8,
    pub raw_text: String,
    pub parsed_cleanly: bool,
}

impl EntailmentVerdict {
    pub fn new(judgment: Judgment, raw_text: impl Into<String>, parsed_cleanly: bool) -> Self {
        let binary_score = match judgment {
            Judgment::Contradict => 0,
            Judgment::Entail | Judgment::Neutral => 1,
        };
        EntailmentVerdict { judgment, binary_score, raw_text: raw_text.into(), parsed_cleanly }
    }
}
