//! Elimination-based reasoning orchestration for chat-completion models.
//!
//! The pipeline plans candidate answers, extracts the premises each
//! candidate commits to, judges every premise against the context as a
//! three-way inference call (entail / contradict / neutral), eliminates
//! candidates whose premise set is contradicted, and answers from the
//! survivors. Around that core sit four runnable strategies (`standard`,
//! `cot`, `iep`, `iep_cot`), a benchmark harness with JSONL dataset loading
//! and k-shot exemplar assembly, a deterministic scripted backend plus a
//! content-addressed response cache, and a Monte Carlo simulator contrasting
//! chain error propagation with per-candidate verification.

pub mod backend;
pub mod bench;
pub mod errorsim;
pub mod extract;
pub mod iep;
pub mod prompts;
pub mod strategy;

pub use backend::{Backend, BackendConfig, BackendError, CachedBackend, HttpBackend, ScriptedBackend};
pub use bench::{evaluate, load_dataset, make_parajumble, EvalConfig, EvalReport};
pub use errorsim::{chain_success_closed, simulate_chain, simulate_elimination, ChainModel, SimResult};
pub use extract::extract_final_answer;
pub use iep::{Answer, Candidate, EntailmentVerdict, Judgment, Premise, Problem, TaskKind};
pub use prompts::TemplateSet;
pub use strategy::{run_strategy, ReasoningTrace, RunContext, StrategyName, StrategySpec};
