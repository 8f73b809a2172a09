//! The elimination pipeline: plan candidate answers, infer the premises each
//! one rests on, judge those premises against the problem, drop every
//! candidate with a demonstrated contradiction, and answer from what is left.
//!
//! Each operation here performs at most one model call and returns the raw
//! exchange alongside its parsed result, so the strategy layer can record a
//! faithful trace without re-deriving prompts.

mod types;

pub use types::{
    Answer, Candidate, CandidateOrigin, CandidateStatus, EntailmentVerdict, Judgment, Premise,
    Problem, ProblemBuilder, TaskKind,
};

use crate::backend::{Backend, BackendError, ModelRequest};
use crate::extract::{extract_final_answer, ExtractionPath};
use crate::prompts::{self, names, ExemplarPair, TemplateSet};
use thiserror::Error;

/// Largest ordering task whose permutations are enumerated outright rather
/// than proposed by a planning call: 5! = 120 candidates is affordable to
/// judge, 6! is not.
pub const ENUMERATION_CAP: usize = 5;

/// Default number of answers a planning call is asked to propose.
pub const DEFAULT_PLAN_K: usize = 4;

#[derive(Debug, Error)]
pub enum IepError {
    #[error("planning reply contained no usable candidates")]
    PlanningFailed { prompt: String, response: String },
    #[error("premise reply contained no usable premises")]
    PremiseExtractionFailed { prompt: String, response: String },
    #[error("selection reply named no candidate")]
    SelectionFailed { prompt: String, response: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One prompt/response pair, kept verbatim for traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub prompt: String,
    pub response: String,
}

/// Everything the pipeline operations need to issue a call.
pub struct IepContext<'a> {
    pub backend: &'a dyn Backend,
    /// Backend for entailment judging when it differs from the planner;
    /// lets a cheap model do inference behind an expensive generator.
    pub judge_backend: Option<&'a dyn Backend>,
    pub templates: &'a TemplateSet,
    pub model_id: &'a str,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Ask for step-by-step reasoning inside each entailment judgment.
    pub cot_judging: bool,
    /// Ask for step-by-step reasoning inside the final selection call.
    pub cot_selection: bool,
    /// Worked question/answer turns prepended to answering-style calls.
    pub exemplars: &'a [ExemplarPair],
}

impl<'a> IepContext<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a TemplateSet, model_id: &'a str) -> Self {
        IepContext {
            backend,
            judge_backend: None,
            templates,
            model_id,
            max_tokens: 512,
            temperature: 0.0,
            cot_judging: false,
            cot_selection: false,
            exemplars: &[],
        }
    }

    fn judge(&self) -> &'a dyn Backend {
        self.judge_backend.unwrap_or(self.backend)
    }

    fn request(&self, prompt: &str, with_exemplars: bool) -> ModelRequest {
        let mut req = ModelRequest::user_turn(self.model_id, self.temperature, self.max_tokens, prompt);
        if with_exemplars && !self.exemplars.is_empty() {
            let mut messages = Vec::with_capacity(self.exemplars.len() * 2 + 1);
            for pair in self.exemplars {
                messages.push(crate::backend::Message::user(&pair.user));
                messages.push(crate::backend::Message::assistant(&pair.assistant));
            }
            messages.extend(req.messages);
            req.messages = messages;
        }
        req
    }

    fn call(
        &self,
        backend: &dyn Backend,
        prompt: String,
        with_exemplars: bool,
    ) -> Result<Exchange, IepError> {
        let req = self.request(&prompt, with_exemplars);
        let resp = backend.complete(&req)?;
        Ok(Exchange { prompt, response: resp.text })
    }

    fn render_common(&self, problem: &Problem) -> [(&'static str, String); 2] {
        [
            ("context", prompts::context_block(&problem.context)),
            ("question", problem.question_block()),
        ]
    }
}

fn render(
    templates: &TemplateSet,
    name: &str,
    pairs: &[(&'static str, String)],
) -> Result<String, IepError> {
    let borrowed: Vec<(&str, &str)> = pairs.iter().map(|(k, v)| (*k, v.as_str())).collect();
    templates
        .render(name, &borrowed)
        .map_err(|e| IepError::Backend(BackendError::Config(e.to_string())))
}

/// All permutations of `items` in lexicographic order of their indices.
fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(items.len());
    let mut used = vec![false; items.len()];
    fn step<T: Clone>(
        items: &[T],
        used: &mut [bool],
        current: &mut Vec<T>,
        out: &mut Vec<Vec<T>>,
    ) {
        if current.len() == items.len() {
            out.push(current.clone());
            return;
        }
        for i in 0..items.len() {
            if !used[i] {
                used[i] = true;
                current.push(items[i].clone());
                step(items, used, current, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    step(items, &mut used, &mut current, &mut out);
    out
}

/// Strips a leading enumeration marker: `1.`, `2)`, `-`, `*`, `(3)`.
fn strip_list_marker(line: &str) -> &str {
    let line = line.trim_start();
    let line = line.strip_prefix(['-', '*', '•']).unwrap_or(line);
    let line = line.trim_start();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 && digits <= 3 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(['.', ')', ':']) {
            return rest.trim_start();
        }
    }
    if let Some(rest) = line.strip_prefix('(') {
        let digits = rest.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            if let Some(rest) = rest[digits..].strip_prefix(')') {
                return rest.trim_start();
            }
        }
    }
    line.trim_start()
}

fn normalized(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Parses a planning reply into candidate contents: one candidate per
/// non-empty line, markers stripped, duplicates dropped, capped at `k`.
fn parse_planned_lines(reply: &str, k: usize) -> Vec<String> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for line in reply.lines() {
        let item = strip_list_marker(line).trim();
        if item.is_empty() {
            continue;
        }
        let norm = normalized(item);
        if seen.contains(&norm) {
            continue;
        }
        seen.push(norm);
        out.push(item.to_string());
        if out.len() == k {
            break;
        }
    }
    out
}

fn ordering_candidate(problem: &Problem, order: &[String]) -> Candidate {
    let label = order.join(" → ");
    let content = order
        .iter()
        .map(|l| problem.options[l].trim())
        .collect::<Vec<_>>()
        .join(" ");
    Candidate::new(label, content, CandidateOrigin::Enumerated)
}

/// Builds the candidate set for a problem.
///
/// Multiple-choice candidates are the problem's own options and boolean
/// tasks get the fixed yes/no pair; neither costs a model call. Ordering
/// tasks up to [`ENUMERATION_CAP`] sentences enumerate every permutation in
/// lexicographic label order. Larger orderings and free-form tasks ask the
/// model to propose up to `k` answers.
pub fn plan_candidates(
    problem: &Problem,
    k: usize,
    ctx: &IepContext,
) -> Result<(Vec<Candidate>, Option<Exchange>), IepError> {
    match problem.task_kind {
        TaskKind::MultipleChoice => {
            let candidates = problem
                .options
                .iter()
                .map(|(label, text)| Candidate::new(label, text, CandidateOrigin::Provided))
                .collect::<Vec<_>>();
            if candidates.is_empty() {
                return Err(IepError::PlanningFailed {
                    prompt: String::new(),
                    response: "multiple-choice problem has no options".into(),
                });
            }
            Ok((candidates, None))
        }
        TaskKind::Boolean => Ok((
            vec![
                Candidate::new("yes", "yes", CandidateOrigin::Provided),
                Candidate::new("no", "no", CandidateOrigin::Provided),
            ],
            None,
        )),
        TaskKind::Ordering if problem.options.len() <= ENUMERATION_CAP => {
            let labels = problem.labels();
            if labels.is_empty() {
                return Err(IepError::PlanningFailed {
                    prompt: String::new(),
                    response: "ordering problem has no sentences".into(),
                });
            }
            let candidates = permutations(&labels)
                .iter()
                .map(|order| ordering_candidate(problem, order))
                .collect();
            Ok((candidates, None))
        }
        TaskKind::Ordering | TaskKind::FreeForm => {
            let k = k.max(1);
            let mut pairs = ctx.render_common(problem).to_vec();
            pairs.push(("k", k.to_string()));
            let prompt = render(ctx.templates, names::PLANNING, &pairs)?;
            let exchange = ctx.call(ctx.backend, prompt, false)?;
            let lines = parse_planned_lines(&exchange.response, k);
            let candidates: Vec<Candidate> = if problem.task_kind == TaskKind::Ordering {
                let labels = problem.labels();
                lines
                    .iter()
                    .filter_map(|line| {
                        parse_order_line(line, &labels).map(|order| {
                            let mut c = ordering_candidate(problem, &order);
                            c.origin = CandidateOrigin::Generated;
                            c
                        })
                    })
                    .collect()
            } else {
                lines
                    .iter()
                    .enumerate()
                    .map(|(i, line)| {
                        Candidate::new((i + 1).to_string(), line, CandidateOrigin::Generated)
                    })
                    .collect()
            };
            if candidates.is_empty() {
                return Err(IepError::PlanningFailed {
                    prompt: exchange.prompt,
                    response: exchange.response,
                });
            }
            Ok((candidates, Some(exchange)))
        }
    }
}

/// Reads one proposed ordering line as a permutation of `labels`.
fn parse_order_line(line: &str, labels: &[String]) -> Option<Vec<String>> {
    let tokens: Vec<String> = line
        .replace("→", " ")
        .replace("->", " ")
        .replace(',', " ")
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_ascii_alphanumeric()).to_ascii_uppercase())
        .filter(|t| !t.is_empty())
        .collect();
    let mut sorted = tokens.clone();
    sorted.sort();
    let mut want = labels.to_vec();
    want.sort();
    (sorted == want).then_some(tokens)
}

/// Asks what must hold for `candidate` to be the correct answer and parses
/// the reply into premises: one per line, markers stripped, duplicates
/// dropped, truncated to `max_premises`. An empty parse is an error so the
/// caller can decide whether to degrade or abort.
pub fn extract_premises(
    candidate: &Candidate,
    problem: &Problem,
    max_premises: usize,
    ctx: &IepContext,
) -> Result<(Vec<Premise>, Exchange), IepError> {
    let mut pairs = ctx.render_common(problem).to_vec();
    pairs.push(("candidate", candidate_for_prompt(candidate)));
    let prompt = render(ctx.templates, names::PREMISE, &pairs)?;
    let exchange = ctx.call(ctx.backend, prompt, false)?;
    let premises: Vec<Premise> = parse_planned_lines(&exchange.response, max_premises.max(1))
        .into_iter()
        .map(Premise::new)
        .collect();
    if premises.is_empty() {
        return Err(IepError::PremiseExtractionFailed {
            prompt: exchange.prompt,
            response: exchange.response,
        });
    }
    Ok((premises, exchange))
}

/// How a candidate is shown inside prompts: label alone when it carries the
/// content (orderings, yes/no), otherwise label plus text.
fn candidate_for_prompt(candidate: &Candidate) -> String {
    if candidate.label == candidate.content || candidate.content.is_empty() {
        candidate.label.clone()
    } else if candidate.label.contains('→') {
        format!("{} ({})", candidate.label, candidate.content)
    } else {
        format!("{}: {}", candidate.label, candidate.content)
    }
}

/// First entailment keyword in the reply wins; a reply with none of the
/// three keywords is read as neutral and marked unparsed, which keeps the
/// candidate alive rather than inventing a contradiction.
pub fn parse_judgment(reply: &str) -> (Judgment, bool) {
    let lower = reply.to_lowercase();
    let hits = [
        (lower.find("entail"), Judgment::Entail),
        (lower.find("contradict"), Judgment::Contradict),
        (lower.find("neutral"), Judgment::Neutral),
    ];
    hits.into_iter()
        .filter_map(|(pos, j)| pos.map(|p| (p, j)))
        .min_by_key(|(p, _)| *p)
        .map(|(_, j)| (j, true))
        .unwrap_or((Judgment::Neutral, false))
}

/// Judges one premise against the problem with the candidate as hypothesis.
pub fn judge_entailment(
    premise: &Premise,
    candidate: &Candidate,
    problem: &Problem,
    ctx: &IepContext,
) -> Result<(EntailmentVerdict, Exchange), IepError> {
    let mut pairs = ctx.render_common(problem).to_vec();
    pairs.push(("candidate", candidate_for_prompt(candidate)));
    pairs.push(("premise", premise.text.clone()));
    let name = if ctx.cot_judging { names::JUDGE_COT } else { names::JUDGE };
    let prompt = render(ctx.templates, name, &pairs)?;
    let exchange = ctx.call(ctx.judge(), prompt, false)?;
    let (judgment, parsed_cleanly) = parse_judgment(&exchange.response);
    Ok((
        EntailmentVerdict::new(judgment, exchange.response.clone(), parsed_cleanly),
        exchange,
    ))
}

/// Product of binary premise scores; a candidate with no judged premises
/// scores 1 (nothing contradicted it, vacuously).
pub fn score_candidate(verdicts: &[EntailmentVerdict]) -> u8 {
    verdicts.iter().map(|v| v.binary_score).product()
}

/// Judges `candidate`'s premises in order, stopping at the first
/// contradiction since the product is already 0. Verdicts land on the
/// premises; the candidate's score is set from the judged prefix. Returns
/// the exchanges paired with the premise index each one judged.
pub fn judge_candidate(
    candidate: &mut Candidate,
    problem: &Problem,
    ctx: &IepContext,
) -> Result<Vec<(usize, Exchange)>, IepError> {
    let snapshot = Candidate::new(
        candidate.label.clone(),
        candidate.content.clone(),
        candidate.origin,
    );
    let mut exchanges = Vec::new();
    let mut verdicts: Vec<EntailmentVerdict> = Vec::new();
    for idx in 0..candidate.premises.len() {
        let premise = candidate.premises[idx].clone();
        let (verdict, exchange) = judge_entailment(&premise, &snapshot, problem, ctx)?;
        let stop = verdict.judgment == Judgment::Contradict;
        candidate.premises[idx].verdict = Some(verdict.clone());
        verdicts.push(verdict);
        exchanges.push((idx, exchange));
        if stop {
            break;
        }
    }
    candidate.score = Some(score_candidate(&verdicts));
    Ok(exchanges)
}

/// Marks every candidate with score 0 eliminated. Order and length are
/// untouched; unjudged candidates (score `None`) stay active.
pub fn eliminate(candidates: &mut [Candidate]) {
    for candidate in candidates.iter_mut() {
        if candidate.score == Some(0) {
            candidate.status = CandidateStatus::Eliminated;
        }
    }
}

/// Which route produced the final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPath {
    /// Exactly one candidate survived; no call needed.
    SoleSurvivor,
    /// Several survived; a final call chose among them.
    FinalCall,
    /// Everything was eliminated; a final call re-ran over all candidates.
    FallbackAllEliminated,
}

#[derive(Debug, Clone)]
pub struct SelectOutcome {
    pub answer: Answer,
    pub chosen_label: String,
    pub path: SelectionPath,
    pub exchange: Option<Exchange>,
    pub flags: Vec<String>,
    /// True when the reply had no marker and the answer came from the
    /// last-parseable-token scan.
    pub fallback_extraction: bool,
}

fn answer_from_candidate(candidate: &Candidate, problem: &Problem) -> Answer {
    match problem.task_kind {
        TaskKind::MultipleChoice => Answer::MultipleChoice(candidate.label.clone()),
        TaskKind::Boolean => Answer::Boolean(candidate.label == "yes"),
        TaskKind::Ordering => Answer::Ordering(
            candidate
                .label
                .split("→")
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect(),
        ),
        TaskKind::FreeForm => Answer::FreeForm(candidate.content.clone()),
    }
}

fn matches_candidate(answer: &Answer, candidate: &Candidate, problem: &Problem) -> bool {
    match (answer, problem.task_kind) {
        (Answer::MultipleChoice(label), TaskKind::MultipleChoice) => {
            label.eq_ignore_ascii_case(&candidate.label)
        }
        (Answer::Boolean(b), TaskKind::Boolean) => *b == (candidate.label == "yes"),
        (Answer::Ordering(order), TaskKind::Ordering) => {
            answer_from_candidate(candidate, problem) == Answer::Ordering(order.clone())
        }
        (Answer::FreeForm(text), TaskKind::FreeForm) => {
            normalized(text) == normalized(&candidate.content)
                || text.trim() == candidate.label
        }
        _ => false,
    }
}

fn render_candidate_list(candidates: &[&Candidate]) -> String {
    candidates
        .iter()
        .map(|c| format!("- {}", candidate_for_prompt(c)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Picks the final answer from the elimination result.
///
/// A sole survivor is returned outright with no model call. With several
/// survivors, one final call rethinks just those candidates. If nothing
/// survived, the same call runs over every original candidate and the
/// outcome is flagged `all_eliminated` and `degraded_confidence`.
pub fn select_answer(
    candidates: &[Candidate],
    problem: &Problem,
    ctx: &IepContext,
) -> Result<SelectOutcome, IepError> {
    let survivors: Vec<&Candidate> = candidates.iter().filter(|c| c.is_active()).collect();
    if survivors.len() == 1 {
        let chosen = survivors[0];
        return Ok(SelectOutcome {
            answer: answer_from_candidate(chosen, problem),
            chosen_label: chosen.label.clone(),
            path: SelectionPath::SoleSurvivor,
            exchange: None,
            flags: Vec::new(),
            fallback_extraction: false,
        });
    }

    let (pool, path, mut flags) = if survivors.is_empty() {
        (
            candidates.iter().collect::<Vec<_>>(),
            SelectionPath::FallbackAllEliminated,
            vec!["all_eliminated".to_string(), "degraded_confidence".to_string()],
        )
    } else {
        (survivors, SelectionPath::FinalCall, Vec::new())
    };
    if pool.is_empty() {
        return Err(IepError::SelectionFailed {
            prompt: String::new(),
            response: "no candidates to select from".into(),
        });
    }

    let mut pairs = ctx.render_common(problem).to_vec();
    pairs.push(("candidates", render_candidate_list(&pool)));
    let name = if ctx.cot_selection { names::SELECT_COT } else { names::SELECT };
    let prompt = render(ctx.templates, name, &pairs)?;
    let exchange = ctx.call(ctx.backend, prompt, true)?;

    let extraction = extract_final_answer(&exchange.response, problem).ok();
    let chosen = extraction.as_ref().and_then(|ex| {
        pool.iter()
            .find(|c| matches_candidate(&ex.answer, c, problem))
            .copied()
    });
    // An answer that parsed but matches no listed candidate is rejected:
    // the selection stage must pick from the pool it was shown.
    let Some(chosen) = chosen else {
        return Err(IepError::SelectionFailed {
            prompt: exchange.prompt,
            response: exchange.response,
        });
    };
    let fallback_extraction = extraction
        .map(|ex| ex.path == ExtractionPath::Fallback)
        .unwrap_or(false);
    if fallback_extraction {
        flags.push("fallback_extraction".to_string());
    }
    Ok(SelectOutcome {
        answer: answer_from_candidate(chosen, problem),
        chosen_label: chosen.label.clone(),
        path,
        exchange: Some(exchange),
        flags,
        fallback_extraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;

    fn ctx<'a>(backend: &'a ScriptedBackend, templates: &'a TemplateSet) -> IepContext<'a> {
        IepContext::new(backend, templates, "scripted-model")
    }

    fn ordering_problem(n: usize) -> Problem {
        let mut b = ProblemBuilder::ordering("ord", "Arrange the sentences coherently.");
        for (i, text) in ["one", "two", "three", "four", "five", "six"]
            .iter()
            .take(n)
            .enumerate()
        {
            let label = char::from(b'A' + i as u8).to_string();
            b = b.option(&label, text);
        }
        b.build()
    }

    #[test]
    fn permutations_are_lexicographic_and_complete() {
        let perms = permutations(&["A", "B", "C"]);
        assert_eq!(perms.len(), 6);
        assert_eq!(perms[0], vec!["A", "B", "C"]);
        assert_eq!(perms[1], vec!["A", "C", "B"]);
        assert_eq!(perms[5], vec!["C", "B", "A"]);
    }

    #[test]
    fn plan_multiple_choice_uses_options_without_calls() {
        let backend = ScriptedBackend::new();
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::multiple_choice("m", "Q?")
            .option("A", "one")
            .option("B", "two")
            .build();
        let (cands, exchange) = plan_candidates(&problem, 4, &ctx(&backend, &templates)).unwrap();
        assert!(exchange.is_none());
        assert_eq!(backend.calls_made(), 0);
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].label, "A");
        assert_eq!(cands[0].origin, CandidateOrigin::Provided);
    }

    #[test]
    fn plan_boolean_synthesizes_yes_no() {
        let backend = ScriptedBackend::new();
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::boolean("b", "Is it?").build();
        let (cands, _) = plan_candidates(&problem, 4, &ctx(&backend, &templates)).unwrap();
        assert_eq!(
            cands.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(),
            vec!["yes", "no"]
        );
        assert_eq!(backend.calls_made(), 0);
    }

    #[test]
    fn plan_small_ordering_enumerates_all() {
        let backend = ScriptedBackend::new();
        let templates = TemplateSet::builtin();
        let problem = ordering_problem(3);
        let (cands, exchange) = plan_candidates(&problem, 4, &ctx(&backend, &templates)).unwrap();
        assert!(exchange.is_none());
        assert_eq!(cands.len(), 6);
        assert_eq!(cands[0].label, "A → B → C");
        assert_eq!(cands[0].content, "one two three");
        assert!(cands.iter().all(|c| c.origin == CandidateOrigin::Enumerated));
    }

    #[test]
    fn plan_large_ordering_asks_model() {
        let backend = ScriptedBackend::with_queue(vec![
            "1. A -> B -> C -> D -> E -> F\n2. F, E, D, C, B, A\n3. not an ordering".to_string(),
        ]);
        let templates = TemplateSet::builtin();
        let problem = ordering_problem(6);
        let (cands, exchange) = plan_candidates(&problem, 4, &ctx(&backend, &templates)).unwrap();
        assert!(exchange.is_some());
        assert_eq!(backend.calls_made(), 1);
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].label, "A → B → C → D → E → F");
        assert_eq!(cands[1].label, "F → E → D → C → B → A");
        assert!(cands.iter().all(|c| c.origin == CandidateOrigin::Generated));
    }

    #[test]
    fn plan_free_form_dedupes_and_caps() {
        let backend = ScriptedBackend::with_queue(vec![
            "1. Paris\n2. paris\n3. Lyon\n4. Nice\n5. Toulouse".to_string(),
        ]);
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::free_form("f", "Which city?").build();
        let (cands, _) = plan_candidates(&problem, 3, &ctx(&backend, &templates)).unwrap();
        assert_eq!(
            cands.iter().map(|c| c.content.as_str()).collect::<Vec<_>>(),
            vec!["Paris", "Lyon", "Nice"]
        );
        assert_eq!(cands[0].label, "1");
    }

    #[test]
    fn plan_free_form_garbage_reply_errors() {
        let backend = ScriptedBackend::with_queue(vec!["\n\n   \n".to_string()]);
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::free_form("f", "Which city?").build();
        let err = plan_candidates(&problem, 3, &ctx(&backend, &templates)).unwrap_err();
        assert!(matches!(err, IepError::PlanningFailed { .. }));
    }

    #[test]
    fn premises_parse_dedupe_and_truncate() {
        let backend = ScriptedBackend::with_queue(vec![
            "1. It rains.\n2. It rains.\n3. Ground is wet.\n4. Sky is grey.\n5. Extra.".to_string(),
        ]);
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::boolean("b", "Is it raining?").build();
        let candidate = Candidate::new("yes", "yes", CandidateOrigin::Provided);
        let (premises, _) =
            extract_premises(&candidate, &problem, 3, &ctx(&backend, &templates)).unwrap();
        assert_eq!(
            premises.iter().map(|p| p.text.as_str()).collect::<Vec<_>>(),
            vec!["It rains.", "Ground is wet.", "Sky is grey."]
        );
    }

    #[test]
    fn judgment_first_keyword_wins() {
        assert_eq!(parse_judgment("ENTAIL"), (Judgment::Entail, true));
        assert_eq!(parse_judgment("it contradicts, not entails"), (Judgment::Contradict, true));
        assert_eq!(
            parse_judgment("Entailment holds, no contradiction."),
            (Judgment::Entail, true)
        );
        assert_eq!(parse_judgment("beats me"), (Judgment::Neutral, false));
    }

    #[test]
    fn judge_candidate_short_circuits_on_contradict() {
        let backend = ScriptedBackend::with_queue(vec![
            "ENTAIL".to_string(),
            "CONTRADICT".to_string(),
            "never consulted".to_string(),
        ]);
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::boolean("b", "Is it?").build();
        let mut candidate = Candidate::new("yes", "yes", CandidateOrigin::Provided);
        candidate.premises = vec![Premise::new("p1"), Premise::new("p2"), Premise::new("p3")];
        let exchanges =
            judge_candidate(&mut candidate, &problem, &ctx(&backend, &templates)).unwrap();
        assert_eq!(exchanges.len(), 2);
        assert_eq!(backend.calls_made(), 2);
        assert_eq!(candidate.score, Some(0));
        assert!(candidate.premises[2].verdict.is_none());
        assert_eq!(backend.queue_remaining(), 1);
    }

    #[test]
    fn empty_premise_list_scores_one() {
        assert_eq!(score_candidate(&[]), 1);
    }

    #[test]
    fn eliminate_preserves_order_and_length() {
        let mut cands = vec![
            Candidate::new("A", "a", CandidateOrigin::Provided),
            Candidate::new("B", "b", CandidateOrigin::Provided),
            Candidate::new("C", "c", CandidateOrigin::Provided),
        ];
        cands[0].score = Some(0);
        cands[1].score = Some(1);
        cands[2].score = Some(0);
        eliminate(&mut cands);
        assert_eq!(cands.len(), 3);
        assert_eq!(
            cands.iter().map(|c| c.is_active()).collect::<Vec<_>>(),
            vec![false, true, false]
        );
        assert_eq!(cands[0].label, "A");
    }

    #[test]
    fn sole_survivor_answers_without_call() {
        let backend = ScriptedBackend::new();
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::multiple_choice("m", "Q?")
            .option("A", "one")
            .option("B", "two")
            .build();
        let mut cands = vec![
            Candidate::new("A", "one", CandidateOrigin::Provided),
            Candidate::new("B", "two", CandidateOrigin::Provided),
        ];
        cands[0].score = Some(0);
        cands[1].score = Some(1);
        eliminate(&mut cands);
        let out = select_answer(&cands, &problem, &ctx(&backend, &templates)).unwrap();
        assert_eq!(out.path, SelectionPath::SoleSurvivor);
        assert_eq!(out.answer, Answer::MultipleChoice("B".into()));
        assert_eq!(backend.calls_made(), 0);
        assert!(out.exchange.is_none());
    }

    #[test]
    fn multiple_survivors_trigger_final_call() {
        let backend =
            ScriptedBackend::with_queue(vec!["So the final answer is: C".to_string()]);
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::multiple_choice("m", "Q?")
            .option("A", "one")
            .option("B", "two")
            .option("C", "three")
            .build();
        let mut cands: Vec<Candidate> = problem
            .options
            .iter()
            .map(|(l, t)| Candidate::new(l, t, CandidateOrigin::Provided))
            .collect();
        cands[1].score = Some(0);
        cands[0].score = Some(1);
        cands[2].score = Some(1);
        eliminate(&mut cands);
        let out = select_answer(&cands, &problem, &ctx(&backend, &templates)).unwrap();
        assert_eq!(out.path, SelectionPath::FinalCall);
        assert_eq!(out.answer, Answer::MultipleChoice("C".into()));
        assert_eq!(backend.calls_made(), 1);
        // The question block still shows every option, but the eliminated
        // candidate is not offered for rethinking.
        let prompt = &out.exchange.as_ref().unwrap().prompt;
        assert!(prompt.contains("- A: one"));
        assert!(prompt.contains("- C: three"));
        assert!(!prompt.contains("- B: two"));
    }

    #[test]
    fn all_eliminated_falls_back_with_flags() {
        let backend =
            ScriptedBackend::with_queue(vec!["So the final answer is: A".to_string()]);
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::multiple_choice("m", "Q?")
            .option("A", "one")
            .option("B", "two")
            .build();
        let mut cands: Vec<Candidate> = problem
            .options
            .iter()
            .map(|(l, t)| Candidate::new(l, t, CandidateOrigin::Provided))
            .collect();
        for c in &mut cands {
            c.score = Some(0);
        }
        eliminate(&mut cands);
        let out = select_answer(&cands, &problem, &ctx(&backend, &templates)).unwrap();
        assert_eq!(out.path, SelectionPath::FallbackAllEliminated);
        assert!(out.flags.iter().any(|f| f == "all_eliminated"));
        assert!(out.flags.iter().any(|f| f == "degraded_confidence"));
        assert_eq!(out.answer, Answer::MultipleChoice("A".into()));
    }

    #[test]
    fn selection_reply_off_pool_is_an_error() {
        let backend =
            ScriptedBackend::with_queue(vec!["So the final answer is: D".to_string()]);
        let templates = TemplateSet::builtin();
        let problem = ProblemBuilder::multiple_choice("m", "Q?")
            .option("A", "one")
            .option("B", "two")
            .option("C", "three")
            .option("D", "four")
            .build();
        // D was eliminated; the reply names it anyway.
        let mut cands: Vec<Candidate> = problem
            .options
            .iter()
            .map(|(l, t)| Candidate::new(l, t, CandidateOrigin::Provided))
            .collect();
        cands[3].score = Some(0);
        eliminate(&mut cands);
        let err = select_answer(&cands, &problem, &ctx(&backend, &templates)).unwrap_err();
        assert!(matches!(err, IepError::SelectionFailed { .. }));
    }

    #[test]
    fn ordering_answer_round_trips_from_label() {
        let problem = ordering_problem(3);
        let candidate = ordering_candidate(&problem, &["B".into(), "A".into(), "C".into()]);
        assert_eq!(
            answer_from_candidate(&candidate, &problem),
            Answer::Ordering(vec!["B".into(), "A".into(), "C".into()])
        );
    }
}
