//! Pulls a structured answer out of free-form model text.
//!
//! Replies are expected to end with a marker line of the form
//! `So the final answer is: <answer>`. When the marker is present the text
//! after its last occurrence is parsed and nothing else is consulted; when
//! it is absent, a kind-specific fallback scans the whole reply for the last
//! thing that parses. Free-form answers have no fallback: without the marker
//! any sentence would "parse", so the marker is required there.

use crate::iep::{Answer, Problem, TaskKind};
use thiserror::Error;

/// Marker phrase searched for case-insensitively; the last occurrence wins
/// so a reply that restates the instruction mid-thought is still read from
/// its actual conclusion.
pub const ANSWER_MARKER: &str = "final answer is";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionPath {
    /// Parsed from the text after the marker phrase.
    Marker,
    /// Marker absent; parsed from the last parseable token in the reply.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub answer: Answer,
    pub path: ExtractionPath,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("reply contains no parseable answer")]
pub struct NoAnswerFound;

/// Last case-insensitive occurrence of `needle` (ASCII) in `haystack`,
/// returned as the byte offset one past the match.
fn rfind_ci_end(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() {
        return None;
    }
    (0..=h.len() - n.len())
        .rev()
        .find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
        .map(|i| i + n.len())
}

fn clean_token(token: &str) -> &str {
    token.trim_matches(|c: char| "()[]{}.:,;!?\"'*`".contains(c))
}

/// Splits on arrows, commas, and whitespace; the forms `B → A → C`,
/// `B -> A -> C`, `B, A, C`, and `B A C` all tokenize identically.
fn ordering_tokens(text: &str) -> Vec<String> {
    text.replace("→", " ")
        .replace("->", " ")
        .replace(',', " ")
        .split_whitespace()
        .map(clean_token)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reads a label sequence from `text`: the first contiguous run of label
/// tokens that uses every label exactly once. Runs keep prose like
/// "Final order:" from hiding a sequence, while disjoint mentions ("A then
/// B then C") never count as one. `strict_case` requires tokens to appear
/// uppercase in the raw text, which keeps the fallback scan from mistaking
/// prose for a sequence.
fn parse_ordering(text: &str, labels: &[String], strict_case: bool) -> Option<Vec<String>> {
    let mut want: Vec<String> = labels.to_vec();
    want.sort();
    let is_complete = |run: &[String]| {
        let mut seen = run.to_vec();
        seen.sort();
        seen == want
    };
    let mut run: Vec<String> = Vec::new();
    for token in ordering_tokens(text) {
        let upper = token.to_ascii_uppercase();
        if labels.contains(&upper) && (!strict_case || token == upper) {
            run.push(upper);
        } else {
            if is_complete(&run) {
                return Some(run);
            }
            run.clear();
        }
    }
    is_complete(&run).then_some(run)
}

/// Reads an option label from `tokens`: a bare label letter, a decorated one
/// like `(b)` or `B.`, or one announced by a preceding "option"/"answer".
/// `last` picks the scan direction, letting the marker path take the first
/// match after the marker and the fallback take the final mention.
fn parse_option(tokens: &[&str], labels: &[String], last: bool) -> Option<String> {
    let mut found = None;
    let mut prev_announces = false;
    for raw in tokens {
        let cleaned = clean_token(raw);
        let decorated = cleaned.len() != raw.len();
        let mut hit = None;
        if cleaned.chars().count() == 1 && cleaned.chars().all(|c| c.is_ascii_alphabetic()) {
            let upper = cleaned.to_ascii_uppercase();
            if labels.contains(&upper) && (cleaned == upper || decorated || prev_announces) {
                hit = Some(upper);
            }
        }
        prev_announces = matches!(
            cleaned.to_ascii_lowercase().as_str(),
            "option" | "answer" | "choice"
        );
        if let Some(h) = hit {
            if last {
                found = Some(h);
            } else {
                return Some(h);
            }
        }
    }
    found
}

fn parse_boolean(tokens: &[&str], last: bool) -> Option<bool> {
    let mut found = None;
    for raw in tokens {
        let hit = match clean_token(raw).to_ascii_lowercase().as_str() {
            "yes" | "true" => Some(true),
            "no" | "false" => Some(false),
            _ => None,
        };
        if let Some(h) = hit {
            if last {
                found = Some(h);
            } else {
                return Some(h);
            }
        }
    }
    found
}

/// Text after the marker: the rest of the marker's line, or the next
/// non-empty line when the marker ends its line.
fn marker_tail(text: &str, marker_end: usize) -> String {
    let tail = text[marker_end..].trim_start_matches([':', ' ', '\t']);
    for line in tail.lines() {
        if !line.trim().is_empty() {
            return line.trim().to_string();
        }
    }
    String::new()
}

fn parse_marker_tail(tail: &str, problem: &Problem) -> Option<Answer> {
    let tokens: Vec<&str> = tail.split_whitespace().collect();
    match problem.task_kind {
        TaskKind::MultipleChoice => {
            parse_option(&tokens, &problem.labels(), false).map(Answer::MultipleChoice)
        }
        TaskKind::Boolean => parse_boolean(&tokens, false).map(Answer::Boolean),
        TaskKind::Ordering => {
            parse_ordering(tail, &problem.labels(), false).map(Answer::Ordering)
        }
        TaskKind::FreeForm => {
            let trimmed = tail.trim().trim_end_matches('.').trim();
            (!trimmed.is_empty()).then(|| Answer::FreeForm(trimmed.to_string()))
        }
    }
}

fn parse_fallback(text: &str, problem: &Problem) -> Option<Answer> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    match problem.task_kind {
        TaskKind::MultipleChoice => {
            parse_option(&tokens, &problem.labels(), true).map(Answer::MultipleChoice)
        }
        TaskKind::Boolean => parse_boolean(&tokens, true).map(Answer::Boolean),
        TaskKind::Ordering => {
            let labels = problem.labels();
            text.lines()
                .rev()
                .find_map(|line| parse_ordering(line, &labels, true))
                .map(Answer::Ordering)
        }
        TaskKind::FreeForm => None,
    }
}

/// Extracts the final answer from a model reply. See the module docs for the
/// marker and fallback rules; the returned path records which one fired.
pub fn extract_final_answer(text: &str, problem: &Problem) -> Result<Extraction, NoAnswerFound> {
    if let Some(end) = rfind_ci_end(text, ANSWER_MARKER) {
        let tail = marker_tail(text, end);
        return parse_marker_tail(&tail, problem)
            .map(|answer| Extraction {
                answer,
                path: ExtractionPath::Marker,
            })
            .ok_or(NoAnswerFound);
    }
    parse_fallback(text, problem)
        .map(|answer| Extraction {
            answer,
            path: ExtractionPath::Fallback,
        })
        .ok_or(NoAnswerFound)
}
