//! Prompt templates and rendering.
//!
//! Templates are plain text with `{name}` placeholders. The built-in set is
//! compiled into the binary; an alternate set can be loaded from a directory
//! of `.txt` files, which lets a run swap prompt wording without a rebuild.
//! Every run records the digest of the exact template text it used, so two
//! reports are comparable only when their template digests match.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Canonical template names used by the strategies.
pub mod names {
    pub const PLANNING: &str = "planning";
    pub const PREMISE: &str = "premise";
    pub const JUDGE: &str = "judge";
    pub const JUDGE_COT: &str = "judge_cot";
    pub const SELECT: &str = "select";
    pub const SELECT_COT: &str = "select_cot";
    pub const STANDARD: &str = "standard";
    pub const COT: &str = "cot";
}

const BUILTIN: &[(&str, &str)] = &[
    (names::PLANNING, include_str!("../templates/planning.txt")),
    (names::PREMISE, include_str!("../templates/premise.txt")),
    (names::JUDGE, include_str!("../templates/judge.txt")),
    (names::JUDGE_COT, include_str!("../templates/judge_cot.txt")),
    (names::SELECT, include_str!("../templates/select.txt")),
    (names::SELECT_COT, include_str!("../templates/select_cot.txt")),
    (names::STANDARD, include_str!("../templates/standard.txt")),
    (names::COT, include_str!("../templates/cot.txt")),
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template directory {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("template set is missing `{0}`")]
    Missing(&'static str),
}

/// A one-shot exemplar: a rendered problem plus its worked reply, prepended
/// to the message list as a user/assistant turn pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarPair {
    pub user: String,
    pub assistant: String,
}

/// A named set of prompt templates, keyed by template name.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl TemplateSet {
    /// The compiled-in default templates.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(name, text)| (name.to_string(), text.to_string()))
            .collect();
        TemplateSet { templates }
    }

    /// Loads every `.txt` file in `dir` as a template named by its stem.
    /// Names not present in the directory fall back to the built-in text,
    /// so a directory can override a single template.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let read = |e: std::io::Error| TemplateError::Io {
            path: dir.display().to_string(),
            source: e,
        };
        for entry in std::fs::read_dir(dir).map_err(read)? {
            let entry = entry.map_err(read)?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            set.templates.insert(stem.to_string(), text);
        }
        for (name, _) in BUILTIN {
            if !set.templates.contains_key(*name) {
                return Err(TemplateError::Missing(name));
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    /// Renders `name`, substituting each `{key}` with its value. Unknown
    /// placeholders are left verbatim so a typo is visible in the prompt
    /// rather than silently dropped.
    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut text = self.get(name)?.to_string();
        for (key, value) in values {
            text = text.replace(&format!("{{{key}}}"), value);
        }
        Ok(text.trim_end().to_string())
    }

    /// Digest over every template name and body, for run manifests.
    pub fn version_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, text) in &self.templates {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(text.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }

    /// Full copy of the template text, written next to run artifacts.
    pub fn snapshot(&self) -> &BTreeMap<String, String> {
        &self.templates
    }
}

impl fmt::Display for TemplateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} templates, digest {}",
            self.templates.len(),
            &self.version_digest()[..12]
        )
    }
}

/// Renders the context block placed ahead of the question: empty input
/// yields an empty block, so templates read naturally either way.
pub fn context_block(context: &str) -> String {
    let context = context.trim();
    if context.is_empty() {
        String::new()
    } else {
        format!("Context:\n{context}\n\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_all_names() {
        let set = TemplateSet::builtin();
        for (name, _) in BUILTIN {
            assert!(set.get(name).is_ok(), "missing builtin {name}");
        }
    }

    #[test]
    fn render_substitutes_and_leaves_unknown() {
        let set = TemplateSet::builtin();
        let out = set
            .render(names::PLANNING, &[("context", ""), ("question", "Q?"), ("k", "3")])
            .unwrap();
        assert!(out.starts_with("Q?"));
        assert!(out.contains("propose 3 possible answers"));
        assert!(!out.contains('{'));
    }

    #[test]
    fn dir_overrides_single_template() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("standard.txt"), "custom {question}").unwrap();
        let set = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.get(names::STANDARD).unwrap(), "custom {question}");
        // Untouched names keep the builtin text.
        assert_eq!(
            set.get(names::COT).unwrap(),
            TemplateSet::builtin().get(names::COT).unwrap()
        );
        // And the digest moves when any text changes.
        assert_ne!(
            set.version_digest(),
            TemplateSet::builtin().version_digest()
        );
    }

    #[test]
    fn context_block_forms() {
        assert_eq!(context_block(""), "");
        assert_eq!(context_block("  "), "");
        assert_eq!(context_block("He ran."), "Context:\nHe ran.\n\n");
    }
}
