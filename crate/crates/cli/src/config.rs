//! Layered run configuration: defaults, then the JSON config file, then
//! environment, then flags, each layer overriding the one below it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use exclusion::backend::{BackendConfig, BASE_URL_ENV};
use exclusion::strategy::{StrategyName, StrategySpec};

/// Errors split by exit code: usage problems (1) versus run failures (2).
#[derive(Debug)]
pub enum CliError {
    Usage { message: String, command: &'static str },
    Run(anyhow::Error),
}

impl CliError {
    pub fn usage(command: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage { message: message.into(), command }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Run(err)
    }
}

/// One strategy name or a list of them; the config file accepts both.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

/// The JSON config file. Every field is optional; flags and environment
/// override whatever is set here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub strategy: Option<OneOrMany>,
    pub backend: Option<String>,
    pub judge_backend: Option<String>,
    pub model: Option<String>,
    pub dataset: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub shuffle: Option<bool>,
    pub limit: Option<usize>,
    pub shots: Option<usize>,
    pub k: Option<usize>,
    pub max_premises: Option<usize>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub concurrency: Option<usize>,
    pub abort_after: Option<u32>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>, command: &'static str) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(command, format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&raw).map_err(|e| {
            CliError::usage(command, format!("bad config {}: {e}", path.display()))
        })
    }

    pub fn strategy_names(&self, command: &'static str) -> Result<Vec<StrategyName>, CliError> {
        let Some(raw) = self.strategy.clone() else { return Ok(Vec::new()) };
        raw.into_vec()
            .iter()
            .map(|s| {
                StrategyName::parse(s).ok_or_else(|| {
                    CliError::usage(
                        command,
                        format!(
                            "unknown strategy `{s}` in config; expected one of standard, cot, iep, iep-cot"
                        ),
                    )
                })
            })
            .collect()
    }
}

/// Everything a run needs, fully concrete. Serialized into the run
/// directory and digested into the run id.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedRun {
    pub command: &'static str,
    pub strategies: Vec<StrategySpec>,
    pub backend: BackendConfig,
    pub judge_backend: Option<BackendConfig>,
    pub dataset: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub template_dir: Option<PathBuf>,
    pub seed: u64,
    pub shuffle: bool,
    pub limit: Option<usize>,
    pub shots: usize,
    pub concurrency: usize,
    pub abort_after: u32,
    pub max_tokens: u32,
}

impl ResolvedRun {
    /// Hex digest of the serialized config; the short prefix lands in the
    /// run id so artifacts are traceable to their exact settings.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Sortable, collision-resistant id: UTC timestamp plus config digest.
    pub fn run_id(&self) -> String {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        format!("{stamp}-{}", &self.digest()[..8])
    }
}

/// Resolves the backend selector: flag, then `EXCLUSION_BASE_URL`, then the
/// config file. The model id rides along into the backend config.
pub fn resolve_backend(
    flag: Option<&str>,
    file: Option<&str>,
    model_id: &str,
    max_tokens: u32,
    command: &'static str,
) -> Result<BackendConfig, CliError> {
    let env_url = std::env::var(BASE_URL_ENV).ok().filter(|u| !u.trim().is_empty());
    let selector = flag
        .map(str::to_string)
        .or_else(|| env_url.map(|url| format!("live:{url}")))
        .or_else(|| file.map(str::to_string))
        .ok_or_else(|| {
            CliError::usage(
                command,
                format!(
                    "no backend configured; pass --backend live:<url> | scripted:<path>, \
                     set {BASE_URL_ENV}, or put \"backend\" in the config file"
                ),
            )
        })?;
    let mut cfg = BackendConfig::from_selector(&selector, model_id)
        .map_err(|e| CliError::usage(command, e.to_string()))?;
    cfg.max_tokens = max_tokens;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_accepts_one_or_many_strategies() {
        let one: FileConfig = serde_json::from_str(r#"{"strategy": "iep"}"#).unwrap();
        assert_eq!(one.strategy_names("bench").unwrap(), vec![StrategyName::Iep]);
        let many: FileConfig =
            serde_json::from_str(r#"{"strategy": ["cot", "iep-cot"]}"#).unwrap();
        assert_eq!(
            many.strategy_names("bench").unwrap(),
            vec![StrategyName::Cot, StrategyName::IepCot]
        );
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<FileConfig>(r#"{"stratgy": "iep"}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn digest_is_stable_and_run_id_carries_it() {
        let resolved = ResolvedRun {
            command: "bench",
            strategies: vec![StrategySpec::new(StrategyName::Iep)],
            backend: BackendConfig::from_selector("scripted:replies.json", "m").unwrap(),
            judge_backend: None,
            dataset: Some(PathBuf::from("data.jsonl")),
            cache_dir: None,
            out_dir: PathBuf::from("runs"),
            template_dir: None,
            seed: 7,
            shuffle: false,
            limit: None,
            shots: 0,
            concurrency: 1,
            abort_after: 3,
            max_tokens: 512,
        };
        assert_eq!(resolved.digest(), resolved.digest());
        let run_id = resolved.run_id();
        assert!(run_id.ends_with(&resolved.digest()[..8]));
    }
}
