//! Application configuration read from TOML.
//!
//! Relative paths are resolved against the directory of the config file.
//! The API key is never part of the configuration; it is read from the
//! environment by the HTTP backend.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bench::{EvalConfig, Method};
use crate::elicitation::ElicitationConfig;
use crate::error::{Error, Result};
use crate::llm::{
    HttpBackend, HttpSettings, Journal, LlmBackend, RecordingBackend, ReplayBackend,
    ScriptedBackend, ScriptedPolicy,
};
use crate::space::Direction;
use crate::suggestion::SuggestionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Scripted,
    Replay,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "http" => Ok(BackendKind::Http),
            "scripted" => Ok(BackendKind::Scripted),
            "replay" => Ok(BackendKind::Replay),
            other => Err(Error::Config(format!(
                "unknown backend {other:?}; expected http, scripted or replay"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Cassette replayed by the replay backend.
    pub cassette: Option<PathBuf>,
    /// Where the HTTP backend journals its calls; defaults to `<pools>/journal.jsonl`.
    pub journal: Option<PathBuf>,
    /// Configuration the scripted backend repeats when a prompt has no demonstrations.
    pub default_configuration: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model: None,
            embed_model: None,
            timeout_secs: 60,
            max_retries: 3,
            max_in_flight: 4,
            cassette: None,
            journal: None,
            default_configuration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub space: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub history: Vec<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub pools: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub skip_elicitation: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            methods: Method::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            skip_elicitation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    pub direction: Direction,
    pub n_levels: usize,
    pub backend: BackendConfig,
    pub paths: Paths,
    pub suggestion: SuggestionConfig,
    pub elicitation: ElicitationConfig,
    pub eval: EvalSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 0,
            direction: Direction::HigherBetter,
            n_levels: 5,
            backend: BackendConfig::default(),
            paths: Paths::default(),
            suggestion: SuggestionConfig::default(),
            elicitation: ElicitationConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        if text.lines().any(|l| l.trim_start().starts_with("api_key")) {
            return Err(Error::Config(format!(
                "API keys are not read from config files; set {}",
                crate::llm::API_KEY_ENV
            )));
        }
        let mut cfg: AppConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        let p = &mut cfg.paths;
        for field in [
            &mut p.space,
            &mut p.tasks,
            &mut p.benchmark,
            &mut p.pools,
            &mut p.reports,
        ] {
            resolve(base_dir, field);
        }
        for h in &mut p.history {
            if h.is_relative() {
                *h = base_dir.join(&*h);
            }
        }
        resolve(base_dir, &mut cfg.backend.cassette);
        resolve(base_dir, &mut cfg.backend.journal);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.suggestion.validate()?;
        if !(2..=5).contains(&self.n_levels) {
            return Err(Error::Config("n_levels must be between 2 and 5".into()));
        }
        Ok(())
    }

    /// A path that the current command cannot do without.
    pub fn require<'a>(&self, p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::Config(format!("paths.{what} is not set")))
    }

    /// A required path that must already exist.
    pub fn existing<'a>(&self, p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        let path = self.require(p, what)?;
        if !path.exists() {
            return Err(Error::Config(format!(
                "paths.{what} = {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            suggestion: self.suggestion.clone(),
            elicitation: self.elicitation.clone(),
            skip_elicitation: self.eval.skip_elicitation,
            n_levels: self.n_levels,
        }
    }

    /// Instantiates the selected backend. HTTP calls are journaled so that a
    /// live run can later be replayed.
    pub fn build_backend(&self) -> Result<Box<dyn LlmBackend>> {
        let b = &self.backend;
        match b.kind {
            BackendKind::Scripted => Ok(Box::new(ScriptedBackend::new(
                match &b.default_configuration {
                    Some(c) => ScriptedPolicy::NearestNeighborEchoWithDefault {
                        default_configuration: c.clone(),
                    },
                    None => ScriptedPolicy::NearestNeighborEcho,
                },
            ))),
            BackendKind::Replay => {
                let path = b.cassette.as_deref().ok_or_else(|| {
                    Error::Config("backend.cassette is required for replay".into())
                })?;
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "cassette {} does not exist",
                        path.display()
                    )));
                }
                Ok(Box::new(ReplayBackend::open(path)?))
            }
            BackendKind::Http => {
                let need = |v: &Option<String>, name: &str| {
                    v.clone().ok_or_else(|| {
                        Error::Config(format!("backend.{name} is required for http"))
                    })
                };
                let mut settings = HttpSettings::new(
                    &need(&b.endpoint, "endpoint")?,
                    &need(&b.model, "model")?,
                    &need(&b.embed_model, "embed_model")?,
                );
                settings.timeout = Duration::from_secs(b.timeout_secs);
                settings.retry.max_retries = b.max_retries;
                settings.max_in_flight = b.max_in_flight;
                let journal = match (&b.journal, &self.paths.pools) {
                    (Some(j), _) => j.clone(),
                    (None, Some(p)) => p.join("journal.jsonl"),
                    (None, None) => {
                        return Err(Error::Config(
                            "http backend needs backend.journal or paths.pools for its journal"
                                .into(),
                        ))
                    }
                };
                let http = HttpBackend::from_env(settings)?;
                Ok(Box::new(RecordingBackend::new(
                    http,
                    Journal::open(journal)?,
                )))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = r#"
seed = 3
[backend]
kind = "replay"
cassette = "c.jsonl"
[paths]
pools = "pools"
history = ["h.jsonl"]
[suggestion]
k_tasks = "fill-budget"
token_budget = 1000
[eval]
methods = ["random", "copilot"]
"#;
        let cfg = AppConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.paths.pools.as_deref(), Some(Path::new("/base/pools")));
        assert_eq!(cfg.paths.history, vec![PathBuf::from("/base/h.jsonl")]);
        assert_eq!(
            cfg.backend.cassette.as_deref(),
            Some(Path::new("/base/c.jsonl"))
        );
        assert_eq!(cfg.eval.methods, vec![Method::Random, Method::Copilot]);
        assert!(cfg.build_backend().is_err());
    }

    #[test]
    fn rejects_secrets_and_unknown_keys() {
        let e = AppConfig::from_toml("[backend]\napi_key = \"x\"\n", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("EXPCOPILOT_API_KEY"));
        assert!(AppConfig::from_toml("colour = 1\n", Path::new(".")).is_err());
    }
}
