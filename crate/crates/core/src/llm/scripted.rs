use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};

use super::{CompletionRequest, LlmBackend};
use crate::error::{Error, Result};
use crate::retrieval::{bag_of_words_embedding, EmbeddingVector, BOW_MODEL_TAG};

/// Prompts containing this phrase (case-insensitive) are treated as
/// knowledge-elicitation requests.
pub const ELICITATION_MARKER: &str = "what patterns can we observe";

#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScriptedPolicy {
    /// Echo the configurations of the first demonstrated task. Without any
    /// demonstration, repeat `default_configuration` (if set) once per
    /// requested configuration.
    #[default]
    NearestNeighborEcho,
    NearestNeighborEchoWithDefault {
        default_configuration: String,
    },
}

/// Deterministic stand-in for a language model. Its output is a pure function
/// of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    policy: ScriptedPolicy,
}

fn configuration_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*configuration\s+\d+\s*:\s*(.*)$").unwrap())
}

fn recommend_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)recommend\s+(\d+)\s").unwrap())
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy) -> Self {
        ScriptedBackend { policy }
    }

    /// Configurations of the first `Dataset:` block that has any.
    pub fn first_demonstration(prompt: &str) -> Vec<String> {
        let mut lines = prompt.lines().peekable();
        while let Some(line) = lines.next() {
            if !line.trim_start().starts_with("Dataset:") {
                continue;
            }
            let mut configs = Vec::new();
            while let Some(next) = lines.peek() {
                match configuration_re().captures(next) {
                    Some(c) => {
                        configs.push(c[1].trim_end().to_string());
                        lines.next();
                    }
                    None => break,
                }
            }
            if !configs.is_empty() {
                return configs;
            }
        }
        Vec::new()
    }

    fn suggestion(&self, prompt: &str) -> String {
        let wanted = recommend_re()
            .captures(prompt)
            .and_then(|c| c[1].parse::<usize>().ok());
        let mut configs = Self::first_demonstration(prompt);
        if configs.is_empty() {
            if let ScriptedPolicy::NearestNeighborEchoWithDefault {
                default_configuration,
            } = &self.policy
            {
                configs = vec![default_configuration.clone(); wanted.unwrap_or(1)];
            }
        }
        if let Some(n) = wanted {
            configs.truncate(n);
        }
        configs
            .iter()
            .enumerate()
            .map(|(i, c)| format!("Configuration {}: {}", i + 1, c))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn knowledge(prompt: &str) -> String {
        let digest = hex::encode(Sha256::digest(prompt.as_bytes()));
        let tag = &digest[..8];
        format!(
            "1. Configurations that performed best on the most similar datasets tend to transfer to a new dataset (observation set {tag}).\n\
             2. Keep numeric hyper-parameters near the levels that recur across the best configurations.\n\
             3. Prefer the categorical choices that appear most often among the best configurations."
        )
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String> {
        req.validate()?;
        if req.prompt.to_lowercase().contains(ELICITATION_MARKER) {
            Ok(Self::knowledge(&req.prompt))
        } else {
            Ok(self.suggestion(&req.prompt))
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let v = bag_of_words_embedding(text);
        if v.values.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidInput(format!("nothing to embed in {text:?}")));
        }
        Ok(v)
    }

    fn embedding_model_tag(&self) -> String {
        BOW_MODEL_TAG.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROMPT: &str = "Space.\n\nDataset: a\nConfiguration 1: x is low.\nConfiguration 2: x is high.\n\nDataset: b\nConfiguration 1: x is medium.\n\nBased on the examples above, recommend 3 hyper-parameter configurations for a new classification dataset\n\nDataset: q";

    #[test]
    fn echoes_first_demonstration() {
        let b = ScriptedBackend::default();
        let out = b
            .complete(&CompletionRequest::new(PROMPT, 0.0).unwrap())
            .unwrap();
        assert_eq!(
            out,
            "Configuration 1: x is low.\nConfiguration 2: x is high."
        );
    }

    #[test]
    fn default_configuration_without_demonstrations() {
        let b = ScriptedBackend::new(ScriptedPolicy::NearestNeighborEchoWithDefault {
            default_configuration: "x is medium.".into(),
        });
        let p = "Space.\n\nBased on the guidelines above, recommend 2 hyper-parameter configurations for a new classification dataset\n\nDataset: q";
        let out = b
            .complete(&CompletionRequest::new(p, 0.0).unwrap())
            .unwrap();
        assert_eq!(
            out,
            "Configuration 1: x is medium.\nConfiguration 2: x is medium."
        );
        assert_eq!(
            ScriptedBackend::default()
                .complete(&CompletionRequest::new(p, 0.0).unwrap())
                .unwrap(),
            ""
        );
    }

    #[test]
    fn elicitation_is_deterministic() {
        let b = ScriptedBackend::default();
        let p = "Dataset: a\nConfiguration 1: x is low.\n\nQ: From the examples above, what patterns can we observe?";
        let r = CompletionRequest::new(p, 0.7).unwrap();
        let a1 = b.complete(&r).unwrap();
        assert_eq!(a1, b.complete(&r).unwrap());
        assert!(a1.starts_with("1. "));
        let other = CompletionRequest::new(format!("{p} "), 0.7).unwrap();
        assert_ne!(a1, b.complete(&other).unwrap());
    }

    #[test]
    fn embed_rejects_empty_text() {
        let b = ScriptedBackend::default();
        assert!(b.embed("  ").is_err());
        assert_eq!(b.embed("a b").unwrap(), b.embed("a b").unwrap());
    }
}
