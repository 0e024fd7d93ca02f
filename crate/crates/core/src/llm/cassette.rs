//! Record/replay of backend calls as JSON Lines cassettes.
//!
//! Each line is `{prompt_sha256, request, response}`. A recording made from
//! any backend can be replayed without network access.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, LlmBackend};
use crate::error::{Error, Result};
use crate::retrieval::EmbeddingVector;

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CassetteRequest {
    Completion {
        prompt: String,
        temperature: f64,
        max_tokens: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stop: Option<Vec<String>>,
    },
    Embedding {
        input: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CassetteResponse {
    Text(String),
    Embedding(EmbeddingVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub prompt_sha256: String,
    pub request: CassetteRequest,
    pub response: CassetteResponse,
}

impl CassetteEntry {
    pub fn completion(req: &CompletionRequest, text: &str) -> Self {
        CassetteEntry {
            prompt_sha256: sha256_hex(&req.prompt),
            request: CassetteRequest::Completion {
                prompt: req.prompt.clone(),
                temperature: req.temperature,
                max_tokens: req.max_tokens,
                stop: req.stop.clone(),
            },
            response: CassetteResponse::Text(text.to_string()),
        }
    }

    pub fn embedding(input: &str, v: &EmbeddingVector) -> Self {
        CassetteEntry {
            prompt_sha256: sha256_hex(input),
            request: CassetteRequest::Embedding {
                input: input.to_string(),
            },
            response: CassetteResponse::Embedding(v.clone()),
        }
    }
}

/// Append-only, internally synchronized call journal in cassette format.
pub struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Journal {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, entry: &CassetteEntry) -> Result<()> {
        let mut line = serde_json::to_string(entry).expect("cassette entries serialize");
        line.push('\n');
        let mut f = self.file.lock().expect("poisoned");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Forwards to `inner` and journals every call.
pub struct RecordingBackend<B> {
    inner: B,
    journal: Journal,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B, journal: Journal) -> Self {
        RecordingBackend { inner, journal }
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String> {
        let text = self.inner.complete(req)?;
        self.journal
            .append(&CassetteEntry::completion(req, &text))?;
        Ok(text)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let v = self.inner.embed(text)?;
        self.journal.append(&CassetteEntry::embedding(text, &v))?;
        Ok(v)
    }

    fn embedding_model_tag(&self) -> String {
        self.inner.embedding_model_tag()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line)
                .map_err(|e| Error::schema(path, i + 1, e.to_string()))?;
            entries.push(entry);
        }
        Ok(Cassette { entries })
    }

    pub fn from_entries(entries: Vec<CassetteEntry>) -> Self {
        Cassette { entries }
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Completion {
        sha: String,
        temperature: u64,
        max_tokens: usize,
    },
    Embedding {
        sha: String,
    },
}

/// Serves responses from a cassette; a request that was never recorded is an error.
pub struct ReplayBackend {
    index: HashMap<Key, CassetteResponse>,
    model_tag: String,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        let mut index = HashMap::new();
        let mut model_tag = None;
        for e in cassette.entries {
            let key = match &e.request {
                CassetteRequest::Completion {
                    temperature,
                    max_tokens,
                    ..
                } => Key::Completion {
                    sha: e.prompt_sha256.clone(),
                    temperature: temperature.to_bits(),
                    max_tokens: *max_tokens,
                },
                CassetteRequest::Embedding { .. } => Key::Embedding {
                    sha: e.prompt_sha256.clone(),
                },
            };
            if let CassetteResponse::Embedding(v) = &e.response {
                model_tag.get_or_insert_with(|| v.model_tag.clone());
            }
            // first recording wins so replays are a pure function of the request
            index.entry(key).or_insert(e.response);
        }
        ReplayBackend {
            index,
            model_tag: model_tag.unwrap_or_else(|| "replay".to_string()),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(Cassette::load(path)?))
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String> {
        let sha = sha256_hex(&req.prompt);
        let key = Key::Completion {
            sha: sha.clone(),
            temperature: req.temperature.to_bits(),
            max_tokens: req.max_tokens,
        };
        match self.index.get(&key) {
            Some(CassetteResponse::Text(t)) => Ok(t.clone()),
            _ => Err(Error::ReplayMiss(sha)),
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let sha = sha256_hex(text);
        match self.index.get(&Key::Embedding { sha: sha.clone() }) {
            Some(CassetteResponse::Embedding(v)) => Ok(v.clone()),
            _ => Err(Error::ReplayMiss(sha)),
        }
    }

    fn embedding_model_tag(&self) -> String {
        self.model_tag.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let rec = RecordingBackend::new(ScriptedBackend::default(), Journal::open(&path).unwrap());
        let req = CompletionRequest::new(
            "S\n\nDataset: a\nConfiguration 1: x is low.\n\nrecommend 1 hyper-parameter configurations\n\nDataset: b",
            0.0,
        )
        .unwrap();
        let live = rec.complete(&req).unwrap();
        let emb = rec.embed("some words").unwrap();

        let replay = ReplayBackend::open(&path).unwrap();
        assert_eq!(replay.complete(&req).unwrap(), live);
        assert_eq!(replay.embed("some words").unwrap(), emb);
        assert_eq!(replay.embedding_model_tag(), emb.model_tag);

        let miss = CompletionRequest::new("unseen", 0.0).unwrap();
        match replay.complete(&miss) {
            Err(Error::ReplayMiss(h)) => assert_eq!(h, sha256_hex("unseen")),
            other => panic!("expected replay miss, got {other:?}"),
        }
        let hotter = CompletionRequest {
            temperature: 0.5,
            ..req
        };
        assert!(matches!(
            replay.complete(&hotter),
            Err(Error::ReplayMiss(_))
        ));
    }
}
