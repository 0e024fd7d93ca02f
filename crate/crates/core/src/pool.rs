//! Building the experience pool and persisting it between commands.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical::{
    best_solutions, canonicalize, CanonicalExperienceLine, Discretizers, BEST_PER_TASK,
};
use crate::error::{Error, Result};
use crate::io;
use crate::llm::LlmBackend;
use crate::retrieval::{EmbeddingVector, KnowledgeItem, PoolEntry};
use crate::space::{Direction, ExperienceRecord, SolutionSpace, Task};

pub const POOL_FILE: &str = "pool.jsonl";
pub const DISCRETIZERS_FILE: &str = "discretizers.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const KNOWLEDGE_FILE: &str = "knowledge.jsonl";

/// One line of the embedding cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingLine {
    pub task_id: String,
    pub model_tag: String,
    pub values: Vec<f64>,
}

/// One pool entry per task of `tasks` that has records, in task order, each
/// holding its best canonical experiences. Embeddings come from `cache` when
/// its model tag matches the backend's, otherwise from the backend.
pub fn build_pool(
    space: &SolutionSpace,
    tasks: &[Task],
    records: &[ExperienceRecord],
    discretizers: &Discretizers,
    direction: Direction,
    embedder: &dyn LlmBackend,
    cache: &HashMap<String, EmbeddingVector>,
) -> Result<Vec<PoolEntry>> {
    let tag = embedder.embedding_model_tag();
    tasks
        .par_iter()
        .filter_map(|task| {
            let best = best_solutions(records, &task.task_id, BEST_PER_TASK, direction);
            if best.is_empty() {
                return None;
            }
            let entry = (|| {
                let experiences = best
                    .iter()
                    .map(|r| canonicalize(r, space, discretizers))
                    .collect::<Result<Vec<_>>>()?;
                let embedding = match cache.get(&task.task_id) {
                    Some(v) if v.model_tag == tag => v.clone(),
                    _ => embedder.embed(&task.description)?,
                };
                Ok(PoolEntry {
                    task: task.clone(),
                    embedding,
                    experiences,
                })
            })();
            Some(entry)
        })
        .collect()
}

/// Writes `pool.jsonl`, `discretizers.json` and `embeddings.jsonl` into `dir`.
pub fn write_pool(dir: &Path, pool: &[PoolEntry], discretizers: &Discretizers) -> Result<()> {
    let lines = pool
        .iter()
        .flat_map(|e| e.experiences.iter().map(CanonicalExperienceLine::from));
    io::write_jsonl(&dir.join(POOL_FILE), lines)?;
    io::write_json(&dir.join(DISCRETIZERS_FILE), discretizers)?;
    let emb = pool.iter().map(|e| EmbeddingLine {
        task_id: e.task.task_id.clone(),
        model_tag: e.embedding.model_tag.clone(),
        values: e.embedding.values.clone(),
    });
    io::write_jsonl(&dir.join(EMBEDDINGS_FILE), emb)
}

pub fn read_embedding_cache(path: &Path) -> Result<HashMap<String, EmbeddingVector>> {
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let lines: Vec<EmbeddingLine> = io::read_jsonl(path)?;
    lines
        .into_iter()
        .map(|l| Ok((l.task_id, EmbeddingVector::new(l.values, l.model_tag)?)))
        .collect()
}

/// Reads a pool written by [`write_pool`]. Task descriptions come from `tasks`.
pub fn read_pool(
    dir: &Path,
    space: &SolutionSpace,
    tasks: &[Task],
) -> Result<(Vec<PoolEntry>, Discretizers)> {
    let pool_path = dir.join(POOL_FILE);
    if !pool_path.exists() {
        return Err(Error::Config(format!(
            "no experience pool at {}; run ingest first",
            pool_path.display()
        )));
    }
    let discretizers: Discretizers = io::read_json(&dir.join(DISCRETIZERS_FILE))?;
    let lines: Vec<CanonicalExperienceLine> = io::read_jsonl(&pool_path)?;
    let mut by_task: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for (i, line) in lines.into_iter().enumerate() {
        let id = line.task_id.clone();
        let e = line
            .resolve(space)
            .map_err(|e| Error::schema(&pool_path, i + 1, e.to_string()))?;
        by_task.entry(id).or_default().push(e);
    }
    let emb_path = dir.join(EMBEDDINGS_FILE);
    let mut embeddings = read_embedding_cache(&emb_path)?;
    let mut pool = Vec::with_capacity(by_task.len());
    for task in tasks {
        let Some(experiences) = by_task.remove(&task.task_id) else {
            continue;
        };
        let embedding = embeddings.remove(&task.task_id).ok_or_else(|| {
            Error::Config(format!(
                "{} has no embedding for task `{}`",
                emb_path.display(),
                task.task_id
            ))
        })?;
        pool.push(PoolEntry {
            task: task.clone(),
            embedding,
            experiences,
        });
    }
    if let Some(id) = by_task.keys().next() {
        return Err(Error::Config(format!(
            "{} refers to task `{id}`, which is not in the tasks file",
            pool_path.display()
        )));
    }
    Ok((pool, discretizers))
}

pub fn read_knowledge(path: &Path) -> Result<Vec<KnowledgeItem>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let items: Vec<KnowledgeItem> = io::read_jsonl(path)?;
    for (i, k) in items.iter().enumerate() {
        k.validate()
            .map_err(|e| Error::schema(path, i + 1, e.to_string()))?;
    }
    Ok(items)
}
