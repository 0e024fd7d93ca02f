//! A loaded experience pool ready to answer suggestion requests.

use std::collections::HashSet;
use std::path::Path;

use serde_json::{json, Value};

use crate::bench::{baseline_constant, Benchmark};
use crate::canonical::Discretizers;
use crate::config::AppConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::llm::LlmBackend;
use crate::pool::{read_knowledge, read_pool, KNOWLEDGE_FILE};
use crate::retrieval::{KnowledgeItem, PoolEntry};
use crate::space::{discrete_to_strings, Solution, SolutionSpace, Task};
use crate::suggestion::{Copilot, SuggestionPrompt, SuggestionSet};

/// Reads a task list, rejecting tasks from another space and duplicate ids.
pub fn load_tasks(path: &Path, space: &SolutionSpace) -> Result<Vec<Task>> {
    let tasks: Vec<Task> = io::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for (i, t) in tasks.iter().enumerate() {
        t.validate()
            .map_err(|e| Error::schema(path, i + 1, e.to_string()))?;
        if t.space_id != space.space_id {
            return Err(Error::schema(
                path,
                i + 1,
                format!(
                    "task `{}` is in space `{}`, expected `{}`",
                    t.task_id, t.space_id, space.space_id
                ),
            ));
        }
        if !seen.insert(t.task_id.clone()) {
            return Err(Error::schema(
                path,
                i + 1,
                format!("duplicate task `{}`", t.task_id),
            ));
        }
    }
    Ok(tasks)
}

/// A query task from either a JSON task object or a bare description.
pub fn parse_query(text: &str, space: &SolutionSpace) -> Result<Task> {
    match serde_json::from_str::<Task>(text) {
        Ok(t) => {
            t.validate()?;
            Ok(t)
        }
        Err(_) => Task::new("query", &space.space_id, text.trim()),
    }
}

pub struct Session {
    pub config: AppConfig,
    pub space: SolutionSpace,
    pub tasks: Vec<Task>,
    pub pool: Vec<PoolEntry>,
    pub discretizers: Discretizers,
    pub knowledge: Vec<KnowledgeItem>,
    /// Lookup table used for the constant fallback, when configured and in the same space.
    pub benchmark: Option<Benchmark>,
    backend: Box<dyn LlmBackend>,
}

impl Session {
    pub fn open(config: AppConfig) -> Result<Self> {
        config.validate()?;
        let space: SolutionSpace = io::read_json(config.existing(&config.paths.space, "space")?)?;
        let tasks = load_tasks(config.existing(&config.paths.tasks, "tasks")?, &space)?;
        let pools = config.existing(&config.paths.pools, "pools")?;
        let (pool, discretizers) = read_pool(pools, &space, &tasks)?;
        let knowledge = read_knowledge(&pools.join(KNOWLEDGE_FILE))?;
        let benchmark = match &config.paths.benchmark {
            Some(dir) if dir.exists() => {
                Some(Benchmark::load(dir)?).filter(|b| b.space.space_id == space.space_id)
            }
            _ => None,
        };
        let backend = config.build_backend()?;
        Ok(Session {
            config,
            space,
            tasks,
            pool,
            discretizers,
            knowledge,
            benchmark,
            backend,
        })
    }

    pub fn copilot(&self) -> Copilot<'_> {
        Copilot {
            space: &self.space,
            discretizers: &self.discretizers,
            pool: &self.pool,
            knowledge: &self.knowledge,
            backend: self.backend.as_ref(),
            config: &self.config.suggestion,
        }
    }

    /// Constant-baseline solutions over every benchmark task except the query.
    pub fn fallback(&self, query: &Task) -> Result<Option<Vec<Solution>>> {
        let Some(bench) = &self.benchmark else {
            return Ok(None);
        };
        let ids: Vec<&str> = bench
            .tasks
            .iter()
            .map(|t| t.task_id.as_str())
            .filter(|id| *id != query.task_id)
            .collect();
        if ids.is_empty() {
            return Ok(None);
        }
        baseline_constant(bench, &ids, self.config.suggestion.n_suggestions).map(Some)
    }

    pub fn prompt(&self, query: &Task) -> Result<SuggestionPrompt> {
        self.copilot()
            .prompt_for(query, &HashSet::from([query.task_id.clone()]))
    }

    pub fn suggest(&self, query: &Task) -> Result<SuggestionSet> {
        let fallback = self.fallback(query)?;
        self.copilot().suggest(
            query,
            &HashSet::from([query.task_id.clone()]),
            fallback.as_deref(),
        )
    }
}

/// One JSON object per suggestion, ranked from 1.
pub fn suggestion_records(set: &SuggestionSet) -> Vec<Value> {
    set.suggestions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "rank": i + 1,
                "task_id": set.task_id,
                "space_id": s.solution.space_id(),
                "source": s.source,
                "discrete": s.discrete.as_ref().map(discrete_to_strings),
                "values": s.solution.values(),
            })
        })
        .collect()
}
